"""``enzrank`` command line: a staged batch pipeline over one work directory.

Stages read their inputs from, and write their artifacts to, the work
directory; each writes ``manifests/<stage>[.<split>].json`` recording the full
resolved configuration, its hash, the ``git describe`` string and content
hashes of inputs and outputs. Nothing time-dependent is written, so rerunning
a stage on identical inputs reproduces its outputs byte for byte.

Exit codes: 0 success, 1 usage/configuration, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import logging
import os
import subprocess
import sys
from pathlib import Path
from typing import Any, Callable

import numpy as np
import yaml

from . import __version__, align, dataio, evalrank, splitgen
from .chemgraph import SmilesError, parse_components, reaction_fingerprint
from .dataio import DataError
from .model.scorer import FeatureStore, ModelConfig, PairScorer, load_checkpoint, save_checkpoint
from .model.train import NumericalError, TrainConfig, train

logger = logging.getLogger("enzrank")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3
DIRECTION_TAGS = {"enzyme->reactions": "e2r", "reaction->enzymes": "r2e"}

_train_defaults = TrainConfig().to_dict()
_train_defaults.pop("seed")

DEFAULT_CONFIG: dict[str, Any] = {
    "seed": 0,
    "threads": None,
    "paths": {"pairs": None, "fasta": None, "reactions": None, "embeddings": None, "coords": None},
    "split": {
        "kind": "time",
        "boundary": "2010-12-31",
        "threshold": None,  # per kind: 0.6 enzyme_sim, 0.4 reaction_sim
        "test_fraction": None,  # per kind: 0.07 / 0.05 / 0.09
        "valid_fraction": 0.1,
        "k": 1000,
    },
    "negatives": {"k": 1000},
    "align": {
        "nw": {"match": 1.0, "mismatch": -1.0, "gap": -1.0},
        "sw": {"match": 2.0, "mismatch": -1.0, "gap": -2.0},
    },
    "model": ModelConfig().to_dict(),
    "train": _train_defaults,
    "eval": {"direction": "both", "partition": "test", "full_catalog": False, "baseline_threshold_factor": 0.5},
}


class UsageError(Exception):
    """Bad invocation or configuration (exit 1)."""


class MissingArtifact(UsageError):
    def __init__(self, path: Path, producer: str):
        super().__init__(f"missing {path}; run `enzrank {producer}` first")


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}")


# ----------------------------------------------------------------------- config


def _merge(base: dict, over: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        key = f"{where}{k}"
        if k not in base:
            raise UsageError(f"unknown config key {key!r}")
        if isinstance(base[k], dict):
            if not isinstance(v, dict):
                raise UsageError(f"config key {key!r} must be a mapping")
            out[k] = _merge(base[k], v, key + ".")
        else:
            out[k] = _check_type(key, base[k], v)
    return out


def _check_type(key: str, default, value):
    if default is None or value is None:
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise UsageError(f"config key {key!r} expects true/false, got {value!r}")
    elif isinstance(default, (int, float)):
        if isinstance(value, str):
            try:
                value = int(value) if isinstance(default, int) else float(value)
            except ValueError:
                pass
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise UsageError(f"config key {key!r} expects a number, got {value!r}")
        if isinstance(default, int) and not isinstance(value, int):
            raise UsageError(f"config key {key!r} expects an integer, got {value!r}")
    elif isinstance(default, list):
        if not isinstance(value, list):
            raise UsageError(f"config key {key!r} expects a list, got {value!r}")
    elif isinstance(default, str) and not isinstance(value, str):
        raise UsageError(f"config key {key!r} expects a string, got {value!r}")
    return value


def _set_path(cfg: dict, dotted: str, value) -> dict:
    over: dict = {}
    node = over
    parts = dotted.split(".")
    for p in parts[:-1]:
        node = node.setdefault(p, {})
    node[parts[-1]] = value
    return _merge(cfg, over)


def load_config(path: str | None, sets: list[str], flags: dict[str, Any]) -> dict:
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh) if str(path).endswith(".json") else yaml.safe_load(fh)
        except OSError as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from None
        except (json.JSONDecodeError, yaml.YAMLError) as exc:
            raise UsageError(f"cannot parse config {path}: {exc}") from None
        if raw is not None:
            if not isinstance(raw, dict):
                raise UsageError(f"config {path} must be a mapping")
            cfg = _merge(cfg, raw)
    for item in sets:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        cfg = _set_path(cfg, k.strip(), yaml.safe_load(v))
    for dotted, value in flags.items():
        if value is not None:
            cfg = _set_path(cfg, dotted, value)
    return cfg


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _model_config(cfg: dict) -> ModelConfig:
    try:
        return ModelConfig.from_dict(cfg["model"])
    except (TypeError, ValueError) as exc:
        raise UsageError(f"model config: {exc}") from None


def _train_config(cfg: dict) -> TrainConfig:
    try:
        return TrainConfig.from_dict({**cfg["train"], "seed": cfg["seed"]})
    except (TypeError, ValueError) as exc:
        raise UsageError(f"train config: {exc}") from None


def _params(section: dict) -> align.AlignParams:
    return align.AlignParams(float(section["match"]), float(section["mismatch"]), float(section["gap"]))


# ---------------------------------------------------------------- work directory


class WorkDir:
    def __init__(self, root: str | os.PathLike):
        self.root = Path(root)

    def path(self, *parts: str) -> Path:
        return self.root.joinpath(*parts)

    def need(self, rel: str, producer: str) -> Path:
        p = self.path(rel)
        if not p.exists():
            raise MissingArtifact(p, producer)
        return p

    def out(self, rel: str) -> Path:
        p = self.path(rel)
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    # corpus
    def corpus(self) -> dict:
        meta = json.loads(self.need("corpus/corpus.json", "ingest").read_text())
        return meta

    def pairs(self) -> dataio.PairSet:
        return dataio.load_pairs(self.need("corpus/pairs.tsv", "ingest"))

    def enzymes(self) -> list[dataio.EnzymeRecord]:
        return dataio.load_fasta(self.need("corpus/enzymes.fasta", "ingest"))

    def reactions(self) -> list[dataio.ReactionRecord]:
        return dataio.load_reactions(self.need("corpus/reactions.tsv", "ingest"))

    def manifest(self, kind: str, n_pairs: int) -> dataio.SplitManifest:
        return dataio.read_manifest(self.need(f"splits/{kind}.json", f"split --kind {kind}"), n_pairs)

    def negatives(self) -> splitgen.NegativeSet:
        return splitgen.NegativeSet.from_tsv(self.need("negatives/negatives.tsv", "mine-negatives"))


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _hash_tree(paths: list[Path], root: Path) -> dict[str, str]:
    out = {}
    for p in paths:
        files = sorted(q for q in p.rglob("*") if q.is_file()) if p.is_dir() else [p]
        for f in files:
            try:
                key = str(f.relative_to(root))
            except ValueError:
                key = str(f)
            out[key] = _sha256(f)
    return dict(sorted(out.items()))


def git_describe() -> str:
    here = Path(__file__).resolve().parent
    try:
        res = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=here, capture_output=True, text=True, timeout=10, check=False,
        )
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return res.stdout.strip() if res.returncode == 0 and res.stdout.strip() else "unknown"


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


# ------------------------------------------------------------------------ stages


def _threads(cfg: dict) -> int | None:
    return cfg.get("threads")


def cmd_ingest(cfg: dict, wd: WorkDir) -> tuple[list[Path], list[Path]]:
    paths = cfg["paths"]
    for key in ("pairs", "fasta", "reactions"):
        if not paths.get(key):
            raise UsageError(f"ingest needs --{key} (or paths.{key} in the config)")
    src = {k: Path(v) for k, v in paths.items() if v}
    for k, p in src.items():
        if not p.exists():
            raise DataError(f"{k} input {p} does not exist")
    pairs = dataio.load_pairs(src["pairs"])
    enzymes = dataio.load_fasta(src["fasta"])
    reactions = dataio.load_reactions(src["reactions"])
    for r in reactions:
        for smi in r.substrates + r.products:
            try:
                parse_components(smi)
            except SmilesError as exc:
                raise DataError(f"reaction {r.id}: cannot parse {smi!r}: {exc}") from None
    pairs.resolve([e.id for e in enzymes], [r.id for r in reactions])
    ids = {e.id for e in enzymes}
    tensors = {}
    for key in ("embeddings", "coords"):
        if key in src:
            have = {p.stem for p in src[key].glob("*.rztf")}
            missing = sorted(ids - have)
            if missing:
                logger.warning("%d enzymes have no %s tensor (first: %s)", len(missing), key, missing[:3])
            tensors[key] = {"path": str(src[key].resolve()), "present": len(ids & have)}
    dataio.write_pairs(pairs, wd.out("corpus/pairs.tsv"))
    dataio.write_fasta(enzymes, wd.out("corpus/enzymes.fasta"))
    dataio.write_reactions(reactions, wd.out("corpus/reactions.tsv"))
    meta = {
        "counts": {
            "pairs": len(pairs),
            "positive_pairs": len(pairs.positives()),
            "enzymes": len(pairs.enzyme_ids()),
            "reactions": len(pairs.reaction_ids()),
            "fasta_records": len(enzymes),
            "reaction_records": len(reactions),
        },
        "tensors": tensors,
    }
    _write_json(wd.out("corpus/corpus.json"), meta)
    logger.info("ingested %s", meta["counts"])
    return list(src.values()), [wd.path("corpus")]


def cmd_split(cfg: dict, wd: WorkDir) -> tuple[list[Path], list[Path]]:
    sp = cfg["split"]
    kind = sp["kind"]
    if kind not in dataio.SPLIT_KINDS:
        raise UsageError(f"unknown split kind {kind!r}; choose from {dataio.SPLIT_KINDS}")
    pairs = wd.pairs()
    threads = _threads(cfg)
    frac = sp["test_fraction"] if sp["test_fraction"] is not None else splitgen.DEFAULT_TEST_FRACTION[kind]
    strings = None
    if kind == "time":
        m = splitgen.split_time(pairs, sp["boundary"], sp["valid_fraction"], cfg["seed"])
    else:
        thr = sp["threshold"] if sp["threshold"] is not None else splitgen.DEFAULT_THRESHOLD[kind]
        if kind == "enzyme_sim":
            strings = {e.id: e.sequence for e in wd.enzymes()}
            m = splitgen.split_enzyme_sim(pairs, strings, thr, frac, sp["valid_fraction"], cfg["seed"], sp["k"], threads)
        else:
            strings = {r.id: r.canonical_string for r in wd.reactions()}
            m = splitgen.split_reaction_sim(
                pairs, strings, thr, frac, sp["valid_fraction"], cfg["seed"], sp["k"], _params(cfg["align"]["nw"]), threads
            )
    audit = splitgen.audit_split(m, pairs, strings, _params(cfg["align"]["nw"]), threads)
    if not audit["passed"]:
        raise DataError(f"split audit failed: {audit}")
    out = wd.out(f"splits/{kind}.json")
    dataio.write_manifest(m, out)
    _write_json(wd.out(f"splits/{kind}.audit.json"), audit)
    logger.info("split %s: train %d valid %d test %d", kind, len(m.train), len(m.valid), len(m.test))
    return [wd.path("corpus")], [out, wd.path(f"splits/{kind}.audit.json")]


def cmd_mine_negatives(cfg: dict, wd: WorkDir) -> tuple[list[Path], list[Path]]:
    pairs = wd.pairs()
    seqs = {e.id: e.sequence for e in wd.enzymes()}
    rxn = {r.id: r.canonical_string for r in wd.reactions()}
    negs = splitgen.mine_negatives(pairs, seqs, rxn, cfg["negatives"]["k"], _params(cfg["align"]["nw"]), _threads(cfg))
    out = wd.out("negatives/negatives.tsv")
    negs.to_tsv(out)
    logger.info("mined %d negatives", len(negs))
    return [wd.path("corpus")], [out]


def _read_enzyme_tensor(corpus: dict, key: str, eid: str) -> np.ndarray:
    info = corpus["tensors"].get(key)
    if info is None:
        raise DataError(f"no {key} directory was ingested (pass --{key} to `enzrank ingest`)")
    p = Path(info["path"]) / f"{eid}.rztf"
    if not p.exists():
        raise DataError(f"enzyme {eid!r}: missing {key} tensor {p}")
    return np.asarray(dataio.read_tensor(p, mmap=True).data)


def cmd_featurize(cfg: dict, wd: WorkDir) -> tuple[list[Path], list[Path]]:
    corpus = wd.corpus()
    mc = _model_config(cfg)
    pairs = wd.pairs()
    used_e = pairs.enzyme_ids()
    pooled = []
    for eid in used_e:
        emb = _read_enzyme_tensor(corpus, "embeddings", eid)
        if emb.ndim != 2:
            raise DataError(f"enzyme {eid!r}: embedding must be 2-D, got dims {emb.shape}")
        pooled.append(np.asarray(emb, dtype=np.float64).mean(axis=0))
    dims = {v.shape[0] for v in pooled}
    if len(dims) != 1:
        raise DataError(f"embedding widths differ across enzymes: {sorted(dims)}")
    reactions = {r.id: r for r in wd.reactions()}
    used_r = pairs.reaction_ids()
    fps = []
    for rid in used_r:
        r = reactions[rid]
        try:
            subs = [g for s in r.substrates for g in parse_components(s)]
            prods = [g for s in r.products for g in parse_components(s)]
        except SmilesError as exc:
            raise DataError(f"reaction {rid!r}: {exc}") from None
        fps.append(reaction_fingerprint(subs, prods, mc.fp_radius, mc.fp_bits))
    dataio.write_tensor(np.stack(pooled), wd.out("features/enzymes_pooled.rztf"))
    dataio.write_tensor(np.stack(fps).astype(np.float32), wd.out("features/reactions_fp.rztf"))
    meta = {
        "enzyme_ids": used_e,
        "reaction_ids": used_r,
        "d_plm": int(dims.pop()),
        "fp_radius": mc.fp_radius,
        "fp_bits": mc.fp_bits,
    }
    _write_json(wd.out("features/features.json"), meta)
    return [wd.path("corpus")], [wd.path("features")]


def _build_store(cfg: dict, wd: WorkDir, mc: ModelConfig) -> FeatureStore:
    corpus = wd.corpus()
    meta = json.loads(wd.need("features/features.json", "featurize").read_text())
    if meta["d_plm"] != mc.d_plm:
        raise UsageError(f"model.d_plm is {mc.d_plm} but the featurized embeddings are {meta['d_plm']} wide")
    enzymes = wd.enzymes()
    store = FeatureStore.build(wd.reactions(), enzymes)
    pooled = np.asarray(dataio.read_tensor(wd.path("features/enzymes_pooled.rztf")).data, dtype=np.float64)
    for i, eid in enumerate(meta["enzyme_ids"]):
        store.pooled[eid] = pooled[i]
    if meta["fp_radius"] == mc.fp_radius and meta["fp_bits"] == mc.fp_bits:
        fps = np.asarray(dataio.read_tensor(wd.path("features/reactions_fp.rztf")).data, dtype=np.float64)
        for i, rid in enumerate(meta["reaction_ids"]):
            store.fingerprints[f"{rid}\x00{mc.fp_radius}\x00{mc.fp_bits}"] = fps[i]
    if mc.enzyme_mode == "frame_averaged":
        for e in enzymes:
            if e.id in store.pooled:
                e.embedding = _read_enzyme_tensor(corpus, "embeddings", e.id)
                e.coords = _read_enzyme_tensor(corpus, "coords", e.id)
                e.__post_init__()
    return store


def _effective_model_config(cfg: dict, wd: WorkDir) -> dict:
    """Fill ``model.d_plm`` from the features when the config leaves the default."""
    meta_path = wd.path("features/features.json")
    if meta_path.exists() and cfg["model"]["d_plm"] == DEFAULT_CONFIG["model"]["d_plm"]:
        cfg = _set_path(cfg, "model.d_plm", json.loads(meta_path.read_text())["d_plm"])
    return cfg


def _partitioned(cfg: dict, wd: WorkDir, pairs) -> tuple[dataio.SplitManifest, dict[str, list]]:
    kind = cfg["split"]["kind"]
    m = wd.manifest(kind, len(pairs))
    parts = splitgen.partition_negatives(wd.negatives(), m, pairs)
    return m, parts


def cmd_train(cfg: dict, wd: WorkDir) -> tuple[list[Path], list[Path]]:
    kind = cfg["split"]["kind"]
    pairs = wd.pairs()
    m, parts = _partitioned(cfg, wd, pairs)
    mc = _model_config(cfg)
    tc = _train_config(cfg)
    store = _build_store(cfg, wd, mc)
    plist = list(pairs)
    tr = [plist[i] for i in m.train]
    va = [plist[i] for i in m.valid] + parts["valid"]
    out_dir = wd.path("models", kind)
    out_dir.mkdir(parents=True, exist_ok=True)
    res = train(tr, parts["train"], store, tc, mc, valid=va, log_path=out_dir / "train_log.jsonl")
    save_checkpoint(res.params, mc, out_dir / "checkpoint", {"best_epoch": res.best_epoch, "train": tc.to_dict()})
    logger.info("trained %s model; best epoch %d", kind, res.best_epoch)
    return [wd.path("corpus"), wd.path("features"), wd.path(f"splits/{kind}.json"), wd.path("negatives")], [out_dir]


def _directions(cfg: dict) -> list[str]:
    d = cfg["eval"]["direction"]
    if d == "both":
        return list(evalrank.DIRECTIONS)
    if d not in evalrank.DIRECTIONS:
        raise UsageError(f"unknown direction {d!r}; choose both or one of {evalrank.DIRECTIONS}")
    return [d]


def cmd_score(cfg: dict, wd: WorkDir) -> tuple[list[Path], list[Path]]:
    kind = cfg["split"]["kind"]
    ck = wd.need(f"models/{kind}/checkpoint/params.json", f"train --split {kind}").parent
    params, mc = load_checkpoint(ck)
    pairs = wd.pairs()
    m, parts = _partitioned(cfg, wd, pairs)
    store = _build_store(cfg, wd, mc)
    scorer = PairScorer(mc, store)
    partition = cfg["eval"]["partition"]
    negs = parts[partition]
    outs = []
    for d in _directions(cfg):
        catalog = None
        if cfg["eval"]["full_catalog"]:
            catalog = pairs.reaction_ids() if d == "enzyme->reactions" else pairs.enzyme_ids()
        sm = evalrank.score_split(scorer, params, pairs, negs, m, d, partition, catalog)
        stem = wd.out(f"scores/{kind}.{DIRECTION_TAGS[d]}")
        sm.save(stem)
        outs += [Path(f"{stem}.rztf"), Path(f"{stem}.json")]
    return [ck, wd.path(f"splits/{kind}.json"), wd.path("negatives")], outs


def _write_reports(reports: list[evalrank.MetricsReport], stem: Path) -> list[Path]:
    _write_json(Path(f"{stem}.json"), [r.to_dict() for r in reports])
    evalrank.write_reports_tsv(reports, Path(f"{stem}.tsv"))
    return [Path(f"{stem}.json"), Path(f"{stem}.tsv")]


def cmd_evaluate(cfg: dict, wd: WorkDir) -> tuple[list[Path], list[Path]]:
    kind = cfg["split"]["kind"]
    reports, ins = [], []
    for d in _directions(cfg):
        rel = f"scores/{kind}.{DIRECTION_TAGS[d]}"
        wd.need(rel + ".json", f"score --split {kind}")
        sm = evalrank.ScoreMatrix.load(wd.path(rel))
        r = evalrank.evaluate_matrix(sm, f"{kind}/{d}/model")
        r.extra["pool_size_mean"] = float(sm.pool.sum(axis=1).mean()) if sm.pool is not None else len(sm.cols)
        reports.append(r)
        ins.append(wd.path(rel + ".json"))
    return ins, _write_reports(reports, wd.out(f"reports/{kind}.model"))


def cmd_baseline(cfg: dict, wd: WorkDir) -> tuple[list[Path], list[Path]]:
    kind = cfg["split"]["kind"]
    pairs = wd.pairs()
    m, parts = _partitioned(cfg, wd, pairs)
    plist = list(pairs)
    seqs = {e.id: e.sequence for e in wd.enzymes()}
    train_pairs = [plist[i] for i in list(m.train) + list(m.valid)]
    partition = cfg["eval"]["partition"]
    part = [plist[i] for i in getattr(m, partition)]
    neg = [p for p in part if p.label == 0] + parts[partition]
    factor = float(cfg["eval"]["baseline_threshold_factor"])
    reports = []
    for d in _directions(cfg):
        r, _ = evalrank.evaluate_baseline(
            seqs, train_pairs, seqs, part, neg, d, _params(cfg["align"]["sw"]), factor, _threads(cfg),
            setting=f"{kind}/{d}/baseline",
        )
        reports.append(r)
    return [wd.path("corpus"), wd.path(f"splits/{kind}.json"), wd.path("negatives")], _write_reports(
        reports, wd.out(f"reports/{kind}.baseline")
    )


def cmd_report(cfg: dict, wd: WorkDir) -> tuple[list[Path], list[Path]]:
    found = sorted(wd.path("reports").glob("*.model.json")) + sorted(wd.path("reports").glob("*.baseline.json"))
    if not found:
        raise MissingArtifact(wd.path("reports"), "evaluate` or `enzrank baseline")
    reports = []
    for p in found:
        reports += [evalrank.MetricsReport.from_dict(d) for d in json.loads(p.read_text())]
    reports.sort(key=lambda r: r.setting)
    summary = {
        r.setting: {
            "top1": r.top_acc.get(1),
            "mean_rank": r.mean_rank,
            "mrr": r.mrr,
            "accuracy": r.accuracy,
            "auroc": r.auroc,
            "n_rows": r.n_rows,
        }
        for r in reports
    }
    _write_json(wd.out("reports/summary.json"), summary)
    evalrank.write_reports_tsv(reports, wd.out("reports/summary.tsv"))
    return found, [wd.path("reports/summary.json"), wd.path("reports/summary.tsv")]


STAGES: dict[str, tuple[Callable, str]] = {
    "ingest": (cmd_ingest, "validate and normalize the input corpus"),
    "split": (cmd_split, "generate and audit a train/valid/test split"),
    "mine-negatives": (cmd_mine_negatives, "mine similarity-restricted negative pairs"),
    "featurize": (cmd_featurize, "pool enzyme embeddings and fingerprint reactions"),
    "train": (cmd_train, "train the pair scorer on a split"),
    "score": (cmd_score, "score the held-out retrieval pools"),
    "evaluate": (cmd_evaluate, "ranking and classification metrics from the scores"),
    "baseline": (cmd_baseline, "local-alignment annotation-transfer baseline"),
    "report": (cmd_report, "collect all reports into summary tables"),
}

# flag dest -> config key
FLAGS = {
    "pairs": "paths.pairs",
    "fasta": "paths.fasta",
    "reactions": "paths.reactions",
    "embeddings": "paths.embeddings",
    "coords": "paths.coords",
    "kind": "split.kind",
    "boundary": "split.boundary",
    "threshold": "split.threshold",
    "test_fraction": "split.test_fraction",
    "valid_fraction": "split.valid_fraction",
    "split_k": "split.k",
    "neg_k": "negatives.k",
    "epochs": "train.epochs",
    "lr": "train.lr",
    "batch": "train.batch",
    "loss": "train.loss",
    "enzyme_mode": "model.enzyme_mode",
    "reaction_features": "model.reaction_features",
    "direction": "eval.direction",
    "partition": "eval.partition",
    "full_catalog": "eval.full_catalog",
    "threshold_factor": "eval.baseline_threshold_factor",
    "seed": "seed",
    "threads": "threads",
}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("-w", "--workdir", default=".", help="pipeline work directory (default: .)")
    common.add_argument("-c", "--config", help="YAML or JSON run configuration")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key (repeatable)")
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int, help="thread cap for alignment pools (default $ENZRANK_THREADS or 1)")
    common.add_argument("-v", "--verbose", action="count", default=0)

    ap = _Parser(prog="enzrank", description="Enzyme-reaction retrieval benchmark pipeline.")
    ap.add_argument("--version", action="version", version=f"enzrank {__version__}")
    sub = ap.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True
    parsers = {name: sub.add_parser(name, help=h, description=h, parents=[common]) for name, (_, h) in STAGES.items()}

    p = parsers["ingest"]
    for name in ("pairs", "fasta", "reactions", "embeddings", "coords"):
        p.add_argument(f"--{name}")
    p = parsers["split"]
    p.add_argument("--kind", "--split", dest="kind", choices=dataio.SPLIT_KINDS)
    p.add_argument("--boundary", help="time split boundary date (inclusive on the train side)")
    p.add_argument("--threshold", type=float)
    p.add_argument("--test-fraction", type=float)
    p.add_argument("--valid-fraction", type=float)
    p.add_argument("--k", dest="split_k", type=int, help="neighbor list depth for clustering")
    parsers["mine-negatives"].add_argument("--k", dest="neg_k", type=int)
    def split_arg(p):
        p.add_argument("--split", "--kind", dest="kind", choices=dataio.SPLIT_KINDS, help="which split to use")

    p = parsers["train"]
    split_arg(p)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch", type=int)
    p.add_argument("--loss", choices=("bce", "bce+contrastive"))
    p.add_argument("--enzyme-mode", choices=("pooled", "frame_averaged"))
    p.add_argument("--reaction-features", choices=("graph", "fingerprint"))
    for name in ("score", "evaluate", "baseline"):
        p = parsers[name]
        split_arg(p)
        p.add_argument("--direction", choices=("both",) + evalrank.DIRECTIONS)
    for name in ("score", "baseline"):
        parsers[name].add_argument("--partition", choices=("train", "valid", "test"))
    parsers["score"].add_argument("--full-catalog", action="store_const", const=True)
    parsers["baseline"].add_argument("--threshold-factor", type=float)
    return ap


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    flags = {FLAGS[k]: v for k, v in vars(args).items() if k in FLAGS}
    cfg = load_config(args.config, args.set, flags)
    if cfg["threads"] is None:
        cfg["threads"] = align._default_threads()
    wd = WorkDir(args.workdir)
    if args.command not in ("ingest",):
        cfg = _effective_model_config(cfg, wd)
    fn, _ = STAGES[args.command]
    inputs, outputs = fn(cfg, wd)
    tag = args.command
    if args.command in ("split", "train", "score", "evaluate", "baseline"):
        tag += "." + cfg["split"]["kind"]
    manifest = {
        "command": args.command,
        "version": __version__,
        "git_describe": git_describe(),
        "config": cfg,
        "config_hash": config_hash(cfg),
        "inputs": _hash_tree([Path(p) for p in inputs if Path(p).exists()], wd.root),
        "outputs": _hash_tree([Path(p) for p in outputs], wd.root),
    }
    _write_json(wd.out(f"manifests/{tag}.json"), manifest)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    try:
        return run(argv)
    except UsageError as exc:
        print(f"enzrank: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, SmilesError) as exc:
        print(f"enzrank: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"enzrank: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    raise SystemExit(main())
