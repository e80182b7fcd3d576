"""Ranking and classification metrics, the alignment baseline, and reports.

Ranking follows a stable descending argsort: rank 1 is the highest score and
equal scores keep column order. Mean rank and MRR average over every positive
in a row before averaging over rows, which for multi-positive rows is not the
classical first-hit MRR.
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from . import align, dataio
from .dataio import DataError, Pair, SplitManifest

logger = logging.getLogger(__name__)

KS = (1, 2, 3, 4, 5, 10, 20, 50)
TABLE_KS = (1, 2, 3, 4, 5, 10, 20)
DIRECTIONS = ("enzyme->reactions", "reaction->enzymes")
TSV_COLUMNS = (
    ["setting"]
    + [f"Top{k}" for k in TABLE_KS]
    + [f"Top{k}-N" for k in TABLE_KS]
    + ["Mean Rank", "MRR"]
)


# ------------------------------------------------------------------ score matrix


@dataclass
class ScoreMatrix:
    """Dense f32 scores with row/column ids, an optional candidate-pool mask and labels."""

    rows: list[str]
    cols: list[str]
    values: np.ndarray
    labels: np.ndarray | None = None
    pool: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float32)
        shape = (len(self.rows), len(self.cols))
        if self.values.shape != shape:
            raise DataError(f"score matrix shape {self.values.shape} does not match ids {shape}")
        if not np.all(np.isfinite(self.values)):
            raise DataError("score matrix has non-finite entries")
        for name in ("labels", "pool"):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.asarray(arr, dtype=bool)
                if arr.shape != shape:
                    raise DataError(f"{name} shape {arr.shape} does not match scores {shape}")
                setattr(self, name, arr)

    def transpose(self) -> "ScoreMatrix":
        t = lambda a: None if a is None else a.T.copy()  # noqa: E731
        return ScoreMatrix(list(self.cols), list(self.rows), self.values.T.copy(), t(self.labels), t(self.pool))

    def save(self, stem) -> None:
        """``<stem>.rztf`` holds the scores; ``<stem>.json`` the ids and sparse masks."""
        dataio.write_tensor(self.values, f"{stem}.rztf")
        meta = {"rows": self.rows, "cols": self.cols}
        for name in ("labels", "pool"):
            arr = getattr(self, name)
            meta[name] = None if arr is None else np.argwhere(arr).tolist()
        with open(f"{stem}.json", "w", encoding="utf-8") as fh:
            json.dump(meta, fh, sort_keys=True, separators=(",", ":"))
            fh.write("\n")

    @classmethod
    def load(cls, stem) -> "ScoreMatrix":
        with open(f"{stem}.json", encoding="utf-8") as fh:
            meta = json.load(fh)
        values = np.asarray(dataio.read_tensor(f"{stem}.rztf").data, dtype=np.float32)
        shape = (len(meta["rows"]), len(meta["cols"]))
        values = values.reshape(shape)

        def dense(idx):
            if idx is None:
                return None
            out = np.zeros(shape, dtype=bool)
            if idx:
                ij = np.asarray(idx, dtype=np.int64)
                out[ij[:, 0], ij[:, 1]] = True
            return out

        return cls(meta["rows"], meta["cols"], values, dense(meta["labels"]), dense(meta["pool"]))


# ------------------------------------------------------------------------ ranking


def rank_rows(scores, mask=None) -> np.ndarray:
    """1-based ranks per row; entries outside ``mask`` rank after every pooled entry."""
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 2:
        raise ValueError("scores must be a 2-D matrix")
    if np.isnan(s).any():
        raise ValueError("scores contain NaN")
    n, m = s.shape
    if mask is None:
        order = np.argsort(-s, axis=1, kind="stable")
    else:
        out_of_pool = ~np.asarray(mask, dtype=bool)
        cols = np.broadcast_to(np.arange(m), (n, m))
        order = np.lexsort((cols, -s, out_of_pool), axis=1)
    ranks = np.empty((n, m), dtype=np.int64)
    np.put_along_axis(ranks, order, np.broadcast_to(np.arange(1, m + 1), (n, m)), axis=1)
    return ranks


@dataclass
class MetricsReport:
    top_acc: dict[int, float]
    top_acc_n: dict[int, float]
    mean_rank: float
    mrr: float
    n_rows: int
    excluded_rows: int
    accuracy: float | None = None
    auroc: float | None = None
    setting: str = ""
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "setting": self.setting,
            "top_acc": {str(k): v for k, v in self.top_acc.items()},
            "top_acc_n": {str(k): v for k, v in self.top_acc_n.items()},
            "mean_rank": self.mean_rank,
            "mrr": self.mrr,
            "mrr_semantics": "mean of 1/rank over all positives per row, then mean over rows",
            "n_rows": self.n_rows,
            "excluded_rows": self.excluded_rows,
            "accuracy": self.accuracy,
            "auroc": self.auroc,
            "extra": self.extra,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "MetricsReport":
        return cls(
            {int(k): v for k, v in d["top_acc"].items()},
            {int(k): v for k, v in d["top_acc_n"].items()},
            d["mean_rank"],
            d["mrr"],
            d["n_rows"],
            d["excluded_rows"],
            d.get("accuracy"),
            d.get("auroc"),
            d.get("setting", ""),
            dict(d.get("extra", {})),
        )

    def tsv_row(self) -> list[str]:
        vals = [self.top_acc.get(k, float("nan")) for k in TABLE_KS]
        vals += [self.top_acc_n.get(k, float("nan")) for k in TABLE_KS]
        vals += [self.mean_rank, self.mrr]
        return [self.setting] + [f"{v:.4f}" for v in vals]


def write_reports_tsv(reports: Sequence[MetricsReport], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(TSV_COLUMNS)
        for r in reports:
            w.writerow(r.tsv_row())


def ranking_metrics(scores, labels, mask=None, ks: Sequence[int] = KS, setting: str = "") -> MetricsReport:
    """Top-k accuracy, top-k accuracy-N, mean rank and MRR over rows with a positive."""
    s = np.asarray(scores, dtype=np.float64)
    lab = np.asarray(labels, dtype=bool)
    if lab.shape != s.shape:
        raise ValueError(f"labels shape {lab.shape} does not match scores {s.shape}")
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        lab = lab & mask
    keep = lab.any(axis=1)
    excluded = int((~keep).sum())
    if excluded:
        logger.info("ranking_metrics: %d rows without positives excluded", excluded)
    if not keep.any():
        raise ValueError("no row has a positive label")
    s, lab = s[keep], lab[keep].astype(np.float64)
    ranks = rank_rows(s, None if mask is None else mask[keep]).astype(np.float64)
    npos = lab.sum(axis=1)
    mean_rank = float(((ranks * lab).sum(axis=1) / npos).mean())
    mrr = float(((lab / ranks).sum(axis=1) / npos).mean())
    top, top_n = {}, {}
    for k in ks:
        hits = ((ranks <= k) * lab).sum(axis=1)
        top[k] = float((hits > 0).mean())
        top_n[k] = float((hits / k).mean())
    return MetricsReport(top, top_n, mean_rank, mrr, int(keep.sum()), excluded, setting=setting)


def classification_metrics(logits, labels, threshold: float = 0.0) -> tuple[float, float | None]:
    """Accuracy at ``threshold`` and Mann-Whitney AUROC (None for single-class input)."""
    x = np.asarray(logits, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel().astype(bool)
    if x.size == 0 or x.size != y.size:
        raise ValueError("logits and labels must be non-empty and of equal length")
    acc = float(np.mean((x > threshold) == y))
    n1 = int(y.sum())
    n0 = y.size - n1
    if n1 == 0 or n0 == 0:
        return acc, None
    r = rankdata(x)  # midranks for ties
    auroc = (r[y].sum() - n1 * (n1 + 1) / 2.0) / (n1 * n0)
    return acc, float(auroc)


# ---------------------------------------------------------------------- baseline


def baseline_score(
    train_sequences: Mapping[str, str],
    train_pairs: Sequence[Pair],
    queries: Mapping[str, str],
    reaction_ids: Sequence[str],
    p: align.AlignParams = align.SW_DEFAULT,
    threshold_factor: float = 0.5,
    threads: int | None = None,
) -> tuple[ScoreMatrix, int]:
    """Annotation transfer from the best local-alignment hit in the training set.

    A train enzyme is a hit when its Smith-Waterman score reaches
    ``threshold_factor * match * min(len)``. The query inherits the annotated
    reactions of its best-scoring hits (all of them on a tie) as 1s. Returns
    the matrix and the number of all-zero (rank-uninformative) rows.
    """
    annotated: dict[str, set[str]] = {}
    for pr in train_pairs:
        if pr.label == 1:
            annotated.setdefault(pr.enzyme_id, set()).add(pr.reaction_id)
    refs = sorted(e for e in annotated if e in train_sequences)
    ref_codes = [align.encode(train_sequences[e]) for e in refs]
    col = {r: j for j, r in enumerate(reaction_ids)}
    qids = list(queries)

    def one(q: str) -> np.ndarray:
        qa = align.encode(queries[q])
        best, hits = -1.0, []
        for e, ca in zip(refs, ref_codes):
            s = align._smith_waterman(qa, ca, p.match, p.mismatch, p.gap, align._band(p.band))
            if s < threshold_factor * p.match * min(qa.shape[0], ca.shape[0]):
                continue
            if s > best:
                best, hits = s, [e]
            elif s == best:
                hits.append(e)
        row = np.zeros(len(reaction_ids), dtype=np.float32)
        for e in hits:
            for r in annotated[e]:
                if r in col:
                    row[col[r]] = 1.0
        return row

    threads = threads or align._default_threads()
    if threads > 1 and len(qids) > 1:
        with ThreadPoolExecutor(threads) as ex:
            rows = list(ex.map(one, qids))
    else:
        rows = [one(q) for q in qids]
    values = np.stack(rows) if rows else np.zeros((0, len(reaction_ids)), np.float32)
    uninformative = int((~values.any(axis=1)).sum()) if rows else 0
    return ScoreMatrix(qids, list(reaction_ids), values), uninformative


# ------------------------------------------------------------------- split pools


def retrieval_pool(
    positives: Sequence[Pair],
    negatives: Sequence[Pair],
    direction: str,
    cols: Sequence[str] | None = None,
) -> tuple[list[str], list[str], np.ndarray, np.ndarray]:
    """Row ids, column ids, label and pool masks for one retrieval direction.

    Rows are the queries with a positive; a row's pool is its positives plus its
    negatives. Passing ``cols`` ranks every row against the whole catalog instead.
    """
    if direction not in DIRECTIONS:
        raise ValueError(f"unknown direction {direction!r}")
    flip = direction == "reaction->enzymes"
    key = (lambda p: (p.reaction_id, p.enzyme_id)) if flip else (lambda p: (p.enzyme_id, p.reaction_id))
    pos = {key(p) for p in positives if p.label == 1}
    neg = {key(p) for p in negatives if p.label == 0} - pos
    rows = sorted({a for a, _ in pos})
    if not rows:
        raise DataError("empty candidate pool: no positive pairs in the evaluated partition")
    rset = set(rows)
    full = cols is not None
    if cols is None:
        cols = sorted({b for a, b in pos | neg if a in rset})
    cols = list(cols)
    ri = {a: i for i, a in enumerate(rows)}
    ci = {b: j for j, b in enumerate(cols)}
    labels = np.zeros((len(rows), len(cols)), dtype=bool)
    pool = np.full((len(rows), len(cols)), full, dtype=bool)
    for a, b in pos:
        if b in ci:
            labels[ri[a], ci[b]] = True
            pool[ri[a], ci[b]] = True
    if not full:
        for a, b in neg:
            if a in ri and b in ci:
                pool[ri[a], ci[b]] = True
    return rows, cols, labels, pool


def score_split(
    scorer,
    params: Mapping[str, np.ndarray],
    pairs: Sequence[Pair],
    negatives: Sequence[Pair],
    manifest: SplitManifest,
    direction: str = "enzyme->reactions",
    partition: str = "test",
    catalog: Sequence[str] | None = None,
) -> ScoreMatrix:
    """Model scores over a partition's retrieval pool.

    ``negatives`` are the negatives routed to the partition. Both directions are
    read off one enzyme x reaction grid, so their scores are transposes.
    """
    plist = list(pairs)
    part = [plist[i] for i in getattr(manifest, partition)]
    pos = [p for p in part if p.label == 1]
    neg = [p for p in part if p.label == 0] + [p for p in negatives if p.label == 0]
    rows, cols, labels, pool = retrieval_pool(pos, neg, direction, catalog)
    if direction == "enzyme->reactions":
        grid = scorer.score_grid(rows, cols, params)
    else:
        grid = scorer.score_grid(cols, rows, params).T
    return ScoreMatrix(rows, cols, grid, labels, pool)


def evaluate_split(
    scorer,
    params: Mapping[str, np.ndarray],
    pairs: Sequence[Pair],
    negatives: Sequence[Pair],
    manifest: SplitManifest,
    direction: str = "enzyme->reactions",
    partition: str = "test",
    catalog: Sequence[str] | None = None,
) -> tuple[MetricsReport, ScoreMatrix]:
    sm = score_split(scorer, params, pairs, negatives, manifest, direction, partition, catalog)
    report = evaluate_matrix(sm, f"{manifest.split_kind}/{direction}")
    report.extra["pool_size_mean"] = float(sm.pool.sum(axis=1).mean())
    return report, sm


def evaluate_matrix(sm: ScoreMatrix, setting: str = "") -> MetricsReport:
    """Ranking plus pooled classification metrics for a labelled ScoreMatrix."""
    if sm.labels is None:
        raise ValueError("score matrix carries no labels")
    report = ranking_metrics(sm.values, sm.labels, sm.pool, setting=setting)
    pool = sm.pool if sm.pool is not None else np.ones_like(sm.labels)
    acc, auroc = classification_metrics(np.asarray(sm.values, np.float64)[pool], sm.labels[pool])
    report.accuracy, report.auroc = acc, auroc
    return report


def evaluate_baseline(
    train_sequences: Mapping[str, str],
    train_pairs: Sequence[Pair],
    test_sequences: Mapping[str, str],
    positives: Sequence[Pair],
    negatives: Sequence[Pair],
    direction: str = "enzyme->reactions",
    p: align.AlignParams = align.SW_DEFAULT,
    threshold_factor: float = 0.5,
    threads: int | None = None,
    setting: str = "",
) -> tuple[MetricsReport, ScoreMatrix]:
    """Baseline scores over the same pools the model is ranked on.

    All-zero rows stay in the main metrics (the stable rule ranks them in column
    order); ``extra`` records their count and the metrics over informative rows.
    """
    rows, cols, labels, pool = retrieval_pool(positives, negatives, direction)
    if direction == "enzyme->reactions":
        sm, _ = baseline_score(train_sequences, train_pairs, {e: test_sequences[e] for e in rows}, cols, p, threshold_factor, threads)
        sm = ScoreMatrix(rows, cols, sm.values, labels, pool)
    else:
        sm, _ = baseline_score(train_sequences, train_pairs, {e: test_sequences[e] for e in cols}, rows, p, threshold_factor, threads)
        sm = ScoreMatrix(rows, cols, sm.values.T, labels, pool)
    report = evaluate_matrix(sm, setting)
    informative = (sm.values * sm.pool).any(axis=1)
    report.extra["uninformative_rows"] = int((~informative).sum())
    report.extra["threshold_factor"] = threshold_factor
    report.extra["sw_params"] = {"match": p.match, "mismatch": p.mismatch, "gap": p.gap}
    if informative.any() and (sm.labels & sm.pool)[informative].any():
        sub = ranking_metrics(sm.values[informative], sm.labels[informative], sm.pool[informative])
        report.extra["informative_only"] = sub.to_dict()
    return report, sm
