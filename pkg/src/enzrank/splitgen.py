"""Train/valid/test split generation, negative mining, and leakage audits.

Similarity splits cluster items by single linkage over the edges of a
``mine_topk`` neighbor graph. Lists that come back saturated (all ``k`` entries
still linked) are completed by an exact radius query, so the components are
the true single-linkage components at the threshold and the cross-partition
guarantee holds by construction. :func:`audit_split` re-checks it exhaustively.
"""

from __future__ import annotations

import csv
import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from . import align
from .dataio import DataError, Pair, PairSet, SplitManifest, date_to_days, days_to_date

logger = logging.getLogger(__name__)

DEFAULT_TEST_FRACTION = {"time": 0.07, "enzyme_sim": 0.05, "reaction_sim": 0.09}
DEFAULT_THRESHOLD = {"enzyme_sim": 0.6, "reaction_sim": 0.4}
PROVENANCE = ("enzyme_neighbor", "reaction_neighbor")
QUANTILES = (0.0, 0.05, 0.25, 0.5, 0.75, 0.95, 1.0)


class _UnionFind:
    def __init__(self, items: Iterable[str]):
        self.parent = {x: x for x in items}

    def find(self, x: str) -> str:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: str, b: str) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # smaller id becomes the root, which keeps the structure deterministic
            if rb < ra:
                ra, rb = rb, ra
            self.parent[rb] = ra

    def groups(self) -> list[list[str]]:
        out: dict[str, list[str]] = defaultdict(list)
        for x in sorted(self.parent):
            out[self.find(x)].append(x)
        return sorted(out.values(), key=lambda g: g[0])


def _sample_valid(train_pool: list[int], frac: float, rng: np.random.Generator) -> tuple[list[int], list[int]]:
    if not 0.0 <= frac < 1.0:
        raise ValueError("valid fraction must be in [0, 1)")
    pool = sorted(train_pool)
    n_valid = int(round(frac * len(pool)))
    order = rng.permutation(len(pool))
    valid = sorted(pool[i] for i in order[:n_valid])
    vset = set(valid)
    return [i for i in pool if i not in vset], valid


def _pair_list(pairs: PairSet | Sequence[Pair]) -> list[Pair]:
    return list(pairs.pairs if isinstance(pairs, PairSet) else pairs)


# ------------------------------------------------------------------------- time


def split_time(
    pairs: PairSet | Sequence[Pair],
    boundary: str = "2010-12-31",
    valid_fraction: float = 0.1,
    seed: int = 0,
) -> SplitManifest:
    """Pairs dated on or before ``boundary`` form the train pool; later ones are test."""
    b = date_to_days(boundary)
    if b is None:
        raise ValueError("boundary date required")
    plist = _pair_list(pairs)
    pool, test, missing = [], [], 0
    for i, p in enumerate(plist):
        if p.date is None:
            missing += 1
        elif p.date <= b:
            pool.append(i)
        else:
            test.append(i)
    if missing:
        logger.warning("split_time: %d pairs without a date were excluded", missing)
    if not pool or not test:
        side = "train" if not pool else "test"
        raise DataError(f"empty partition: no pairs fall in the {side} side of {days_to_date(b)}")
    train, valid = _sample_valid(pool, valid_fraction, np.random.default_rng(seed))
    params = {
        "boundary": days_to_date(b),
        "valid_fraction": valid_fraction,
        "seed": seed,
        "excluded_missing_date": missing,
    }
    m = SplitManifest("time", params, train, valid, sorted(test))
    m.validate(len(plist))
    return m


# ---------------------------------------------------------------- similarity core


def _length_ok_edit(threshold: float) -> Callable[[int, int], bool]:
    # distance >= max - min, so a link needs (max - min) / max < threshold
    return lambda a, b: (max(a, b) - min(a, b)) / max(a, b) < threshold


def _edit_linked(threshold: float, strings: Mapping[str, str]) -> Callable[[str, str], bool]:
    def linked(a: str, b: str) -> bool:
        sa, sb = strings[a], strings[b]
        m = max(len(sa), len(sb))
        cutoff = math.ceil(threshold * m)
        d = align.levenshtein(sa, sb, cutoff=cutoff)
        return d is not None and d / m < threshold

    return linked


def _nw_linked(threshold: float, strings: Mapping[str, str], p: align.AlignParams) -> Callable[[str, str], bool]:
    return lambda a, b: align.nw_similarity(strings[a], strings[b], p) > 1.0 - threshold


def _nw_length_ok(threshold: float, p: align.AlignParams) -> Callable[[int, int], bool]:
    return lambda a, b: align._nw_bound(a, b, p) > 1.0 - threshold


def cluster_items(
    ids: Sequence[str],
    strings: Mapping[str, str],
    metric: str,
    threshold: float,
    k: int = 1000,
    params: align.AlignParams = align.NW_DEFAULT,
    threads: int | None = None,
) -> list[list[str]]:
    """Exact single-linkage components at the threshold, seeded by a top-k graph."""
    ids = sorted(set(ids))
    uf = _UnionFind(ids)
    if len(ids) < 2:
        return uf.groups()
    table = align.mine_topk(ids, ids, strings, metric, min(k, len(ids) - 1), True, True, params, threads)
    if metric == "seq_difference":
        linked = _edit_linked(threshold, strings)
        bound_ok = _length_ok_edit(threshold)

        def edge(q: str, c: str, sim: float) -> bool:
            m = max(len(strings[q]), len(strings[c]))
            d = round(m - sim * m)
            return d / m < threshold
    else:
        linked = _nw_linked(threshold, strings, params)
        bound_ok = _nw_length_ok(threshold, params)

        def edge(q: str, c: str, sim: float) -> bool:
            return sim > 1.0 - threshold

    saturated = []
    for q in ids:
        row = table[q]
        for c, s in row:
            if edge(q, c, s):
                uf.union(q, c)
        if len(row) == len(ids) - 1 or not row:
            continue
        if edge(q, row[-1][0], row[-1][1]):
            saturated.append(q)
    for q in saturated:
        # only candidates outside q's current component can change the result
        rest = [c for c in ids if uf.find(c) != uf.find(q)]
        for c in align.radius_neighbors(q, rest, strings, linked, bound_ok):
            uf.union(q, c)
    if saturated:
        logger.info("cluster_items: %d saturated lists completed by radius queries", len(saturated))
    return uf.groups()


def _assign_clusters(
    clusters: list[list[str]],
    pair_count: Mapping[str, int],
    n_pairs: int,
    test_fraction: float,
    rng: np.random.Generator,
) -> set[str]:
    """First-fit over a seeded cluster shuffle, filling the test budget in pairs."""
    if len(clusters) < 2:
        raise DataError("threshold unreachable: every item falls into a single cluster")
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test fraction must be in (0, 1)")
    target = test_fraction * n_pairs
    order = rng.permutation(len(clusters))
    test: set[str] = set()
    filled = 0
    for i in order:
        size = sum(pair_count[x] for x in clusters[i])
        if filled + size <= target:
            test.update(clusters[i])
            filled += size
    if not test:
        smallest = min(order, key=lambda i: (sum(pair_count[x] for x in clusters[i]), clusters[i][0]))
        test.update(clusters[smallest])
    if all(x in test for c in clusters for x in c):
        raise DataError("empty partition: every cluster was assigned to test")
    return test


def _similarity_split(
    kind: str,
    plist: list[Pair],
    key: Callable[[Pair], str],
    strings: Mapping[str, str],
    metric: str,
    threshold: float,
    test_fraction: float,
    valid_fraction: float,
    seed: int,
    k: int,
    params: align.AlignParams,
    threads: int | None,
    extra: dict,
) -> tuple[SplitManifest, list[list[str]]]:
    if not 0.0 < threshold <= 1.0:
        raise ValueError("threshold must be in (0, 1]")
    items = sorted({key(p) for p in plist})
    missing = [x for x in items if x not in strings]
    if missing:
        raise DataError(f"{kind}: no string for ids {missing[:5]}")
    clusters = cluster_items(items, strings, metric, threshold, k, params, threads)
    counts = Counter(key(p) for p in plist)
    rng = np.random.default_rng(seed)
    test_items = _assign_clusters(clusters, counts, len(plist), test_fraction, rng)
    test = [i for i, p in enumerate(plist) if key(p) in test_items]
    pool = [i for i, p in enumerate(plist) if key(p) not in test_items]
    train, valid = _sample_valid(pool, valid_fraction, rng)
    mparams = {
        "threshold": threshold,
        "test_fraction": test_fraction,
        "valid_fraction": valid_fraction,
        "seed": seed,
        "k": k,
        "metric": metric,
        "n_clusters": len(clusters),
        **extra,
    }
    m = SplitManifest(kind, mparams, train, valid, test)
    m.validate(len(plist))
    return m, clusters


def split_enzyme_sim(
    pairs: PairSet | Sequence[Pair],
    enzymes: Mapping[str, str],
    threshold: float = 0.6,
    test_fraction: float = 0.05,
    valid_fraction: float = 0.1,
    seed: int = 0,
    k: int = 1000,
    threads: int | None = None,
) -> SplitManifest:
    """Hold out whole enzyme clusters so every test enzyme differs from every
    train enzyme by at least ``threshold`` (``seq_difference``, max-length normalized)."""
    m, _ = _similarity_split(
        "enzyme_sim", _pair_list(pairs), lambda p: p.enzyme_id, enzymes, "seq_difference",
        threshold, test_fraction, valid_fraction, seed, k, align.NW_DEFAULT, threads,
        {"normalization": "max_length"},
    )
    return m


def split_reaction_sim(
    pairs: PairSet | Sequence[Pair],
    reactions: Mapping[str, str],
    threshold: float = 0.4,
    test_fraction: float = 0.09,
    valid_fraction: float = 0.1,
    seed: int = 0,
    k: int = 1000,
    params: align.AlignParams = align.NW_DEFAULT,
    threads: int | None = None,
) -> SplitManifest:
    """Hold out reaction clusters linked by ``nw_similarity > 1 - threshold``.

    ``reactions`` maps reaction id to its canonical reaction string. Identical
    strings always link, so no test reaction string can occur in train.
    """
    m, _ = _similarity_split(
        "reaction_sim", _pair_list(pairs), lambda p: p.reaction_id, reactions, "nw_similarity",
        threshold, test_fraction, valid_fraction, seed, k, params, threads,
        {"match": params.match, "mismatch": params.mismatch, "gap": params.gap},
    )
    return m


# ---------------------------------------------------------------------- negatives


@dataclass(frozen=True)
class Negative:
    enzyme_id: str
    reaction_id: str
    provenance: str
    anchor: int  # index of the positive pair it was mined from

    def as_pair(self) -> Pair:
        return Pair(self.enzyme_id, self.reaction_id, 0)


@dataclass
class NegativeSet:
    items: list[Negative] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    def pairs(self) -> list[Pair]:
        return [n.as_pair() for n in self.items]

    def keys(self) -> set[tuple[str, str]]:
        return {(n.enzyme_id, n.reaction_id) for n in self.items}

    def to_tsv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, delimiter="\t", lineterminator="\n")
            w.writerow(["enzyme_id", "reaction_id", "label", "provenance", "anchor"])
            for n in self.items:
                w.writerow([n.enzyme_id, n.reaction_id, 0, n.provenance, n.anchor])

    @classmethod
    def from_tsv(cls, path) -> "NegativeSet":
        items = []
        with open(path, encoding="utf-8", newline="") as fh:
            r = csv.reader(fh, delimiter="\t")
            header = next(r, None)
            if header != ["enzyme_id", "reaction_id", "label", "provenance", "anchor"]:
                raise DataError(f"{path}: not a negatives table (header {header})")
            for lineno, row in enumerate(r, start=2):
                if len(row) != 5 or row[3] not in PROVENANCE:
                    raise DataError(f"{path}:{lineno}: malformed negative row")
                try:
                    items.append(Negative(row[0], row[1], row[3], int(row[4])))
                except ValueError:
                    raise DataError(f"{path}:{lineno}: bad anchor index {row[4]!r}") from None
        return cls(items)


def mine_negatives(
    pairs: PairSet | Sequence[Pair],
    enzymes: Mapping[str, str],
    reactions: Mapping[str, str],
    k: int = 1000,
    params: align.AlignParams = align.NW_DEFAULT,
    threads: int | None = None,
) -> NegativeSet:
    """Up to ``k`` enzyme-neighbor and ``k`` reaction-neighbor negatives per positive.

    Neighbor lists are mined ``k + max degree`` deep, which is enough for ``k``
    survivors after removing known positives. Duplicates keep their first
    occurrence (positives in file order, enzyme neighbors before reaction neighbors).
    """
    plist = _pair_list(pairs)
    pos_idx = [i for i, p in enumerate(plist) if p.label == 1]
    positives = {(plist[i].enzyme_id, plist[i].reaction_id) for i in pos_idx}
    eids = sorted(enzymes)
    rids = sorted(reactions)
    by_reaction = Counter(r for _, r in positives)
    by_enzyme = Counter(e for e, _ in positives)
    ke = k + max(by_reaction.values(), default=0)
    kr = k + max(by_enzyme.values(), default=0)
    q_e = sorted({plist[i].enzyme_id for i in pos_idx})
    q_r = sorted({plist[i].reaction_id for i in pos_idx})
    enz_nb = align.mine_topk(q_e, eids, enzymes, "seq_difference", ke, True, True, params, threads) if len(eids) > 1 else None
    rxn_nb = align.mine_topk(q_r, rids, reactions, "nw_similarity", kr, True, True, params, threads) if len(rids) > 1 else None
    seen = set(positives)
    out: list[Negative] = []
    for i in pos_idx:
        e, r = plist[i].enzyme_id, plist[i].reaction_id
        if enz_nb is not None:
            taken = 0
            for c, _ in enz_nb[e]:
                if taken >= k:
                    break
                if (c, r) in positives:
                    continue
                taken += 1
                if (c, r) not in seen:
                    seen.add((c, r))
                    out.append(Negative(c, r, "enzyme_neighbor", i))
        if rxn_nb is not None:
            taken = 0
            for c, _ in rxn_nb[r]:
                if taken >= k:
                    break
                if (e, c) in positives:
                    continue
                taken += 1
                if (e, c) not in seen:
                    seen.add((e, c))
                    out.append(Negative(e, c, "reaction_neighbor", i))
    return NegativeSet(out)


def partition_negatives(
    negatives: NegativeSet,
    manifest: SplitManifest,
    pairs: PairSet | Sequence[Pair],
) -> dict[str, list[Pair]]:
    """Route each negative to its anchor's partition, dropping cross-side leaks.

    For similarity splits, a train/valid negative may not touch a held-out
    enzyme (or reaction), and a test negative may not touch a training one.
    """
    plist = _pair_list(pairs)
    where = {}
    for name in ("train", "valid", "test"):
        for i in getattr(manifest, name):
            where[i] = name
    held: set[str] = set()
    attr = None
    if manifest.split_kind == "enzyme_sim":
        attr = "enzyme_id"
    elif manifest.split_kind == "reaction_sim":
        attr = "reaction_id"
    if attr:
        held = {getattr(plist[i], attr) for i in manifest.test}
    out: dict[str, list[Pair]] = {"train": [], "valid": [], "test": []}
    dropped = 0
    for n in negatives:
        part = where.get(n.anchor)
        if part is None:
            continue
        if attr:
            inside = getattr(n, attr) in held
            if inside != (part == "test"):
                dropped += 1
                continue
        out[part].append(n.as_pair())
    if dropped:
        logger.info("partition_negatives: dropped %d negatives crossing the split", dropped)
    return out


# -------------------------------------------------------------------------- audit


def _quantiles(values: Sequence[float]) -> dict[str, float]:
    if not values:
        return {}
    arr = np.asarray(values, dtype=np.float64)
    return {f"q{int(round(q * 100)):02d}": float(np.quantile(arr, q)) for q in QUANTILES}


def audit_split(
    manifest: SplitManifest,
    pairs: PairSet | Sequence[Pair],
    strings: Mapping[str, str] | None = None,
    params: align.AlignParams = align.NW_DEFAULT,
    threads: int | None = None,
) -> dict:
    """Exhaustive leakage certificate for a manifest.

    For similarity splits ``strings`` maps the split key (enzyme sequence or
    canonical reaction string) and every held-out item is compared against every
    training/validation item.
    """
    plist = _pair_list(pairs)
    manifest.validate(len(plist))
    train_side = list(manifest.train) + list(manifest.valid)
    report: dict = {
        "split_kind": manifest.split_kind,
        "sizes": {"train": len(manifest.train), "valid": len(manifest.valid), "test": len(manifest.test)},
    }
    if manifest.split_kind == "time":
        tr = [plist[i].date for i in train_side]
        te = [plist[i].date for i in manifest.test]
        b = date_to_days(manifest.params["boundary"])
        report["max_train_date"] = days_to_date(max(tr))
        report["min_test_date"] = days_to_date(min(te))
        report["passed"] = bool(max(tr) <= b < min(te))
        return report
    attr = "enzyme_id" if manifest.split_kind == "enzyme_sim" else "reaction_id"
    if strings is None:
        raise ValueError("similarity audits need the item strings")
    test_items = sorted({getattr(plist[i], attr) for i in manifest.test})
    train_items = sorted({getattr(plist[i], attr) for i in train_side})
    shared = sorted(set(test_items) & set(train_items))
    metric = "seq_difference" if manifest.split_kind == "enzyme_sim" else "nw_similarity"
    table = align.mine_topk(test_items, train_items, strings, metric, 1, True, False, params, threads)
    nearest, best_sim = [], []
    for q in test_items:
        row = table[q]
        if metric == "seq_difference":
            # exact difference from the recovered integer distance
            m = max(len(strings[q]), len(strings[row[0][0]]))
            nearest.append(round(m - row[0][1] * m) / m)
        else:
            nearest.append(1.0 - row[0][1])
            best_sim.append(row[0][1])
    threshold = float(manifest.params["threshold"])
    min_diff = min(nearest) if nearest else math.inf
    report["shared_items"] = len(shared)
    report["min_cross_difference"] = min_diff
    report["difference_quantiles"] = _quantiles(nearest)
    if manifest.split_kind == "enzyme_sim":
        report["passed"] = bool(not shared and min_diff >= threshold)
    else:
        t_str = {strings[x] for x in test_items}
        report["shared_strings"] = len(t_str & {strings[x] for x in train_items})
        report["max_cross_similarity"] = max(best_sim) if best_sim else 0.0
        report["passed"] = bool(
            not shared and report["shared_strings"] == 0 and report["max_cross_similarity"] <= 1.0 - threshold
        )
    clusters = cluster_items(
        sorted(set(test_items) | set(train_items)), strings, metric, threshold,
        int(manifest.params.get("k", 1000)), params, threads,
    )
    hist = Counter(len(c) for c in clusters)
    report["cluster_size_histogram"] = {str(s): hist[s] for s in sorted(hist)}
    return report
