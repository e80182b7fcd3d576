"""Alignment kernels and exact top-k similarity mining.

All DP kernels run over integer code arrays and are JIT-compiled with numba
(``nogil``), so ``mine_topk`` can fan queries out over a thread pool.
Similarities are formed as ratios of integers where possible, which keeps
equal-valued ties bit-identical and the tie-break rule exact.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numba
import numpy as np

_NEG = -(1 << 40)
_BIG = 1 << 40


@dataclass(frozen=True)
class AlignParams:
    match: float = 1.0
    mismatch: float = -1.0
    gap: float = -1.0
    band: int | None = None

    def __post_init__(self) -> None:
        if self.band is not None and self.band < 0:
            raise ValueError("band must be >= 0")


NW_DEFAULT = AlignParams(1.0, -1.0, -1.0)
SW_DEFAULT = AlignParams(2.0, -1.0, -2.0)


def encode(s: str | np.ndarray) -> np.ndarray:
    if isinstance(s, np.ndarray):
        return s
    return np.frombuffer(s.encode("utf-32-le"), dtype=np.int32) if s else np.zeros(0, np.int32)


def _band(p_band: int | None) -> int:
    return -1 if p_band is None else int(p_band)


# ------------------------------------------------------------------------ kernels


@numba.njit(cache=True, nogil=True)
def _levenshtein(a, b, cutoff, band):
    n, m = a.shape[0], b.shape[0]
    if band >= 0 and abs(n - m) > band:
        return -1 if cutoff >= 0 else _BIG
    prev = np.empty(m + 1, np.int64)
    cur = np.empty(m + 1, np.int64)
    for j in range(m + 1):
        prev[j] = j if (band < 0 or j <= band) else _BIG
    if cutoff >= 0 and min(n, m) == 0 and max(n, m) > cutoff:
        return -1
    for i in range(1, n + 1):
        lo, hi = 1, m
        if band >= 0:
            lo = max(1, i - band)
            hi = min(m, i + band)
        cur[0] = i if (band < 0 or i <= band) else _BIG
        for j in range(1, lo):
            cur[j] = _BIG
        row_min = cur[0]
        ai = a[i - 1]
        for j in range(lo, hi + 1):
            sub = prev[j - 1] + (0 if ai == b[j - 1] else 1)
            dele = prev[j] + 1
            ins = cur[j - 1] + 1
            v = sub
            if dele < v:
                v = dele
            if ins < v:
                v = ins
            cur[j] = v
            if v < row_min:
                row_min = v
        for j in range(hi + 1, m + 1):
            cur[j] = _BIG
        if cutoff >= 0 and row_min > cutoff:
            return -1
        prev, cur = cur, prev
    d = prev[m]
    if cutoff >= 0 and d > cutoff:
        return -1
    return d


@numba.njit(cache=True, nogil=True)
def _needleman_wunsch(a, b, match, mismatch, gap, band):
    n, m = a.shape[0], b.shape[0]
    neg = -1e300
    prev = np.empty(m + 1, np.float64)
    cur = np.empty(m + 1, np.float64)
    for j in range(m + 1):
        prev[j] = j * gap if (band < 0 or j <= band) else neg
    for i in range(1, n + 1):
        cur[0] = i * gap if (band < 0 or i <= band) else neg
        ai = a[i - 1]
        for j in range(1, m + 1):
            if band >= 0 and abs(i - j) > band:
                cur[j] = neg
                continue
            d = prev[j - 1] + (match if ai == b[j - 1] else mismatch)
            u = prev[j] + gap
            l = cur[j - 1] + gap
            v = d
            if u > v:
                v = u
            if l > v:
                v = l
            cur[j] = v
        prev, cur = cur, prev
    return prev[m]


@numba.njit(cache=True, nogil=True)
def _smith_waterman(a, b, match, mismatch, gap, band):
    n, m = a.shape[0], b.shape[0]
    prev = np.zeros(m + 1, np.float64)
    cur = np.zeros(m + 1, np.float64)
    best = 0.0
    for i in range(1, n + 1):
        cur[0] = 0.0
        ai = a[i - 1]
        for j in range(1, m + 1):
            if band >= 0 and abs(i - j) > band:
                cur[j] = 0.0
                continue
            v = prev[j - 1] + (match if ai == b[j - 1] else mismatch)
            u = prev[j] + gap
            if u > v:
                v = u
            l = cur[j - 1] + gap
            if l > v:
                v = l
            if v < 0.0:
                v = 0.0
            cur[j] = v
            if v > best:
                best = v
        prev, cur = cur, prev
    return best


@numba.njit(cache=True, nogil=True)
def _topk_scan(qa, flat, offs, lens, order, bounds, k, prune, metric, match, mismatch, gap, band):
    """Visit candidates in ``order`` keeping the ``k`` best by (similarity desc, index asc).

    ``bounds[t]`` is an upper bound on the similarity of ``order[t]``; with
    ``prune`` the scan stops once it falls below the current k-th best.
    """
    keep_idx = np.empty(k, np.int64)
    keep_sim = np.empty(k, np.float64)
    n = 0
    worst = 0
    lq = qa.shape[0]
    for t in range(order.shape[0]):
        c = order[t]
        full = n >= k
        kth = keep_sim[worst] if full else -1.0
        if prune and full and bounds[t] < kth - 1e-12:
            break
        cb = flat[offs[c] : offs[c] + lens[c]]
        m = max(lq, lens[c])
        if metric == 0:
            cutoff = -1
            if prune and full:
                cutoff = int(np.floor((1.0 - kth) * m + 1e-9))
            d = _levenshtein(qa, cb, cutoff, -1)
            if d < 0:
                continue
            sim = (m - d) / m
        else:
            sim = _needleman_wunsch(qa, cb, match, mismatch, gap, band) / (match * m)
            sim = min(1.0, max(0.0, sim))
        if full:
            if not (sim > keep_sim[worst] or (sim == keep_sim[worst] and c < keep_idx[worst])):
                continue
            keep_idx[worst] = c
            keep_sim[worst] = sim
        else:
            keep_idx[n] = c
            keep_sim[n] = sim
            n += 1
            if n < k:
                continue
        # locate the new worst kept entry: lowest similarity, then highest index
        worst = 0
        for j in range(1, n):
            if keep_sim[j] < keep_sim[worst] or (keep_sim[j] == keep_sim[worst] and keep_idx[j] > keep_idx[worst]):
                worst = j
    return keep_idx[:n], keep_sim[:n]


# --------------------------------------------------------------------- public API


def levenshtein(a, b, cutoff: int | None = None, band: int | None = None) -> int | None:
    """Unit-cost edit distance.

    With ``cutoff`` the DP stops as soon as every cell of a row exceeds it and
    ``None`` is returned (also when the final distance exceeds ``cutoff``).
    With ``band`` only cells ``|i - j| <= band`` are filled.
    """
    c = -1 if cutoff is None else int(cutoff)
    if c < -1:
        return None
    d = _levenshtein(encode(a), encode(b), c, _band(band))
    if d < 0 or d >= _BIG:
        return None
    return int(d)


def seq_difference(a, b) -> float:
    """Edit distance normalized by the longer length."""
    if len(a) == 0 or len(b) == 0:
        raise ValueError("seq_difference needs non-empty inputs")
    return levenshtein(a, b) / max(len(a), len(b))


def seq_similarity(a, b) -> float:
    m = max(len(a), len(b))
    if min(len(a), len(b)) == 0:
        raise ValueError("seq_similarity needs non-empty inputs")
    return (m - levenshtein(a, b)) / m


def needleman_wunsch(a, b, p: AlignParams = NW_DEFAULT) -> float:
    return float(_needleman_wunsch(encode(a), encode(b), p.match, p.mismatch, p.gap, _band(p.band)))


def nw_similarity(a, b, p: AlignParams = NW_DEFAULT) -> float:
    """Global score over ``match * max_len``, clamped to [0, 1]."""
    if len(a) == 0 or len(b) == 0:
        raise ValueError("nw_similarity needs non-empty inputs")
    s = needleman_wunsch(a, b, p) / (p.match * max(len(a), len(b)))
    return min(1.0, max(0.0, s))


def smith_waterman(a, b, p: AlignParams = SW_DEFAULT) -> float:
    return float(_smith_waterman(encode(a), encode(b), p.match, p.mismatch, p.gap, _band(p.band)))


# ------------------------------------------------------------------- top-k mining


@dataclass
class TopKTable:
    """Per-query neighbor lists, similarity descending, ties by candidate id."""

    rows: dict[str, list[tuple[str, float]]]

    def __getitem__(self, q: str) -> list[tuple[str, float]]:
        return self.rows[q]

    def __iter__(self):
        return iter(self.rows)

    def __len__(self) -> int:
        return len(self.rows)

    def to_tsv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("query_id\trank\tcandidate_id\tsimilarity\n")
            for q in sorted(self.rows):
                for rank, (c, s) in enumerate(self.rows[q], start=1):
                    fh.write(f"{q}\t{rank}\t{c}\t{s!r}\n")

    @classmethod
    def from_tsv(cls, path) -> "TopKTable":
        rows: dict[str, list[tuple[str, float]]] = {}
        with open(path, encoding="utf-8") as fh:
            next(fh)
            for line in fh:
                q, _, c, s = line.rstrip("\n").split("\t")
                rows.setdefault(q, []).append((c, float(s)))
        return cls(rows)


def _nw_bound(lq: int, lc: int, p: AlignParams) -> float:
    lo, hi = min(lq, lc), max(lq, lc)
    if p.match <= 0 or p.gap > 0:
        return 1.0
    return min(1.0, max(0.0, (lo * p.match + (hi - lo) * p.gap) / (p.match * hi)))


def _default_threads() -> int:
    try:
        return max(1, int(os.environ.get("ENZRANK_THREADS", "1")))
    except ValueError:
        return 1


def mine_topk(
    queries: Sequence[str],
    candidates: Sequence[str],
    strings: Mapping[str, str],
    metric: str = "seq_difference",
    k: int = 1000,
    prune: bool = True,
    exclude_self: bool = True,
    params: AlignParams = NW_DEFAULT,
    threads: int | None = None,
) -> TopKTable:
    """Exact top-``k`` most similar candidates per query.

    ``metric="seq_difference"`` ranks by ``1 - seq_difference``; ``"nw_similarity"``
    by the normalized global alignment score. With ``prune`` candidates are
    visited in decreasing order of a length-only upper bound and the scan stops
    once the bound drops below the current k-th similarity; for the edit metric
    the remaining DP work is also cut off at the matching distance.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if metric not in ("seq_difference", "nw_similarity"):
        raise ValueError(f"unknown metric {metric!r}")
    cand = sorted(set(candidates))
    id_rank = {c: i for i, c in enumerate(cand)}
    cand_codes = [encode(strings[c]) for c in cand]
    lens = np.array([a.shape[0] for a in cand_codes], dtype=np.int64)
    offs = np.zeros(len(cand) + 1, dtype=np.int64)
    np.cumsum(lens, out=offs[1:])
    flat = np.concatenate(cand_codes) if cand_codes else np.zeros(0, np.int32)
    ident = np.arange(len(cand), dtype=np.int64)
    code = 0 if metric == "seq_difference" else 1

    def one(q: str) -> list[tuple[str, float]]:
        qa = encode(strings[q])
        lq = qa.shape[0]
        lo, hi = np.minimum(lens, lq), np.maximum(lens, lq)
        if code == 0:
            bounds = lo / hi
        elif params.match <= 0 or params.gap > 0:
            bounds = np.ones(len(cand))
        else:
            bounds = np.clip((lo * params.match + (hi - lo) * params.gap) / (params.match * hi), 0.0, 1.0)
        order = np.lexsort((ident, -bounds)) if prune else ident
        if exclude_self and q in id_rank:
            order = order[order != id_rank[q]]
        idx, sims = _topk_scan(
            qa, flat, offs, lens, order, bounds[order], k, prune, code,
            params.match, params.mismatch, params.gap, _band(params.band),
        )
        best = sorted(zip(sims.tolist(), idx.tolist()), key=lambda t: (-t[0], t[1]))
        return [(cand[i], s) for s, i in best]

    threads = threads or _default_threads()
    if threads > 1 and len(queries) > 1:
        with ThreadPoolExecutor(threads) as ex:
            results = list(ex.map(one, queries))
    else:
        results = [one(q) for q in queries]
    return TopKTable(dict(zip(queries, results)))


def radius_neighbors(
    query: str,
    candidates: Iterable[str],
    strings: Mapping[str, str],
    linked: Callable[[str, str], bool],
    bound_ok: Callable[[int, int], bool],
) -> list[str]:
    """All candidates satisfying ``linked``; ``bound_ok`` filters by lengths first."""
    lq = len(strings[query])
    return [
        c
        for c in candidates
        if c != query and bound_ok(lq, len(strings[c])) and linked(query, c)
    ]
