"""Slow, obviously-correct reference implementations used by the tests."""

import numpy as np


def levenshtein(a, b):
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i]
        for j, y in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[-1]


def needleman_wunsch(a, b, match, mismatch, gap):
    n, m = len(a), len(b)
    f = [[0.0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        f[i][0] = i * gap
    for j in range(1, m + 1):
        f[0][j] = j * gap
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            s = match if a[i - 1] == b[j - 1] else mismatch
            f[i][j] = max(f[i - 1][j - 1] + s, f[i - 1][j] + gap, f[i][j - 1] + gap)
    return f[n][m]


def smith_waterman(a, b, match, mismatch, gap):
    n, m = len(a), len(b)
    h = [[0.0] * (m + 1) for _ in range(n + 1)]
    best = 0.0
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            s = match if a[i - 1] == b[j - 1] else mismatch
            h[i][j] = max(0.0, h[i - 1][j - 1] + s, h[i - 1][j] + gap, h[i][j - 1] + gap)
            best = max(best, h[i][j])
    return best


def topk_brute(queries, candidates, sim, k, exclude_self=True):
    out = {}
    for q in queries:
        scored = [(c, sim(q, c)) for c in sorted(set(candidates)) if not (exclude_self and c == q)]
        scored.sort(key=lambda t: (-t[1], t[0]))
        out[q] = scored[:k]
    return out


def listing_ranks(scores, labels):
    """Per-row ranking exactly as the reference listing: stable descending argsort,
    then 1-based position of every positive column."""
    ranks = []
    for s, y in zip(scores, labels):
        order = sorted(range(len(s)), key=lambda j: (-s[j], j))
        pos = {j: r + 1 for r, j in enumerate(order)}
        ranks.append([pos[j] for j in range(len(s)) if y[j]])
    return ranks


def listing_metrics(scores, labels, ks):
    mr, rr, top, topn = [], [], {k: 0.0 for k in ks}, {k: 0.0 for k in ks}
    rows = 0
    for rk in listing_ranks(scores, labels):
        if not rk:
            continue
        rows += 1
        mr.append(sum(rk) / len(rk))
        rr.append(sum(1.0 / r for r in rk) / len(rk))
        for k in ks:
            hits = sum(1 for r in rk if r <= k)
            top[k] += 1.0 if hits else 0.0
            topn[k] += hits / k
    return {
        "mean_rank": sum(mr) / rows,
        "mrr": sum(rr) / rows,
        "top_acc": {k: top[k] / rows for k in ks},
        "top_acc_n": {k: topn[k] / rows for k in ks},
        "n_rows": rows,
    }


def auroc_pairs(scores, labels):
    """Probability a random positive outscores a random negative, ties count 1/2."""
    s = np.asarray(scores, float)
    y = np.asarray(labels).astype(bool)
    pos, neg = s[y], s[~y]
    tot = 0.0
    for p in pos:
        tot += (p > neg).sum() + 0.5 * (p == neg).sum()
    return tot / (len(pos) * len(neg))


def random_rotation(rng):
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def central_difference(f, params, h=1e-5):
    """Numerical gradient of scalar ``f(params)`` w.r.t. every array in ``params``."""
    out = {}
    for k, v in params.items():
        g = np.zeros_like(v)
        for idx in np.ndindex(v.shape):
            pp = dict(params)
            a = v.copy()
            a[idx] += h
            pp[k] = a
            fp = f(pp)
            a = v.copy()
            a[idx] -= h
            pp[k] = a
            g[idx] = (fp - f(pp)) / (2 * h)
        out[k] = g
    return out


def relative_error(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-12))
