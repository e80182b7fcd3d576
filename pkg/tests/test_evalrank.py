import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from enzrank import evalrank
from enzrank.dataio import DataError, Pair, SplitManifest
from enzrank.evalrank import ScoreMatrix, ranking_metrics

import oracles


def _pairwise_ranks(s):
    """rank_j = 1 + #{k: s_k > s_j} + #{k < j: s_k == s_j}."""
    n = len(s)
    return [1 + sum(1 for k in range(n) if s[k] > s[j] or (s[k] == s[j] and k < j)) for j in range(n)]


def test_rank_examples():
    assert evalrank.rank_rows([[3, 1, 2]]).tolist() == [[1, 3, 2]]
    assert evalrank.rank_rows([[2, 2, 1]]).tolist() == [[1, 2, 3]]
    assert evalrank.rank_rows([[5, 5, 5, 5]]).tolist() == [[1, 2, 3, 4]]
    with pytest.raises(ValueError, match="NaN"):
        evalrank.rank_rows([[1.0, np.nan]])


def test_rank_mask_pushes_out_of_pool_last():
    r = evalrank.rank_rows([[9.0, 1.0, 2.0]], mask=[[False, True, True]])
    assert r.tolist() == [[3, 2, 1]]


@settings(max_examples=100, deadline=None)
@given(hnp.arrays(np.float64, st.tuples(st.integers(1, 8), st.integers(1, 12)), elements=st.integers(-3, 3).map(float)))
def test_rank_matches_pairwise_oracle(s):
    got = evalrank.rank_rows(s)
    for row, g in zip(s, got):
        assert g.tolist() == _pairwise_ranks(list(row))


def test_rank_large_random_with_ties():
    rng = np.random.default_rng(0)
    s = rng.integers(0, 6, size=(50, 80)).astype(float)
    got = evalrank.rank_rows(s)
    assert all(g.tolist() == _pairwise_ranks(list(r)) for r, g in zip(s, got))


def test_metric_examples():
    a = ranking_metrics([[0.9, 0.1, 0.5]], [[1, 0, 0]])
    assert (a.mean_rank, a.mrr, a.top_acc[1]) == (1.0, 1.0, 1.0)
    b = ranking_metrics([[0.9, 0.8, 0.1]], [[0, 1, 1]])
    assert b.mean_rank == 2.5 and b.mrr == pytest.approx(5 / 12, abs=1e-15)
    assert b.top_acc[1] == 0 and b.top_acc[2] == 1 and b.top_acc_n[2] == 0.5


def test_zero_positive_rows_excluded():
    r = ranking_metrics([[0.9, 0.1], [0.3, 0.2]], [[1, 0], [0, 0]])
    assert r.n_rows == 1 and r.excluded_rows == 1
    with pytest.raises(ValueError):
        ranking_metrics([[0.9, 0.1]], [[0, 0]])


def test_ground_truth_scoring_is_perfect():
    rng = np.random.default_rng(1)
    lab = np.zeros((30, 40), bool)
    lab[np.arange(30), rng.integers(0, 40, 30)] = True
    r = ranking_metrics(lab.astype(float), lab)
    assert (r.top_acc[1], r.top_acc_n[1], r.mean_rank, r.mrr) == (1.0, 1.0, 1.0, 1.0)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 6), st.integers(2, 15))
def test_metrics_match_listing(seed, n, m):
    rng = np.random.default_rng(seed)
    s = rng.integers(0, 4, size=(n, m)).astype(float) + rng.integers(0, 2, size=(n, m)) * rng.random((n, m))
    lab = rng.random((n, m)) < 0.3
    lab[0, rng.integers(m)] = True
    got = ranking_metrics(s, lab)
    want = oracles.listing_metrics(s.tolist(), lab.tolist(), evalrank.KS)
    assert got.n_rows == want["n_rows"]
    assert got.mean_rank == pytest.approx(want["mean_rank"], abs=1e-9)
    assert got.mrr == pytest.approx(want["mrr"], abs=1e-9)
    for k in evalrank.KS:
        assert got.top_acc[k] == pytest.approx(want["top_acc"][k], abs=1e-9)
        assert got.top_acc_n[k] == pytest.approx(want["top_acc_n"][k], abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31))
def test_monotone_transform_invariance(seed):
    rng = np.random.default_rng(seed)
    s = rng.normal(size=(5, 9))
    lab = rng.random((5, 9)) < 0.3
    lab[:, 0] = True
    a = ranking_metrics(s, lab).to_dict()
    b = ranking_metrics(np.exp(2 * s) + 1, lab).to_dict()
    c = ranking_metrics(np.tanh(s / 3), lab).to_dict()
    a.pop("setting", None), b.pop("setting", None), c.pop("setting", None)
    assert a == b == c


def test_classification_examples():
    assert evalrank.classification_metrics([0.8, 0.2], [1, 0])[1] == 1.0
    assert evalrank.classification_metrics([0.8, 0.2], [1, 0], threshold=0.5)[0] == 1.0
    assert evalrank.classification_metrics([0.3] * 4, [1, 0, 1, 0])[1] == 0.5
    assert evalrank.classification_metrics([1.0, 2.0], [1, 1])[1] is None
    with pytest.raises(ValueError):
        evalrank.classification_metrics([], [])


def test_auroc_matches_pair_counting():
    rng = np.random.default_rng(2)
    for n in (200, 500):
        x = np.round(rng.normal(size=n), 1)
        y = rng.random(n) < 0.4
        _, got = evalrank.classification_metrics(x, y)
        assert abs(got - oracles.auroc_pairs(x, y)) < 1e-12


def test_baseline_identical_and_dissimilar_queries():
    train_seq = {"T1": "MKVLAAGGHHWW", "T2": "PPPPQQQQRRRR"}
    train_pairs = [Pair("T1", "R1", 1), Pair("T1", "R2", 1), Pair("T2", "R3", 1)]
    sm, uninf = evalrank.baseline_score(train_seq, train_pairs, {"q1": "MKVLAAGGHHWW", "q2": "CCCCCCCCCC"}, ["R1", "R2", "R3"])
    assert sm.values.tolist() == [[1, 1, 0], [0, 0, 0]]
    assert uninf == 1


def test_baseline_ties_take_every_best_hit():
    train_seq = {"T1": "MKVLAAGG", "T2": "MKVLAAGG"}
    pairs = [Pair("T1", "R1", 1), Pair("T2", "R2", 1)]
    sm, _ = evalrank.baseline_score(train_seq, pairs, {"q": "MKVLAAGG"}, ["R1", "R2", "R3"])
    assert sm.values.tolist() == [[1, 1, 0]]


def test_score_matrix_roundtrip_and_checks(tmp_path):
    rng = np.random.default_rng(3)
    sm = ScoreMatrix(["a", "b"], ["x", "y", "z"], rng.normal(size=(2, 3)), rng.random((2, 3)) < 0.5, np.ones((2, 3), bool))
    sm.save(tmp_path / "s")
    back = ScoreMatrix.load(tmp_path / "s")
    assert back.values.tobytes() == sm.values.tobytes()
    assert np.array_equal(back.labels, sm.labels) and back.rows == sm.rows
    t = sm.transpose()
    assert t.rows == sm.cols and np.array_equal(t.values, sm.values.T)
    with pytest.raises(DataError):
        ScoreMatrix(["a"], ["x"], np.zeros((2, 1)))
    with pytest.raises(DataError):
        ScoreMatrix(["a"], ["x"], np.array([[np.inf]]))


def test_retrieval_pool_orientation():
    pos = [Pair("E1", "R1", 1), Pair("E2", "R1", 1), Pair("E2", "R2", 1)]
    neg = [Pair("E1", "R2", 0), Pair("E3", "R1", 0)]
    rows, cols, lab, pool = evalrank.retrieval_pool(pos, neg, "enzyme->reactions")
    assert rows == ["E1", "E2"] and cols == ["R1", "R2"]
    assert lab.tolist() == [[True, False], [True, True]] and pool.all()
    rows, cols, lab, pool = evalrank.retrieval_pool(pos, neg, "reaction->enzymes")
    assert rows == ["R1", "R2"] and cols == ["E1", "E2", "E3"]
    assert pool.tolist() == [[True, True, True], [True, True, False]]
    with pytest.raises(DataError, match="empty candidate pool"):
        evalrank.retrieval_pool([], neg, "enzyme->reactions")
    with pytest.raises(ValueError):
        evalrank.retrieval_pool(pos, neg, "sideways")


class _GridScorer:
    """Deterministic fake: score = hash-like function of the pair."""

    def score_grid(self, eids, rids, params):
        return np.array([[((int(e[1:]) * 7 + int(r[1:]) * 3) % 11) / 10 for r in rids] for e in eids])


def test_split_directions_are_transposes():
    pairs = [Pair(f"E{i}", f"R{j}", 1) for i in range(4) for j in range(3) if (i + j) % 2 == 0]
    negs = [Pair(f"E{i}", f"R{j}", 0) for i in range(4) for j in range(3) if (i + j) % 2 == 1]
    m = SplitManifest("time", {}, [], [], list(range(len(pairs))))
    e2r = evalrank.score_split(_GridScorer(), {}, pairs, negs, m, "enzyme->reactions")
    r2e = evalrank.score_split(_GridScorer(), {}, pairs, negs, m, "reaction->enzymes")
    assert e2r.rows == r2e.cols and e2r.cols == r2e.rows
    assert np.array_equal(e2r.values, r2e.values.T)
    assert np.array_equal(e2r.labels, r2e.labels.T)


def test_single_positive_pool_is_perfect():
    pairs = [Pair("E1", "R1", 1), Pair("E2", "R2", 1)]
    m = SplitManifest("time", {}, [], [], [0, 1])
    rep, _ = evalrank.evaluate_split(_GridScorer(), {}, pairs, [], m)
    assert (rep.top_acc[1], rep.mean_rank, rep.mrr) == (1.0, 1.0, 1.0)


def test_report_dict_and_tsv(tmp_path):
    rep = ranking_metrics([[0.9, 0.8, 0.1]], [[0, 1, 1]], setting="demo")
    back = evalrank.MetricsReport.from_dict(rep.to_dict())
    assert back.mrr == rep.mrr and back.top_acc == rep.top_acc
    evalrank.write_reports_tsv([rep], tmp_path / "r.tsv")
    header, row = (tmp_path / "r.tsv").read_text().splitlines()
    assert header.split("\t") == list(evalrank.TSV_COLUMNS)
    assert row.split("\t")[0] == "demo"
