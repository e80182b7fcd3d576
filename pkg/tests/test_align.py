import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from enzrank import align
from enzrank.align import AlignParams, mine_topk

import oracles

seqs = st.text(alphabet="ACDEG", max_size=12)
nonempty = st.text(alphabet="ACDEG", min_size=1, max_size=12)


def test_levenshtein_examples():
    assert align.levenshtein("", "abc") == 3
    assert align.levenshtein("kitten", "sitting") == 3
    assert align.levenshtein("MKV", "MKV") == 0


def test_levenshtein_cutoff():
    assert align.levenshtein("kitten", "sitting", cutoff=3) == 3
    assert align.levenshtein("kitten", "sitting", cutoff=2) is None
    assert align.levenshtein("AAAAAAAA", "BBBBBBBB", cutoff=1) is None


def test_difference_examples():
    assert align.seq_difference("ABC", "ABC") == 0.0
    assert align.seq_difference("AAAA", "BBBB") == 1.0
    assert align.seq_difference("AAAA", "AABB") == 0.5
    with pytest.raises(ValueError):
        align.seq_difference("", "A")


def test_nw_examples():
    p = AlignParams(1, -1, -1)
    assert align.needleman_wunsch("AB", "AB", p) == 2
    assert align.needleman_wunsch("GATTACA", "GCATGCU", p) == 0
    assert align.needleman_wunsch("A", "", p) == -1
    assert align.nw_similarity("MKVL", "MKVL", p) == 1.0
    assert align.nw_similarity("AAAA", "BBBB", p) == 0.0
    assert align.nw_similarity("MKVLQQ", "MKVLQQ", p) == 1.0


def test_sw_examples():
    p = AlignParams(2, -1, -2)
    assert align.smith_waterman("XXABYY", "QQABQQ", p) == 4
    assert align.smith_waterman("AAAA", "BBBB", p) == 0
    assert align.smith_waterman("KVL", "MMKVLQQ", p) == 6


@settings(max_examples=200, deadline=None)
@given(seqs, seqs)
def test_levenshtein_matches_oracle(a, b):
    assert align.levenshtein(a, b) == oracles.levenshtein(a, b)
    assert align.levenshtein(a, b) == align.levenshtein(b, a)


@settings(max_examples=200, deadline=None)
@given(seqs, seqs, seqs)
def test_triangle_inequality(a, b, c):
    assert align.levenshtein(a, c) <= align.levenshtein(a, b) + align.levenshtein(b, c)


@settings(max_examples=150, deadline=None)
@given(seqs, seqs, st.sampled_from([(1, -1, -1), (2, -1, -2), (3, 0, -1)]))
def test_nw_sw_match_oracle(a, b, p):
    ap = AlignParams(*p)
    assert align.needleman_wunsch(a, b, ap) == oracles.needleman_wunsch(a, b, *p)
    assert align.smith_waterman(a, b, ap) == oracles.smith_waterman(a, b, *p)


@settings(max_examples=150, deadline=None)
@given(seqs, seqs)
def test_band_wide_equals_unbanded(a, b):
    w = max(len(a), len(b))
    assert align.levenshtein(a, b, band=w) == align.levenshtein(a, b)
    for p in (AlignParams(1, -1, -1, band=w), AlignParams(2, -1, -2, band=w)):
        full = AlignParams(p.match, p.mismatch, p.gap)
        assert align.needleman_wunsch(a, b, p) == align.needleman_wunsch(a, b, full)
        assert align.smith_waterman(a, b, p) == align.smith_waterman(a, b, full)


@settings(max_examples=100, deadline=None)
@given(seqs, seqs, st.integers(0, 12))
def test_cutoff_consistent(a, b, c):
    d = oracles.levenshtein(a, b)
    got = align.levenshtein(a, b, cutoff=c)
    assert got == (d if d <= c else None)


@settings(max_examples=100, deadline=None)
@given(nonempty, nonempty)
def test_similarity_ranges(a, b):
    assert 0.0 <= align.seq_difference(a, b) <= 1.0
    assert 0.0 <= align.nw_similarity(a, b) <= 1.0
    assert align.seq_similarity(a, b) == pytest.approx(1 - align.seq_difference(a, b))


def test_negative_band_rejected():
    with pytest.raises(ValueError):
        AlignParams(band=-1)


def _random_strings(n, seed, lo=5, hi=25, alphabet="ACDEFG"):
    rng = np.random.default_rng(seed)
    return {f"s{i:03d}": "".join(rng.choice(list(alphabet), size=rng.integers(lo, hi + 1))) for i in range(n)}


def test_topk_nearest_non_self():
    strings = {"a": "MKVL", "b": "MKVI", "c": "QQQQ"}
    t = mine_topk(list(strings), list(strings), strings, k=1)
    assert t["a"][0][0] == "b" and t["b"][0][0] == "a"


def test_topk_k_larger_than_pool():
    strings = _random_strings(6, 1)
    t = mine_topk(list(strings), list(strings), strings, k=50)
    for q, row in t.rows.items():
        assert len(row) == 5 and q not in [c for c, _ in row]
        sims = [s for _, s in row]
        assert sims == sorted(sims, reverse=True)


@pytest.mark.parametrize("metric", ["seq_difference", "nw_similarity"])
def test_pruned_equals_brute(metric):
    strings = _random_strings(200, 2, alphabet="ACD")
    ids = list(strings)
    if metric == "seq_difference":
        sim = lambda q, c: align.seq_similarity(strings[q], strings[c])  # noqa: E731
    else:
        sim = lambda q, c: align.nw_similarity(strings[q], strings[c])  # noqa: E731
    brute = oracles.topk_brute(ids[:40], ids, sim, k=7)
    for prune in (True, False):
        got = mine_topk(ids[:40], ids, strings, metric=metric, k=7, prune=prune)
        assert got.rows == brute


def test_threads_do_not_change_table():
    strings = _random_strings(120, 3)
    ids = list(strings)
    a = mine_topk(ids, ids, strings, k=5, threads=1)
    b = mine_topk(ids, ids, strings, k=5, threads=4)
    assert a.rows == b.rows


def test_topk_tsv_roundtrip(tmp_path):
    strings = _random_strings(20, 4)
    t = mine_topk(list(strings), list(strings), strings, k=3)
    t.to_tsv(tmp_path / "t.tsv")
    assert align.TopKTable.from_tsv(tmp_path / "t.tsv").rows == t.rows


def test_topk_bad_args():
    with pytest.raises(ValueError):
        mine_topk(["a"], ["a"], {"a": "A"}, k=0)
    with pytest.raises(ValueError):
        mine_topk(["a"], ["a"], {"a": "A"}, metric="blast")
