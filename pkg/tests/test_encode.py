import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from enzrank import encode
from enzrank.chemgraph import parse_components, parse_smiles
from enzrank.dataio import EnzymeRecord
from enzrank.encode import EncoderConfig

import oracles

CFG = EncoderConfig(d_r=8, d_plm=6, phi_layers=2, psi_layers=1, knn=4)


def _params(seed=0, cfg=CFG):
    rng = np.random.default_rng(seed)
    p = {}
    p.update(encode.init_phi_params(cfg, rng))
    p.update(encode.init_attention_params(cfg, rng))
    p.update(encode.init_psi_params(cfg, rng))
    return p


def test_zero_layers_identity():
    g = parse_smiles("CCO")
    x = np.random.default_rng(1).normal(size=(3, 8))
    assert np.array_equal(encode.message_pass(g, x, 0, _params()).value, x)


def test_isolated_atom_self_only():
    p = _params()
    g = parse_smiles("C")
    x = np.random.default_rng(2).normal(size=(1, 8))
    got = encode.message_pass(g, x, 1, p).value
    h = x @ p["phi.0.W_self"] + p["phi.0.b"]
    h = h / (1 + np.exp(-h))
    want = (h - h.mean()) / np.sqrt(h.var() + 1e-5)
    assert np.allclose(got, want, atol=1e-12)


def test_message_pass_width_mismatch():
    with pytest.raises(ValueError):
        encode.message_pass(parse_smiles("CC"), np.zeros((2, 5)), 1, _params())
    with pytest.raises(ValueError):
        encode.message_pass(parse_smiles("CC"), np.zeros((3, 8)), 1, _params())


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(["CCO", "c1ccccc1O", "CC(=O)OC", "N#CC(N)C(=O)[O-]"]), st.randoms(use_true_random=False))
def test_message_pass_equivariance(s, r):
    g = parse_smiles(s)
    perm = list(range(g.n_atoms))
    r.shuffle(perm)
    x = np.random.default_rng(3).normal(size=(g.n_atoms, 8))
    xp = np.empty_like(x)
    xp[perm] = x
    a = encode.message_pass(g, x, 2, _params()).value
    b = encode.message_pass(g.relabel(perm), xp, 2, _params()).value
    assert np.allclose(b[perm], a, atol=1e-6)


def test_attention_singleton():
    p = _params()
    vs = np.random.default_rng(4).normal(size=(1, 8))
    vp = np.random.default_rng(5).normal(size=(1, 8))
    s_bar, p_bar, a_s, a_p = encode.cross_attention(vs, vp, p, return_weights=True)
    assert a_s.value[0, 0] == 1.0 and a_p.value[0, 0] == 1.0
    assert np.allclose(s_bar.value, vp @ p["attn.s.WV"])
    assert np.allclose(p_bar.value, vs @ p["attn.p.WV"])


def test_attention_two_identical_nodes():
    p = _params()
    row = np.random.default_rng(6).normal(size=(1, 8))
    vs = np.random.default_rng(7).normal(size=(3, 8))
    vp = np.vstack([row, row])
    s_bar, _, a_s, _ = encode.cross_attention(vs, vp, p, return_weights=True)
    assert np.allclose(a_s.value, 0.5)
    assert np.allclose(s_bar.value, np.repeat(row @ p["attn.s.WV"], 3, axis=0))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**31))
def test_attention_rows_sum_to_one(ns, np_, seed):
    r = np.random.default_rng(seed)
    _, _, a_s, a_p = encode.cross_attention(r.normal(size=(ns, 8)) * 3, r.normal(size=(np_, 8)) * 3, _params(), True)
    assert np.allclose(a_s.value.sum(1), 1, atol=1e-6) and np.allclose(a_p.value.sum(1), 1, atol=1e-6)


def test_attention_empty_side():
    with pytest.raises(ValueError):
        encode.cross_attention(np.zeros((0, 8)), np.zeros((2, 8)), _params())


def test_reaction_embed_symmetric_sides():
    p = _params()
    for w in ("WQ", "WK", "WV"):
        p[f"attn.p.{w}"] = p[f"attn.s.{w}"]
    mols = parse_components("CCO.O")
    vs = encode.embed_side(mols, p, CFG)
    s_bar, p_bar = encode.cross_attention(vs, vs, p)
    assert np.allclose(s_bar.value.mean(0), p_bar.value.mean(0), atol=1e-6)


def test_reaction_embed_component_order_and_width():
    p = _params()
    a = encode.reaction_embed(parse_components("CCO.O"), parse_components("CC=O"), p, CFG).value
    b = encode.reaction_embed(parse_components("O.CCO"), parse_components("CC=O"), p, CFG).value
    assert a.shape == (1, 8)
    assert np.allclose(a, b, atol=1e-9)
    big = EncoderConfig()
    q = {**encode.init_phi_params(big, np.random.default_rng(0)), **encode.init_attention_params(big, np.random.default_rng(1))}
    assert encode.reaction_embed([parse_smiles("CO")], [parse_smiles("C=O")], q, big).shape == (1, 256)


def test_pca_axis_points():
    x = np.array([[0.0, 0, 0], [1, 0, 0], [3, 0, 0]])
    fs = encode.pca_frames(x)
    assert np.allclose(np.abs(fs.axes[:, 0]), [1, 0, 0])
    assert np.allclose(np.abs(fs.axes), np.eye(3))
    assert fs.eigenvalues[1] == 0 and fs.eigenvalues[2] == 0


def test_pca_single_point():
    fs = encode.pca_frames([[1.0, 2.0, 3.0]])
    assert np.array_equal(fs.centroid, [1, 2, 3])
    assert np.allclose(fs.axes, np.eye(3))
    assert len(fs) == 8 and len(fs.frames()) == 8


def test_pca_rotation():
    r = np.random.default_rng(8)
    x = r.normal(size=(30, 3)) * [5, 2, 1]
    rot = oracles.random_rotation(r)
    a, b = encode.pca_frames(x), encode.pca_frames(x @ rot.T + 4.0)
    assert np.allclose(a.eigenvalues, b.eigenvalues, rtol=1e-8, atol=1e-8)
    for i in range(3):
        assert abs(abs(b.axes[:, i] @ (rot @ a.axes[:, i])) - 1) < 1e-8


def test_pca_rejects_bad_shape():
    with pytest.raises(ValueError):
        encode.pca_frames(np.zeros((0, 3)))
    with pytest.raises(ValueError):
        encode.pca_frames(np.zeros((4, 2)))


def _enzyme(n, seed):
    r = np.random.default_rng(seed)
    return EnzymeRecord("e", "M" * n, np.cumsum(r.normal(size=(n, 3)), 0) * 3, r.normal(size=(n, 6)))


def test_frame_average_se3_invariance():
    p = _params()
    e = _enzyme(12, 9)
    base = encode.frame_average(e.embedding, e.coords, p, CFG).value
    r = np.random.default_rng(10)
    for _ in range(5):
        rot = oracles.random_rotation(r)
        moved = encode.frame_average(e.embedding, e.coords @ rot.T + r.normal(size=3) * 10, p, CFG).value
        assert oracles.relative_error(moved, base) < 1e-5


def test_frame_average_coordinate_free_psi():
    p = _params()
    for k in list(p):
        if k.endswith("W_geo"):
            p[k] = np.zeros_like(p[k])
    e = _enzyme(7, 11)
    fa = encode.frame_average(e.embedding, e.coords, p, CFG).value
    nbr = encode.knn_indices(e.coords - e.coords.mean(0), CFG.knn)
    one = encode.psi(e.embedding, e.coords - e.coords.mean(0), p, CFG, nbr).value
    assert np.allclose(fa, one, atol=1e-12)


def test_frame_average_single_residue():
    p = _params()
    e = _enzyme(1, 12)
    fa = encode.frame_average(e.embedding, e.coords, p, CFG).value
    one = encode.psi(e.embedding, np.zeros((1, 3)), p, CFG).value
    assert np.allclose(fa, one, atol=1e-12)
    with pytest.raises(ValueError):
        encode.frame_average(e.embedding, None, p, CFG)


def test_enzyme_embed_modes():
    e = _enzyme(1, 13)
    assert np.allclose(encode.enzyme_embed(e).value, e.embedding)
    const = EnzymeRecord("c", "MKV", embedding=np.tile(np.arange(6.0), (3, 1)))
    assert np.allclose(encode.enzyme_embed(const).value, np.arange(6.0))
    with pytest.raises(ValueError, match="coordinates"):
        encode.enzyme_embed(const, "frame_averaged", _params(), CFG)
    with pytest.raises(ValueError, match="embedding"):
        encode.enzyme_embed(EnzymeRecord("x", "MK"))
    with pytest.raises(ValueError):
        encode.enzyme_embed(const, "median")
    e5 = _enzyme(5, 14)
    assert encode.enzyme_embed(e5, "frame_averaged", _params(), CFG).shape == (1, 6)


def test_knn_ties_by_index():
    pts = np.array([[0.0, 0, 0], [1, 0, 0], [-1, 0, 0], [0, 2, 0]])
    assert encode.knn_indices(pts, 2)[0].tolist() == [1, 2]
    assert encode.knn_indices(pts[:1], 3).shape == (1, 0)
