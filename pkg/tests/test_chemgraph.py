import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from enzrank import chemgraph
from enzrank.chemgraph import SmilesError, parse_smiles


def test_ethanol():
    g = parse_smiles("CCO")
    assert [a.element for a in g.atoms] == ["C", "C", "O"]
    assert sorted((min(i, j), max(i, j), t) for i, j, t in g.bonds) == [(0, 1, "single"), (1, 2, "single")]


def test_benzene_ring():
    g = parse_smiles("c1ccccc1")
    assert g.n_atoms == 6 and all(a.aromatic and a.element == "C" for a in g.atoms)
    assert len(g.bonds) == 6 and g.degrees() == [2] * 6
    assert {t for *_, t in g.bonds} == {"aromatic"}


def test_dangling_ring_closure():
    with pytest.raises(SmilesError, match="ring"):
        parse_smiles("C1CC")


@pytest.mark.parametrize("bad", ["", "C(", "C)", "CX", "C==C", "[Xx]", "1CC"])
def test_malformed(bad):
    with pytest.raises(SmilesError):
        parse_smiles(bad)


def test_bracket_atoms_and_hydrogens_not_nodes():
    g = parse_smiles("[NH4+].[O-]C(=O)C")
    assert g.atoms[0].element == "N" and g.atoms[0].charge == 1
    assert g.atoms[1].charge == -1
    assert g.n_atoms == 5
    assert len(g.components()) == 2


def test_branches_and_percent_ring():
    g = parse_smiles("CC(C)(C)O")
    assert g.degrees()[1] == 4
    h = parse_smiles("C%10CC%10")
    assert len(h.bonds) == 3


def test_stereo_marks_dropped():
    a = parse_smiles("F/C=C/F")
    b = parse_smiles("FC=CF")
    assert a.bonds == b.bonds
    assert parse_smiles("N[C@@H](C)C(=O)O").n_atoms == 6


def test_components_split():
    parts = chemgraph.parse_components("CCO.[Fe+2].O")
    assert [p.n_atoms for p in parts] == [3, 1, 1]
    assert parts[1].atoms[0].charge == 2


def test_featurize_small_vocab():
    x = chemgraph.featurize_atoms(parse_smiles("O"), vocab=["C", "N", "O"])
    assert list(x[0, :4]) == [0, 0, 1, 0]
    y = chemgraph.featurize_atoms(parse_smiles("[Fe]"), vocab=["C", "N", "O"])
    assert y[0, 3] == 1 and y[0, :3].sum() == 0


def test_feature_dim_default():
    assert chemgraph.atom_feature_dim() == 30 + 1 + 5 + 1
    x = chemgraph.featurize_atoms(parse_smiles("c1ccccc1[O-]"))
    assert x.shape == (7, 37)
    assert x[0, -1] == 1 and x[6, -1] == 0
    charge_block = x[:, 31:36]
    assert (charge_block.sum(axis=1) == 1).all()
    assert charge_block[6, 1] == 1


def test_wildcard_is_other():
    x = chemgraph.featurize_atoms(parse_smiles("*C"))
    assert x[0, 30] == 1


def test_fingerprint_parse_order_invariance():
    a = chemgraph.circular_fingerprint(parse_smiles("CCO"))
    b = chemgraph.circular_fingerprint(parse_smiles("OCC"))
    assert np.array_equal(a.bits, b.bits)


def test_fingerprint_radius0_single_atom():
    assert chemgraph.circular_fingerprint(parse_smiles("C"), radius=0).popcount() == 1


def test_fingerprint_stable_across_calls():
    g = parse_smiles("CC(=O)Oc1ccccc1C(=O)O")
    a = chemgraph.circular_fingerprint(g, 2, 1024).bits
    assert np.array_equal(a, chemgraph.circular_fingerprint(g, 2, 1024).bits)
    assert a.dtype == np.uint8 and a.shape == (1024,)


def test_reaction_fingerprint_layout():
    fp = chemgraph.reaction_fingerprint(["CCO"], ["CC=O"], radius=1, nbits=64)
    assert fp.shape == (128,)
    assert np.array_equal(fp[:64], chemgraph.circular_fingerprint(parse_smiles("CCO"), 1, 64).bits)
    with pytest.raises(ValueError):
        chemgraph.reaction_fingerprint([], ["C"])


# random SMILES from a tiny grammar: element atoms with optional branches / rings
_ATOMS = ["C", "N", "O", "S", "P", "Cl", "Br", "c1ccccc1", "[Fe]", "[Na+]", "[O-]", "[Se]", "[Hg]"]


@st.composite
def smiles(draw):
    n = draw(st.integers(1, 8))
    parts = []
    for _ in range(n):
        a = draw(st.sampled_from(_ATOMS))
        if a.startswith("[Na") or a.startswith("[Fe") or a.startswith("[Hg"):
            parts.append(("." if parts else "") + a + ("." if _ else ""))
            continue
        if parts and draw(st.booleans()) and not parts[-1].endswith("."):
            parts.append("(" + a + ")")
        else:
            parts.append(a)
    s = "".join(parts).strip(".").replace("..", ".")
    return s


@settings(max_examples=200, deadline=None)
@given(smiles())
def test_element_block_one_hot(s):
    try:
        g = parse_smiles(s)
    except SmilesError:
        return
    x = chemgraph.featurize_atoms(g)
    assert np.array_equal(x[:, :31].sum(axis=1), np.ones(g.n_atoms))


def test_element_block_one_hot_1000_brute():
    rng = np.random.default_rng(0)
    checked = 0
    for _ in range(1000):
        n = rng.integers(1, 7)
        s = "".join(_ATOMS[rng.integers(0, 7)] for _ in range(n))
        if rng.random() < 0.3:
            s += "." + _ATOMS[rng.integers(7, len(_ATOMS))]
        x = chemgraph.featurize_atoms(parse_smiles(s))
        assert (x[:, :31].sum(axis=1) == 1).all()
        checked += 1
    assert checked == 1000


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(["CCO", "CC(=O)O", "c1ccncc1", "OCC(N)C(=O)O", "C1CCC1Cl"]), st.randoms())
def test_fingerprint_relabel_invariance(s, r):
    g = parse_smiles(s)
    perm = list(range(g.n_atoms))
    r.shuffle(perm)
    a = chemgraph.circular_fingerprint(g, 2, 256).bits
    b = chemgraph.circular_fingerprint(g.relabel(perm), 2, 256).bits
    assert np.array_equal(a, b)


def _random_walk_smiles(rng):
    """Grammar-valid SMILES plus the number of heavy atoms it contains."""
    atoms = ["C", "N", "O", "S", "P", "F", "Cl", "Br", "I", "B", "[Fe+2]", "[NH4+]", "[O-]", "[13CH3]", "[C@@H]", "*"]
    out, n_atoms, depth, open_rings, next_ring = [], 0, 0, [], 1
    for step in range(int(rng.integers(1, 25))):
        if n_atoms and rng.random() < 0.15:
            out.append(str(rng.choice(["-", "=", "#"])) if rng.random() < 0.5 else "")
        out.append(str(rng.choice(atoms)))
        n_atoms += 1
        u = rng.random()
        if u < 0.1 and next_ring < 99:
            label = str(next_ring) if next_ring < 10 else f"%{next_ring}"
            out.append(label)
            open_rings.append((label, n_atoms))
            next_ring += 1
        elif u < 0.2 and open_rings and n_atoms - open_rings[-1][1] >= 3:
            out.append(open_rings.pop()[0])
        elif u < 0.3:
            out.append("(")
            depth += 1
        elif u < 0.4 and depth and out[-1] != "(":
            out.append(")")
            depth -= 1
    while out and out[-1] == "(":
        out.pop()
        depth -= 1
    out.append(")" * depth)
    s = "".join(out)
    for label, _ in open_rings:  # close leftovers on a fresh atom
        s += "C" + label
        n_atoms += 1
    return s, n_atoms


def test_random_walk_grammar_never_fails():
    rng = np.random.default_rng(11)
    rejected = 0
    for _ in range(2000):
        s, n = _random_walk_smiles(rng)
        try:
            g = parse_smiles(s)
        except SmilesError as exc:
            # the walk can close a ring between two atoms that are already bonded
            assert "duplicate bond" in str(exc), s
            rejected += 1
            continue
        assert g.n_atoms == n, s
    assert rejected < 100
