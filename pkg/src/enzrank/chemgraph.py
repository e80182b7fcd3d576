"""SMILES parsing into heavy-atom graphs, one-hot featurization, circular fingerprints.

Supported SMILES subset: organic-subset atoms (B C N O P S F Cl Br I and the
aromatic lowercase forms), bracket atoms with isotope/chirality/H-count/charge/
class, ring closures (digits and ``%nn``), branches, bond symbols ``- = # :``
and the dot disconnector. Stereo marks (``/ \\ @``) are accepted and dropped.
Implicit hydrogens are never materialized as nodes.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

VOCAB_VERSION = 1
# 30 elements common in organic / biochemical reactions; everything else -> OTHER.
ELEMENT_VOCAB: tuple[str, ...] = (
    "C", "N", "O", "S", "P", "F", "Cl", "Br", "I", "H",
    "B", "Si", "Se", "Na", "K", "Li", "Mg", "Ca", "Fe", "Zn",
    "Cu", "Mn", "Co", "Ni", "Mo", "W", "V", "Cr", "Al", "As",
)  # fmt: skip
CHARGE_BUCKETS = (-2, -1, 0, 1, 2)  # outer buckets absorb |charge| >= 2
BOND_TYPES = ("single", "double", "triple", "aromatic")
BOND_INDEX = {b: i for i, b in enumerate(BOND_TYPES)}

_ORGANIC = ("Cl", "Br", "B", "C", "N", "O", "P", "S", "F", "I")
_AROMATIC_ORGANIC = ("b", "c", "n", "o", "p", "s")
_BOND_SYMBOLS = {"-": "single", "=": "double", "#": "triple", ":": "aromatic", "$": "triple"}
_STEREO_BONDS = "/\\"

# Periodic table symbols accepted inside brackets.
_ELEMENTS = frozenset(
    """H He Li Be B C N O F Ne Na Mg Al Si P S Cl Ar K Ca Sc Ti V Cr Mn Fe Co Ni Cu
    Zn Ga Ge As Se Br Kr Rb Sr Y Zr Nb Mo Tc Ru Rh Pd Ag Cd In Sn Sb Te I Xe Cs Ba
    La Ce Pr Nd Pm Sm Eu Gd Tb Dy Ho Er Tm Yb Lu Hf Ta W Re Os Ir Pt Au Hg Tl Pb Bi
    Po At Rn Fr Ra Ac Th Pa U Np Pu Am Cm Bk Cf Es Fm Md No Lr Rf Db Sg Bh Hs Mt Ds
    Rg Cn Nh Fl Mc Lv Ts Og""".split()
)
_AROMATIC_BRACKET = {"b": "B", "c": "C", "n": "N", "o": "O", "p": "P", "s": "S",
                     "se": "Se", "as": "As", "te": "Te"}  # fmt: skip


class SmilesError(ValueError):
    """SMILES string outside the supported grammar."""


@dataclass(frozen=True)
class Atom:
    element: str
    charge: int = 0
    aromatic: bool = False


@dataclass
class MolGraph:
    atoms: list[Atom]
    bonds: list[tuple[int, int, str]] = field(default_factory=list)
    coords: np.ndarray | None = None

    def __post_init__(self) -> None:
        if not self.atoms:
            raise SmilesError("molecule has no atoms")
        n = len(self.atoms)
        for i, j, b in self.bonds:
            if not (0 <= i < n and 0 <= j < n) or i == j:
                raise SmilesError(f"bond endpoint out of range: ({i}, {j})")
            if b not in BOND_INDEX:
                raise SmilesError(f"unknown bond type {b!r}")
        if self.coords is not None:
            self.coords = np.asarray(self.coords, dtype=np.float64)
            if self.coords.shape != (n, 3):
                raise SmilesError(f"coords shape {self.coords.shape}, expected ({n}, 3)")

    @property
    def n_atoms(self) -> int:
        return len(self.atoms)

    def neighbors(self, i: int) -> list[tuple[int, str]]:
        out = []
        for a, b, t in self.bonds:
            if a == i:
                out.append((b, t))
            elif b == i:
                out.append((a, t))
        return out

    def degrees(self) -> list[int]:
        deg = [0] * self.n_atoms
        for a, b, _ in self.bonds:
            deg[a] += 1
            deg[b] += 1
        return deg

    def adjacency(self) -> np.ndarray:
        """(n_bond_types, N, N) symmetric 0/1 adjacency per bond type."""
        adj = np.zeros((len(BOND_TYPES), self.n_atoms, self.n_atoms))
        for a, b, t in self.bonds:
            k = BOND_INDEX[t]
            adj[k, a, b] = adj[k, b, a] = 1.0
        return adj

    def relabel(self, perm: Sequence[int]) -> "MolGraph":
        """Graph with atom ``i`` moved to position ``perm[i]``."""
        perm = list(perm)
        atoms: list[Atom | None] = [None] * self.n_atoms
        for old, new in enumerate(perm):
            atoms[new] = self.atoms[old]
        bonds = [(perm[a], perm[b], t) for a, b, t in self.bonds]
        coords = None
        if self.coords is not None:
            coords = np.empty_like(self.coords)
            coords[perm] = self.coords
        return MolGraph(atoms, bonds, coords)  # type: ignore[arg-type]

    def components(self) -> list["MolGraph"]:
        """Connected components, ordered by their lowest atom index."""
        parent = list(range(self.n_atoms))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for a, b, _ in self.bonds:
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
        groups: dict[int, list[int]] = {}
        for i in range(self.n_atoms):
            groups.setdefault(find(i), []).append(i)
        if len(groups) == 1:
            return [self]
        out = []
        for members in groups.values():
            remap = {old: new for new, old in enumerate(members)}
            bonds = [(remap[a], remap[b], t) for a, b, t in self.bonds if a in remap]
            coords = None if self.coords is None else self.coords[members]
            out.append(MolGraph([self.atoms[i] for i in members], bonds, coords))
        return out


# ------------------------------------------------------------------------ parser


def _parse_bracket(s: str, pos: int) -> tuple[Atom, int]:
    end = s.find("]", pos)
    if end < 0:
        raise SmilesError(f"unclosed bracket atom at {pos}")
    body = s[pos + 1 : end]
    i = 0
    while i < len(body) and body[i].isdigit():  # isotope
        i += 1
    if i < len(body) and body[i] == "*":
        element, aromatic = "*", False
        i += 1
    else:
        element = None
        for length in (2, 1):
            sym = body[i : i + length]
            if len(sym) != length:
                continue
            if sym in _AROMATIC_BRACKET:
                element, aromatic = _AROMATIC_BRACKET[sym], True
                break
            if sym in _ELEMENTS:
                element, aromatic = sym, False
                break
        if element is None:
            raise SmilesError(f"unknown element in bracket atom [{body}]")
        i += length
    while i < len(body) and body[i] == "@":
        i += 1
    for tag in ("TH", "AL", "SP", "TB", "OH"):
        if body.startswith(tag, i):
            i += 2
            while i < len(body) and body[i].isdigit():
                i += 1
    if i < len(body) and body[i] == "H":
        i += 1
        while i < len(body) and body[i].isdigit():
            i += 1
    charge = 0
    if i < len(body) and body[i] in "+-":
        sign = 1 if body[i] == "+" else -1
        j = i + 1
        if j < len(body) and body[j].isdigit():
            k = j
            while k < len(body) and body[k].isdigit():
                k += 1
            charge = sign * int(body[j:k])
            i = k
        else:
            count = 1
            while j < len(body) and body[j] == body[i]:
                count += 1
                j += 1
            charge = sign * count
            i = j
    if i < len(body) and body[i] == ":":  # atom class
        i += 1
        while i < len(body) and body[i].isdigit():
            i += 1
    if i != len(body):
        raise SmilesError(f"unparsed bracket content [{body}] at offset {i}")
    return Atom(element, charge, aromatic), end + 1


def parse_smiles(s: str) -> MolGraph:
    """Parse ``s`` into one heavy-atom graph (dot-separated parts stay disconnected)."""
    if not s:
        raise SmilesError("empty SMILES")
    atoms: list[Atom] = []
    bonds: dict[tuple[int, int], str] = {}
    branch_stack: list[int] = []
    rings: dict[int, tuple[int, str | None]] = {}
    prev: int | None = None
    pending: str | None = None
    pos = 0

    def add_bond(a: int, b: int, btype: str | None) -> None:
        if btype is None:
            btype = "aromatic" if atoms[a].aromatic and atoms[b].aromatic else "single"
        key = (min(a, b), max(a, b))
        if a == b or key in bonds:
            raise SmilesError(f"invalid or duplicate bond between atoms {a} and {b}")
        bonds[key] = btype

    def add_atom(atom: Atom) -> None:
        nonlocal prev, pending
        atoms.append(atom)
        idx = len(atoms) - 1
        if prev is not None:
            add_bond(prev, idx, pending)
        prev, pending = idx, None

    while pos < len(s):
        ch = s[pos]
        if ch == "[":
            atom, pos = _parse_bracket(s, pos)
            add_atom(atom)
            continue
        if ch == "*":
            add_atom(Atom("*"))
            pos += 1
            continue
        matched = False
        for sym in _ORGANIC:
            if s.startswith(sym, pos):
                add_atom(Atom(sym))
                pos += len(sym)
                matched = True
                break
        if matched:
            continue
        if ch in _AROMATIC_ORGANIC:
            add_atom(Atom(ch.upper(), 0, True))
            pos += 1
            continue
        if ch in _BOND_SYMBOLS:
            if prev is None or pending is not None:
                raise SmilesError(f"misplaced bond symbol {ch!r} at {pos}")
            pending = _BOND_SYMBOLS[ch]
            pos += 1
            continue
        if ch in _STEREO_BONDS:
            pos += 1
            continue
        if ch == "(":
            if prev is None:
                raise SmilesError(f"branch without preceding atom at {pos}")
            branch_stack.append(prev)
            pos += 1
            continue
        if ch == ")":
            if not branch_stack:
                raise SmilesError(f"unbalanced parenthesis at {pos}")
            if pending is not None:
                raise SmilesError(f"dangling bond symbol before ')' at {pos}")
            prev = branch_stack.pop()
            pos += 1
            continue
        if ch.isdigit() or ch == "%":
            if ch == "%":
                digits = s[pos + 1 : pos + 3]
                if len(digits) != 2 or not digits.isdigit():
                    raise SmilesError(f"bad %nn ring closure at {pos}")
                ring, pos = int(digits), pos + 3
            else:
                ring, pos = int(ch), pos + 1
            if prev is None:
                raise SmilesError(f"ring closure without atom at {pos}")
            if ring in rings:
                other, btype = rings.pop(ring)
                if btype is not None and pending is not None and btype != pending:
                    raise SmilesError(f"conflicting ring-closure bonds for ring {ring}")
                add_bond(other, prev, pending or btype)
            else:
                rings[ring] = (prev, pending)
            pending = None
            continue
        if ch == ".":
            if branch_stack:
                raise SmilesError(f"'.' inside a branch at {pos}")
            if pending is not None:
                raise SmilesError(f"dangling bond symbol before '.' at {pos}")
            prev = None
            pos += 1
            continue
        raise SmilesError(f"unknown element or token {ch!r} at {pos}")

    if branch_stack:
        raise SmilesError("unbalanced parentheses: unclosed branch")
    if rings:
        raise SmilesError(f"dangling ring closure(s): {sorted(rings)}")
    if pending is not None:
        raise SmilesError("dangling bond symbol at end of SMILES")
    if not atoms:
        raise SmilesError("SMILES contains no atoms")
    return MolGraph(atoms, [(a, b, t) for (a, b), t in bonds.items()])


def parse_components(s: str) -> list[MolGraph]:
    """Parse and split a (possibly dotted) SMILES into connected molecules."""
    return parse_smiles(s).components()


# ------------------------------------------------------------------ featurization


def atom_feature_dim(vocab: Sequence[str] = ELEMENT_VOCAB) -> int:
    return len(vocab) + 1 + len(CHARGE_BUCKETS) + 1


def featurize_atoms(g: MolGraph, vocab: Sequence[str] = ELEMENT_VOCAB) -> np.ndarray:
    """One-hot element (with trailing OTHER slot) | charge bucket | aromatic flag."""
    index = {e: i for i, e in enumerate(vocab)}
    n_el = len(vocab) + 1
    x = np.zeros((g.n_atoms, atom_feature_dim(vocab)))
    for row, atom in enumerate(g.atoms):
        x[row, index.get(atom.element, n_el - 1)] = 1.0
        c = min(max(atom.charge, CHARGE_BUCKETS[0]), CHARGE_BUCKETS[-1])
        x[row, n_el + CHARGE_BUCKETS.index(c)] = 1.0
        x[row, -1] = float(atom.aromatic)
    return x


# -------------------------------------------------------------------- fingerprints


def _hash_ints(values: Iterable[int]) -> int:
    data = b"".join(struct.pack("<q", int(v)) for v in values)
    return int.from_bytes(hashlib.blake2b(data, digest_size=8).digest(), "little")


def _element_code(symbol: str) -> int:
    return int.from_bytes(hashlib.blake2b(symbol.encode(), digest_size=4).digest(), "little")


@dataclass(frozen=True)
class Fingerprint:
    bits: np.ndarray
    radius: int

    @property
    def nbits(self) -> int:
        return int(self.bits.shape[0])

    def popcount(self) -> int:
        return int(self.bits.sum())


def circular_fingerprint(g: MolGraph, radius: int = 2, nbits: int = 2048) -> Fingerprint:
    """Morgan-style hashed environment bits; independent of atom order."""
    deg = g.degrees()
    inv = [
        _hash_ints((_element_code(a.element), deg[i], a.charge, int(a.aromatic)))
        for i, a in enumerate(g.atoms)
    ]
    nbrs = [g.neighbors(i) for i in range(g.n_atoms)]
    bits = np.zeros(nbits, dtype=np.uint8)
    for v in inv:
        bits[v % nbits] = 1
    for r in range(1, radius + 1):
        new = []
        for i in range(g.n_atoms):
            env = sorted((BOND_INDEX[t], inv[j]) for j, t in nbrs[i])
            flat = [r, inv[i]] + [x for pair in env for x in pair]
            new.append(_hash_ints(x & 0x7FFFFFFFFFFFFFFF for x in flat))
        inv = new
        for v in inv:
            bits[v % nbits] = 1
    return Fingerprint(bits, radius)


def reaction_fingerprint(
    substrates: Sequence[str | MolGraph],
    products: Sequence[str | MolGraph],
    radius: int = 2,
    nbits: int = 2048,
) -> np.ndarray:
    """OR-folded substrate bits followed by OR-folded product bits (length ``2*nbits``)."""
    if not substrates or not products:
        raise ValueError("reaction sides must be non-empty")

    def fold(side):
        acc = np.zeros(nbits, dtype=np.uint8)
        for m in side:
            g = parse_smiles(m) if isinstance(m, str) else m
            acc |= circular_fingerprint(g, radius, nbits).bits
        return acc

    return np.concatenate([fold(substrates), fold(products)])
