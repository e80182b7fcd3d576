"""Deterministic synthetic corpora with a known, learnable pairing rule.

Every enzyme belongs to one reaction class and catalyzes every reaction of
that class. The class is written into the enzyme's residue embeddings (a class
prototype plus per-residue noise) but not into its sequence: sequence families
are drawn independently of class, so sequence similarity carries no
information about function. Regenerate the bundled toy corpus with
``python -m enzrank.synth data/toy``.
"""

from __future__ import annotations

import argparse
import datetime as _dt
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dataio
from .dataio import EnzymeRecord, Pair, PairSet, ReactionRecord
from .splitgen import mine_negatives

RESIDUES = "ACDEFGHIKLMNPQRSTVWY"


def _templates(n: int) -> list[tuple[str, str]]:
    """(substrates, products) per class for an alkyl chain of ``n`` carbons."""
    c = "C" * n
    return [
        (f"{c}O", f"{c[:-1]}C=O"),  # alcohol oxidation
        (f"{c}O.N", f"{c}N.O"),  # amination
        (f"{c}O.OP(=O)(O)O", f"{c}OP(=O)(O)O.O"),  # phosphorylation
        (f"{c}.ClCl", f"{c}Cl.Cl"),  # chlorination
        (f"{c}O.S", f"{c}S.O"),  # thiolation
        (f"{c}.O=C=O", f"{c}C(=O)O"),  # carboxylation
        (f"c1ccccc1{c}", f"Oc1ccccc1{c}"),  # aromatic hydroxylation
        (f"{c}C(O)C", f"{c}C=C.O"),  # dehydration
    ]


MAX_CLASSES = len(_templates(1))


@dataclass
class SyntheticCorpus:
    enzymes: list[EnzymeRecord]
    reactions: list[ReactionRecord]
    pairs: PairSet
    enzyme_class: dict[str, int] = field(default_factory=dict)
    reaction_class: dict[str, int] = field(default_factory=dict)
    family: dict[str, int] = field(default_factory=dict)

    def sequences(self) -> dict[str, str]:
        return {e.id: e.sequence for e in self.enzymes}

    def reaction_strings(self) -> dict[str, str]:
        return {r.id: r.canonical_string for r in self.reactions}


def _mutate(seq: str, rate: float, rng: np.random.Generator) -> str:
    out = []
    for ch in seq:
        u = rng.random()
        if u < rate * 0.8:
            out.append(RESIDUES[rng.integers(len(RESIDUES))])
        elif u < rate * 0.9:
            continue  # deletion
        elif u < rate:
            out.append(ch)
            out.append(RESIDUES[rng.integers(len(RESIDUES))])
        else:
            out.append(ch)
    return "".join(out) or seq[:1]


def _coords(n: int, rng: np.random.Generator) -> np.ndarray:
    steps = rng.normal(size=(n, 3))
    steps *= 3.8 / np.linalg.norm(steps, axis=1, keepdims=True)
    return np.cumsum(steps, axis=0)


def _date(rng: np.random.Generator, late_fraction: float) -> int:
    if rng.random() < late_fraction:
        lo, hi = _dt.date(2011, 1, 1), _dt.date(2016, 12, 31)
    else:
        lo, hi = _dt.date(2000, 1, 1), _dt.date(2010, 12, 31)
    return dataio.date_to_days(lo) + int(rng.integers((hi - lo).days + 1))


def make_corpus(
    n_classes: int = 5,
    reactions_per_class: int = 4,
    enzymes_per_class: int = 5,
    n_families: int = 8,
    length: tuple[int, int] = (30, 50),
    d_plm: int = 64,
    noise: float = 1.0,
    mutation: float = 0.1,
    late_fraction: float = 0.1,
    seed: int = 0,
) -> SyntheticCorpus:
    """Positive pairs only: every enzyme of class c with every reaction of class c."""
    if not 1 <= n_classes <= MAX_CLASSES:
        raise ValueError(f"n_classes must be in [1, {MAX_CLASSES}]")
    rng = np.random.default_rng(seed)
    reactions, r_class = [], {}
    for n in range(1, reactions_per_class + 1):
        for c, (subs, prods) in enumerate(_templates(n)[:n_classes]):
            rid = f"RX{c:02d}{n:03d}"
            reactions.append(ReactionRecord(rid, subs.split("."), prods.split(".")))
            r_class[rid] = c
    reactions.sort(key=lambda r: r.id)
    ancestors = [
        "".join(RESIDUES[i] for i in rng.integers(len(RESIDUES), size=rng.integers(length[0], length[1] + 1)))
        for _ in range(n_families)
    ]
    protos = rng.normal(size=(n_classes, d_plm))
    enzymes, e_class, fam = [], {}, {}
    n_enz = n_classes * enzymes_per_class
    classes = np.repeat(np.arange(n_classes), enzymes_per_class)
    for i in range(n_enz):
        f = int(rng.integers(n_families))
        seq = _mutate(ancestors[f], mutation, rng)
        c = int(classes[i])
        emb = protos[c] + noise * rng.normal(size=(len(seq), d_plm))
        eid = f"E{i:04d}"
        enzymes.append(EnzymeRecord(eid, seq, _coords(len(seq), rng), emb.astype(np.float32)))
        e_class[eid], fam[eid] = c, f
    pairs = [
        Pair(e.id, r.id, 1, _date(rng, late_fraction))
        for e in enzymes
        for r in reactions
        if e_class[e.id] == r_class[r.id]
    ]
    return SyntheticCorpus(enzymes, reactions, PairSet(pairs), e_class, r_class, fam)


def with_negatives(corpus: SyntheticCorpus, k: int = 2, total: int | None = None, seed: int = 0) -> PairSet:
    """Positives plus mined hard negatives, topped up with random cross-class
    pairs when ``total`` asks for more rows than mining produced."""
    pos = list(corpus.pairs)
    negs = mine_negatives(corpus.pairs, corpus.sequences(), corpus.reaction_strings(), k=k)
    rows = pos + [n.as_pair() for n in negs]
    if total is not None:
        if len(rows) > total:
            rows = pos + [n.as_pair() for n in negs][: max(0, total - len(pos))]
        taken = {(p.enzyme_id, p.reaction_id) for p in rows}
        spare = sorted(
            (e.id, r.id)
            for e in corpus.enzymes
            for r in corpus.reactions
            if corpus.enzyme_class[e.id] != corpus.reaction_class[r.id] and (e.id, r.id) not in taken
        )
        rng = np.random.default_rng(seed)
        need = total - len(rows)
        if need > len(spare):
            raise ValueError(f"corpus too small for {total} pairs")
        for j in sorted(rng.choice(len(spare), size=need, replace=False)) if need > 0 else []:
            rows.append(Pair(spare[j][0], spare[j][1], 0))
    return PairSet(rows)


def write_corpus(corpus: SyntheticCorpus, directory) -> None:
    """Pairs, FASTA, reaction table and per-enzyme tensor directories."""
    d = Path(directory)
    (d / "embeddings").mkdir(parents=True, exist_ok=True)
    (d / "coords").mkdir(parents=True, exist_ok=True)
    dataio.write_pairs(corpus.pairs, d / "pairs.tsv")
    dataio.write_fasta(corpus.enzymes, d / "enzymes.fasta")
    dataio.write_reactions(corpus.reactions, d / "reactions.tsv")
    for e in corpus.enzymes:
        dataio.write_tensor(e.embedding, d / "embeddings" / f"{e.id}.rztf")
        dataio.write_tensor(e.coords, d / "coords" / f"{e.id}.rztf")


def toy_corpus() -> SyntheticCorpus:
    """The bundled 200-pair corpus: 5 classes x 4 reactions x 10 enzymes."""
    return make_corpus(n_classes=5, reactions_per_class=4, enzymes_per_class=10, n_families=12, seed=7)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="python -m enzrank.synth", description="write the toy corpus")
    ap.add_argument("directory")
    args = ap.parse_args(argv)
    write_corpus(toy_corpus(), args.directory)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
