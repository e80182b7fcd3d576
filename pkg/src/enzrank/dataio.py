"""Corpus I/O: pair tables, FASTA, reaction tables, tensor files, split manifests.

Tensor container layout (``.rztf``)::

    b"RZTF" | uint32 LE header length | UTF-8 JSON header | f32 LE payload

The header is ``{"dims": [...], "dtype": "f32", "order": "row-major"}``.
"""

from __future__ import annotations

import csv
import datetime as _dt
import json
import logging
import os
import struct
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

MAGIC = b"RZTF"
EPOCH = _dt.date(1970, 1, 1)
AMINO_ACIDS = frozenset("ACDEFGHIKLMNPQRSTVWYX")
PAIR_COLUMNS = ("enzyme_id", "reaction_id", "label", "date")
REACTION_COLUMNS = ("reaction_id", "reaction_smiles", "date")
SPLIT_KINDS = ("time", "enzyme_sim", "reaction_sim")


class DataError(ValueError):
    """Malformed or inconsistent input data."""


def date_to_days(value: str | _dt.date | None) -> int | None:
    """ISO-8601 date (or ``date``) to days since 1970-01-01; empty -> None."""
    if value is None or value == "":
        return None
    if isinstance(value, str):
        value = _dt.date.fromisoformat(value.strip())
    return (value - EPOCH).days


def days_to_date(days: int | None) -> str:
    if days is None:
        return ""
    return (EPOCH + _dt.timedelta(days=int(days))).isoformat()


@dataclass
class EnzymeRecord:
    id: str
    sequence: str
    coords: np.ndarray | None = None
    embedding: np.ndarray | None = None

    def __post_init__(self) -> None:
        if len(self.sequence) < 1:
            raise DataError(f"enzyme {self.id!r}: empty sequence")
        n = len(self.sequence)
        if self.coords is not None:
            self.coords = np.asarray(self.coords, dtype=np.float64)
            if self.coords.shape != (n, 3):
                raise DataError(
                    f"enzyme {self.id!r}: coords shape {self.coords.shape}, expected ({n}, 3)"
                )
        if self.embedding is not None:
            self.embedding = np.asarray(self.embedding)
            if self.embedding.ndim != 2 or self.embedding.shape[0] != n:
                raise DataError(
                    f"enzyme {self.id!r}: embedding shape {self.embedding.shape}, "
                    f"expected ({n}, d)"
                )


@dataclass
class ReactionRecord:
    id: str
    substrates: list[str]
    products: list[str]
    date: int | None = None

    def __post_init__(self) -> None:
        if not self.substrates or not self.products:
            raise DataError(f"reaction {self.id!r}: substrates and products must be non-empty")

    @property
    def canonical_string(self) -> str:
        """Order-independent reaction string used for similarity splitting."""
        return ".".join(sorted(self.substrates)) + ">>" + ".".join(sorted(self.products))


@dataclass(frozen=True)
class Pair:
    enzyme_id: str
    reaction_id: str
    label: int
    date: int | None = None


@dataclass
class PairSet:
    pairs: list[Pair] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def __getitem__(self, i):
        return self.pairs[i]

    def positives(self) -> list[int]:
        return [i for i, p in enumerate(self.pairs) if p.label == 1]

    def enzyme_ids(self) -> list[str]:
        return sorted({p.enzyme_id for p in self.pairs})

    def reaction_ids(self) -> list[str]:
        return sorted({p.reaction_id for p in self.pairs})

    def positive_set(self) -> set[tuple[str, str]]:
        return {(p.enzyme_id, p.reaction_id) for p in self.pairs if p.label == 1}

    def resolve(self, enzymes: Iterable[str], reactions: Iterable[str]) -> None:
        """Check referential integrity and label consistency."""
        enz, rxn = set(enzymes), set(reactions)
        labels: dict[tuple[str, str], int] = {}
        for i, p in enumerate(self.pairs):
            if p.enzyme_id not in enz:
                raise DataError(f"pair {i}: unknown enzyme id {p.enzyme_id!r}")
            if p.reaction_id not in rxn:
                raise DataError(f"pair {i}: unknown reaction id {p.reaction_id!r}")
            key = (p.enzyme_id, p.reaction_id)
            if labels.setdefault(key, p.label) != p.label:
                raise DataError(f"pair {i}: conflicting labels for {key}")


# --------------------------------------------------------------------------- TSV


def _read_tsv(path: Path, allowed: Sequence[str], required: Sequence[str]):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter="\t", quoting=csv.QUOTE_NONE)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        unknown = [h for h in header if h not in allowed]
        if unknown:
            raise DataError(f"{path}: unknown column(s) {unknown}")
        missing = [c for c in required if c not in header]
        if missing:
            raise DataError(f"{path}: missing column(s) {missing}")
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            yield lineno, dict(zip(header, (c.strip() for c in row)))


def load_pairs(path: str | os.PathLike, fmt: str = "tsv") -> PairSet:
    if fmt != "tsv":
        raise DataError(f"unsupported pair format {fmt!r}")
    path = Path(path)
    pairs = []
    for lineno, row in _read_tsv(path, PAIR_COLUMNS, PAIR_COLUMNS[:3]):
        label = row["label"]
        if label not in ("0", "1"):
            raise DataError(f"{path}:{lineno}: label must be 0 or 1, got {label!r}")
        if not row["enzyme_id"] or not row["reaction_id"]:
            raise DataError(f"{path}:{lineno}: empty id")
        try:
            date = date_to_days(row.get("date", ""))
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: bad date {row.get('date')!r}") from exc
        pairs.append(
            Pair(sys.intern(row["enzyme_id"]), sys.intern(row["reaction_id"]), int(label), date)
        )
    return PairSet(pairs)


def write_pairs(pairs: PairSet | Iterable[Pair], path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\t".join(PAIR_COLUMNS) + "\n")
        for p in pairs:
            fh.write(f"{p.enzyme_id}\t{p.reaction_id}\t{p.label}\t{days_to_date(p.date)}\n")


def load_reactions(path: str | os.PathLike) -> list[ReactionRecord]:
    """Reaction table: ``reaction_id``, ``reaction_smiles`` (``A.B>>C.D``), optional ``date``."""
    path = Path(path)
    out = []
    for lineno, row in _read_tsv(path, REACTION_COLUMNS, REACTION_COLUMNS[:2]):
        smiles = row["reaction_smiles"]
        parts = smiles.split(">")
        if len(parts) != 3:
            raise DataError(f"{path}:{lineno}: reaction SMILES needs 'reactants>>products'")
        subs = [s for s in parts[0].split(".") if s]
        prods = [s for s in parts[2].split(".") if s]
        try:
            rec = ReactionRecord(
                sys.intern(row["reaction_id"]), subs, prods, date_to_days(row.get("date", ""))
            )
        except (DataError, ValueError) as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from exc
        out.append(rec)
    return out


def write_reactions(reactions: Iterable[ReactionRecord], path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\t".join(REACTION_COLUMNS) + "\n")
        for r in reactions:
            smi = ".".join(r.substrates) + ">>" + ".".join(r.products)
            fh.write(f"{r.id}\t{smi}\t{days_to_date(r.date)}\n")


# ------------------------------------------------------------------------- FASTA


def load_fasta(path: str | os.PathLike) -> list[EnzymeRecord]:
    records: list[EnzymeRecord] = []
    header: str | None = None
    chunks: list[str] = []

    def flush():
        if header is None:
            return
        seq = "".join(chunks).upper()
        if not seq:
            raise DataError(f"{path}: empty sequence for {header!r}")
        records.append(EnzymeRecord(sys.intern(header), seq))

    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith(">"):
                flush()
                header = line[1:].split()[0] if line[1:].strip() else ""
                if not header:
                    raise DataError(f"{path}:{lineno}: empty FASTA header")
                chunks = []
                continue
            if header is None:
                raise DataError(f"{path}:{lineno}: sequence before first header")
            seq = "".join(line.split()).upper()
            for ch in seq:
                if ch not in AMINO_ACIDS:
                    raise DataError(f"{path}:{lineno}: illegal residue {ch!r}")
            chunks.append(seq)
    flush()
    return records


def write_fasta(records: Iterable[EnzymeRecord], path: str | os.PathLike, width: int = 60) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(f">{r.id}\n")
            for i in range(0, len(r.sequence), width):
                fh.write(r.sequence[i : i + width] + "\n")


# ------------------------------------------------------------------- tensor files


@dataclass
class TensorFile:
    dims: tuple[int, ...]
    data: np.ndarray
    dtype: str = "f32"
    order: str = "row-major"

    @classmethod
    def from_array(cls, arr) -> "TensorFile":
        arr = np.ascontiguousarray(arr, dtype="<f4")
        return cls(tuple(int(d) for d in arr.shape), arr)


def _header_bytes(dims: Sequence[int]) -> bytes:
    return json.dumps(
        {"dims": [int(d) for d in dims], "dtype": "f32", "order": "row-major"},
        separators=(",", ":"),
    ).encode("utf-8")


def write_tensor(t: TensorFile | np.ndarray, path: str | os.PathLike) -> None:
    if not isinstance(t, TensorFile):
        t = TensorFile.from_array(t)
    data = np.ascontiguousarray(t.data, dtype="<f4")
    if data.size != int(np.prod(t.dims, dtype=np.int64)):
        raise DataError(f"tensor dims {list(t.dims)} disagree with {data.size} values")
    header = _header_bytes(t.dims)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(data.tobytes(order="C"))


def read_tensor_header(path: str | os.PathLike) -> tuple[dict, int]:
    """Parse the header only. Returns (header dict, payload byte offset)."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise DataError(f"{path}: bad magic {magic!r}")
        raw = fh.read(4)
        if len(raw) != 4:
            raise DataError(f"{path}: truncated header")
        (hlen,) = struct.unpack("<I", raw)
        blob = fh.read(hlen)
    if len(blob) != hlen:
        raise DataError(f"{path}: truncated header")
    try:
        header = json.loads(blob.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: unreadable header") from exc
    if header.get("dtype") != "f32" or header.get("order") != "row-major":
        raise DataError(f"{path}: unsupported dtype/order {header}")
    dims = header.get("dims")
    if not isinstance(dims, list) or not all(isinstance(d, int) and d >= 0 for d in dims):
        raise DataError(f"{path}: bad dims {dims!r}")
    return header, 8 + hlen


def read_tensor(path: str | os.PathLike, mmap: bool = False) -> TensorFile:
    header, offset = read_tensor_header(path)
    dims = tuple(header["dims"])
    expected = 4 * int(np.prod(dims, dtype=np.int64))
    payload = os.path.getsize(path) - offset
    if payload != expected:
        raise DataError(
            f"{path}: payload is {payload} bytes, dims {list(dims)} need {expected}"
        )
    if mmap:
        data = np.memmap(path, dtype="<f4", mode="r", offset=offset, shape=dims)
    else:
        with open(path, "rb") as fh:
            fh.seek(offset)
            data = np.frombuffer(fh.read(), dtype="<f4").reshape(dims)
    return TensorFile(dims, data)


def load_tensor_dir(directory: str | os.PathLike) -> dict[str, np.ndarray]:
    """Per-enzyme tensors stored as ``<id>.rztf`` in one directory."""
    out = {}
    for p in sorted(Path(directory).glob("*.rztf")):
        out[sys.intern(p.stem)] = np.asarray(read_tensor(p).data)
    return out


def attach_tensors(
    enzymes: Sequence[EnzymeRecord],
    embeddings: dict[str, np.ndarray] | None = None,
    coords: dict[str, np.ndarray] | None = None,
) -> None:
    for e in enzymes:
        if embeddings is not None and e.id in embeddings:
            e.embedding = embeddings[e.id]
        if coords is not None and e.id in coords:
            e.coords = coords[e.id]
        e.__post_init__()


# ----------------------------------------------------------------- split manifests


@dataclass
class SplitManifest:
    split_kind: str
    params: dict
    train: list[int]
    valid: list[int]
    test: list[int]

    def validate(self, n_pairs: int | None = None) -> None:
        if self.split_kind not in SPLIT_KINDS:
            raise DataError(f"unknown split kind {self.split_kind!r}")
        seen: set[int] = set()
        for name in ("train", "valid", "test"):
            idx = getattr(self, name)
            s = set(idx)
            if len(s) != len(idx):
                raise DataError(f"manifest: duplicate indices in {name}")
            overlap = seen & s
            if overlap:
                raise DataError(
                    f"manifest: {name} overlaps earlier partitions at {sorted(overlap)[:5]}"
                )
            seen |= s
            if any(i < 0 for i in idx):
                raise DataError(f"manifest: negative index in {name}")
            if n_pairs is not None and any(i >= n_pairs for i in idx):
                raise DataError(f"manifest: index out of range in {name}")

    def to_dict(self) -> dict:
        return {
            "split_kind": self.split_kind,
            "params": self.params,
            "train": list(map(int, self.train)),
            "valid": list(map(int, self.valid)),
            "test": list(map(int, self.test)),
        }


def write_manifest(m: SplitManifest, path: str | os.PathLike) -> None:
    m.validate()
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(m.to_dict(), fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def read_manifest(path: str | os.PathLike, n_pairs: int | None = None) -> SplitManifest:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    try:
        m = SplitManifest(
            raw["split_kind"], raw.get("params", {}), raw["train"], raw["valid"], raw["test"]
        )
    except KeyError as exc:
        raise DataError(f"{path}: missing manifest field {exc}") from None
    m.validate(n_pairs)
    return m
