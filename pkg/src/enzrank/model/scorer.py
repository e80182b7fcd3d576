"""The end-to-end pair scorer (encoders + MLPs) and its feature store."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .. import dataio
from ..chemgraph import MolGraph, parse_components, reaction_fingerprint
from ..encode import (
    EncoderConfig,
    enzyme_embed,
    init_attention_params,
    init_phi_params,
    init_psi_params,
    reaction_embed,
)
from . import autodiff as ad
from .autodiff import Tensor
from .mlp import DECODER_WIDTHS, ENCODER_WIDTHS, decode, encoder, init_decoder, init_encoder


@dataclass(frozen=True)
class ModelConfig:
    d_r: int = 256
    d_plm: int = 1280
    enc_widths: tuple[int, ...] = ENCODER_WIDTHS
    dec_widths: tuple[int, ...] = DECODER_WIDTHS
    reaction_features: str = "graph"  # graph | fingerprint
    enzyme_mode: str = "pooled"  # pooled | frame_averaged
    phi_layers: int = 2
    psi_layers: int = 1
    knn: int = 16
    fp_radius: int = 2
    fp_bits: int = 2048
    ln_eps: float = 1e-5
    decoder_final_bias: bool = False

    def __post_init__(self) -> None:
        if self.reaction_features not in ("graph", "fingerprint"):
            raise ValueError(f"unknown reaction_features {self.reaction_features!r}")
        if self.enzyme_mode not in ("pooled", "frame_averaged"):
            raise ValueError(f"unknown enzyme_mode {self.enzyme_mode!r}")
        object.__setattr__(self, "enc_widths", tuple(self.enc_widths))
        object.__setattr__(self, "dec_widths", tuple(self.dec_widths))

    @property
    def encoder(self) -> EncoderConfig:
        return EncoderConfig(self.d_r, self.d_plm, self.phi_layers, self.psi_layers, self.knn, self.ln_eps)

    @property
    def reaction_input_width(self) -> int:
        return self.d_r if self.reaction_features == "graph" else 2 * self.fp_bits

    def to_dict(self) -> dict:
        d = asdict(self)
        d["enc_widths"] = list(self.enc_widths)
        d["dec_widths"] = list(self.dec_widths)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "ModelConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


def init_params(cfg: ModelConfig, seed: int | np.random.Generator = 0) -> dict[str, np.ndarray]:
    """All trainable arrays, initialized Kaiming-uniform / zeros / ones (LN scale)."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    p: dict[str, np.ndarray] = {}
    if cfg.reaction_features == "graph":
        p.update(init_phi_params(cfg.encoder, rng))
        p.update(init_attention_params(cfg.encoder, rng))
    if cfg.enzyme_mode == "frame_averaged":
        p.update(init_psi_params(cfg.encoder, rng))
    p.update(init_encoder("rxn_enc", cfg.reaction_input_width, rng, cfg.enc_widths))
    p.update(init_encoder("enz_enc", cfg.d_plm, rng, cfg.enc_widths))
    p.update(init_decoder(2 * cfg.enc_widths[-1], rng, cfg.dec_widths, cfg.decoder_final_bias))
    return p


@dataclass
class FeatureStore:
    """Parsed reactions and loaded enzymes, keyed by id."""

    reactions: dict[str, dataio.ReactionRecord]
    enzymes: dict[str, dataio.EnzymeRecord]
    graphs: dict[str, tuple[list[MolGraph], list[MolGraph]]] = field(default_factory=dict)
    fingerprints: dict[str, np.ndarray] = field(default_factory=dict)
    pooled: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def build(cls, reactions: Iterable[dataio.ReactionRecord], enzymes: Iterable[dataio.EnzymeRecord]) -> "FeatureStore":
        return cls({r.id: r for r in reactions}, {e.id: e for e in enzymes})

    def reaction_graphs(self, rid: str) -> tuple[list[MolGraph], list[MolGraph]]:
        hit = self.graphs.get(rid)
        if hit is None:
            r = self.reactions[rid]
            hit = (
                [g for s in r.substrates for g in parse_components(s)],
                [g for s in r.products for g in parse_components(s)],
            )
            self.graphs[rid] = hit
        return hit

    def reaction_fp(self, rid: str, radius: int, nbits: int) -> np.ndarray:
        key = f"{rid}\x00{radius}\x00{nbits}"
        hit = self.fingerprints.get(key)
        if hit is None:
            subs, prods = self.reaction_graphs(rid)
            hit = reaction_fingerprint(subs, prods, radius, nbits).astype(np.float64)
            self.fingerprints[key] = hit
        return hit

    def enzyme_pooled(self, eid: str) -> np.ndarray:
        hit = self.pooled.get(eid)
        if hit is None:
            hit = enzyme_embed(self.enzymes[eid], "pooled").value[0]
            self.pooled[eid] = hit
        return hit


class PairScorer:
    """Forward passes of the full model over ``Tensor`` parameters."""

    def __init__(self, cfg: ModelConfig, store: FeatureStore):
        self.cfg = cfg
        self.store = store

    def reaction_inputs(self, rids: Sequence[str], params: Mapping) -> Tensor:
        if self.cfg.reaction_features == "fingerprint":
            return Tensor(np.stack([self.store.reaction_fp(r, self.cfg.fp_radius, self.cfg.fp_bits) for r in rids]))
        enc = self.cfg.encoder
        rows = []
        for r in rids:
            subs, prods = self.store.reaction_graphs(r)
            rows.append(reaction_embed(subs, prods, params, enc))
        return rows[0] if len(rows) == 1 else ad.concat(rows, axis=0)

    def enzyme_inputs(self, eids: Sequence[str], params: Mapping) -> Tensor:
        if self.cfg.enzyme_mode == "pooled":
            return Tensor(np.stack([self.store.enzyme_pooled(e) for e in eids]))
        enc = self.cfg.encoder
        rows = [enzyme_embed(self.store.enzymes[e], "frame_averaged", params, enc) for e in eids]
        return rows[0] if len(rows) == 1 else ad.concat(rows, axis=0)

    def encode(self, rids: Sequence[str], eids: Sequence[str], params: Mapping) -> tuple[Tensor, Tensor]:
        eps = self.cfg.ln_eps
        z_r = encoder(self.reaction_inputs(rids, params), params, "rxn_enc", eps=eps)
        z_e = encoder(self.enzyme_inputs(eids, params), params, "enz_enc", eps=eps)
        return z_r, z_e

    def pair_logits(self, pairs: Sequence[tuple[str, str]], params: Mapping) -> tuple[Tensor, Tensor, Tensor, np.ndarray, np.ndarray]:
        """Logits (B,) for ``(enzyme_id, reaction_id)`` pairs plus the unique encodings."""
        rids = sorted({r for _, r in pairs})
        eids = sorted({e for e, _ in pairs})
        r_idx = {r: i for i, r in enumerate(rids)}
        e_idx = {e: i for i, e in enumerate(eids)}
        z_r, z_e = self.encode(rids, eids, params)
        ri = np.array([r_idx[r] for _, r in pairs])
        ei = np.array([e_idx[e] for e, _ in pairs])
        y = decode(ad.take_rows(z_r, ri), ad.take_rows(z_e, ei), params)
        return ad.reshape(y, (-1,)), z_r, z_e, ri, ei

    def score(self, pairs: Sequence[tuple[str, str]], params: Mapping[str, np.ndarray], chunk: int = 4096) -> np.ndarray:
        """Inference-mode logits for many pairs."""
        out = np.empty(len(pairs))
        for lo in range(0, len(pairs), chunk):
            part = pairs[lo : lo + chunk]
            out[lo : lo + len(part)] = self.pair_logits(part, params)[0].value
        return out

    def score_grid(self, enzyme_ids: Sequence[str], reaction_ids: Sequence[str], params: Mapping[str, np.ndarray], chunk: int = 65536) -> np.ndarray:
        """(n_enzymes, n_reactions) logits for every combination."""
        z_r, z_e = self.encode(list(reaction_ids), list(enzyme_ids), params)
        ne, nr = len(enzyme_ids), len(reaction_ids)
        flat_e = np.repeat(np.arange(ne), nr)
        flat_r = np.tile(np.arange(nr), ne)
        out = np.empty(ne * nr)
        for lo in range(0, ne * nr, chunk):
            hi = min(lo + chunk, ne * nr)
            y = decode(z_r.value[flat_r[lo:hi]], z_e.value[flat_e[lo:hi]], params)
            out[lo:hi] = y.value[:, 0]
        return out.reshape(ne, nr)


# ------------------------------------------------------------------ checkpoints


def save_checkpoint(params: Mapping[str, np.ndarray], cfg: ModelConfig, directory, extra: dict | None = None) -> None:
    """One tensor file per parameter plus ``params.json`` (names, shapes, config).

    Tensors are stored as f32; f64 training state is not preserved bit-exactly.
    """
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, name in enumerate(sorted(params)):
        arr = np.asarray(params[name])
        fname = f"p{i:04d}.rztf"
        dataio.write_tensor(arr.reshape(arr.shape or (1,)), d / fname)
        entries.append({"name": name, "file": fname, "shape": list(arr.shape)})
    manifest = {"format": "enzrank-checkpoint/1", "config": cfg.to_dict(), "params": entries}
    if extra:
        manifest["extra"] = extra
    with open(d / "params.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_checkpoint(directory) -> tuple[dict[str, np.ndarray], ModelConfig]:
    d = Path(directory)
    with open(d / "params.json", encoding="utf-8") as fh:
        manifest = json.load(fh)
    params = {}
    for e in manifest["params"]:
        arr = np.asarray(dataio.read_tensor(d / e["file"]).data, dtype=np.float64)
        params[e["name"]] = arr.reshape(e["shape"])
    return params, ModelConfig.from_dict(manifest["config"])
