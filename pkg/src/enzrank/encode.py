"""Reaction and enzyme representations.

Reactions: one-hot atoms -> linear embedding -> bond-typed message passing per
molecule -> substrate/product cross-attention -> mean over all attended nodes.

Enzymes: mean of residue embeddings, optionally after frame averaging a
k-NN message-passing network over the eight PCA sign frames of the residue
coordinates (invariant to rotations, translations and reflections).

Every function takes a flat parameter mapping (``name -> Tensor | ndarray``)
and runs on the autodiff tensors, so the same code serves training and
inference.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .chemgraph import BOND_TYPES, ELEMENT_VOCAB, MolGraph, atom_feature_dim, featurize_atoms
from .model import autodiff as ad
from .model.autodiff import Tensor

Params = Mapping[str, "Tensor | np.ndarray"]


@dataclass(frozen=True)
class EncoderConfig:
    d_r: int = 256
    d_plm: int = 1280
    phi_layers: int = 2
    psi_layers: int = 1
    knn: int = 16
    ln_eps: float = 1e-5


def _p(params: Params, name: str) -> Tensor:
    try:
        return ad.as_tensor(params[name])
    except KeyError:
        raise KeyError(f"missing parameter {name!r}") from None


def kaiming_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def init_phi_params(cfg: EncoderConfig, rng: np.random.Generator, d_v: int | None = None) -> dict:
    d_v = d_v or atom_feature_dim(ELEMENT_VOCAB)
    d = cfg.d_r
    out = {"phi.embed.W": kaiming_uniform(rng, d_v, d), "phi.embed.b": np.zeros(d)}
    for layer in range(cfg.phi_layers):
        pre = f"phi.{layer}."
        out[pre + "W_self"] = kaiming_uniform(rng, d, d)
        for t in range(len(BOND_TYPES)):
            out[pre + f"W_edge{t}"] = kaiming_uniform(rng, d, d)
        out[pre + "b"] = np.zeros(d)
        out[pre + "ln.gamma"] = np.ones(d)
        out[pre + "ln.beta"] = np.zeros(d)
    return out


def init_attention_params(cfg: EncoderConfig, rng: np.random.Generator) -> dict:
    d = cfg.d_r
    return {
        f"attn.{side}.{w}": kaiming_uniform(rng, d, d) for side in ("s", "p") for w in ("WQ", "WK", "WV")
    }


def init_psi_params(cfg: EncoderConfig, rng: np.random.Generator) -> dict:
    d = cfg.d_plm
    out = {}
    for layer in range(cfg.psi_layers):
        pre = f"psi.{layer}."
        out[pre + "W_self"] = kaiming_uniform(rng, d, d)
        out[pre + "W_msg"] = kaiming_uniform(rng, d, d)
        out[pre + "W_geo"] = kaiming_uniform(rng, 3, d)
        out[pre + "b_geo"] = np.zeros(d)
        out[pre + "b"] = np.zeros(d)
        out[pre + "ln.gamma"] = np.ones(d)
        out[pre + "ln.beta"] = np.zeros(d)
    return out


# ----------------------------------------------------------------- molecule side


def message_pass(
    g: MolGraph,
    x,
    layers: int,
    params: Params,
    prefix: str = "phi",
    eps: float = 1e-5,
    adjacency: np.ndarray | None = None,
) -> Tensor:
    """``layers`` rounds of node <- LN(SiLU(node W_self + b + sum_t A_t X W_edge_t))."""
    x = ad.as_tensor(x)
    if x.ndim != 2 or x.shape[0] != g.n_atoms:
        raise ValueError(f"node states {x.shape} do not match {g.n_atoms} atoms")
    adj = g.adjacency() if adjacency is None else adjacency
    for layer in range(layers):
        pre = f"{prefix}.{layer}."
        w_self = _p(params, pre + "W_self")
        if w_self.shape[0] != x.shape[1]:
            raise ValueError(f"width mismatch: states {x.shape[1]}, W_self {w_self.shape}")
        h = x @ w_self + _p(params, pre + "b")
        for t in range(adj.shape[0]):
            if adj[t].any():
                h = h + (adj[t] @ x) @ _p(params, pre + f"W_edge{t}")
        x = ad.layer_norm(ad.silu(h), _p(params, pre + "ln.gamma"), _p(params, pre + "ln.beta"), eps)
    return x


def cross_attention(vs, vp, params: Params, return_weights: bool = False):
    """Substrate nodes attend over product nodes and vice versa (scaled dot product)."""
    vs, vp = ad.as_tensor(vs), ad.as_tensor(vp)
    if vs.shape[0] == 0 or vp.shape[0] == 0:
        raise ValueError("cross_attention needs non-empty node sets on both sides")
    if vs.shape[1] != vp.shape[1]:
        raise ValueError(f"width mismatch {vs.shape[1]} vs {vp.shape[1]}")
    d_r = _p(params, "attn.s.WQ").shape[1]
    scale = 1.0 / np.sqrt(d_r)

    def attend(q_nodes, kv_nodes, side):
        q = q_nodes @ _p(params, f"attn.{side}.WQ")
        k = kv_nodes @ _p(params, f"attn.{side}.WK")
        v = kv_nodes @ _p(params, f"attn.{side}.WV")
        a = ad.softmax((q @ k.T) * scale, axis=-1)
        return a @ v, a

    vs_bar, a_s = attend(vs, vp, "s")
    vp_bar, a_p = attend(vp, vs, "p")
    if return_weights:
        return vs_bar, vp_bar, a_s, a_p
    return vs_bar, vp_bar


def _graph_constants(g: MolGraph) -> tuple[np.ndarray, np.ndarray]:
    """Atom features and adjacency, memoized on the graph object."""
    hit = getattr(g, "_enc_constants", None)
    if hit is None:
        hit = (featurize_atoms(g), g.adjacency())
        g._enc_constants = hit  # type: ignore[attr-defined]
    return hit


def embed_side(mols: Sequence[MolGraph], params: Params, cfg: EncoderConfig) -> Tensor:
    """Node states of every molecule on one reaction side, stacked."""
    if not mols:
        raise ValueError("reaction side has no molecules")
    w, b = _p(params, "phi.embed.W"), _p(params, "phi.embed.b")
    nodes = []
    for g in mols:
        feats, adj = _graph_constants(g)
        x = feats @ w + b
        nodes.append(message_pass(g, x, cfg.phi_layers, params, "phi", cfg.ln_eps, adj))
    return nodes[0] if len(nodes) == 1 else ad.concat(nodes, axis=0)


def reaction_embed(
    substrates: Sequence[MolGraph], products: Sequence[MolGraph], params: Params, cfg: EncoderConfig
) -> Tensor:
    """Reaction vector as a (1, d_r) tensor."""
    vs = embed_side(substrates, params, cfg)
    vp = embed_side(products, params, cfg)
    vs_bar, vp_bar = cross_attention(vs, vp, params)
    return ad.mean(ad.concat([vs_bar, vp_bar], axis=0), axis=0, keepdims=True)


# ------------------------------------------------------------------- enzyme side


@dataclass(frozen=True)
class FrameSet:
    centroid: np.ndarray  # (3,)
    axes: np.ndarray  # (3, 3), columns u1, u2, u3
    eigenvalues: np.ndarray  # (3,), descending

    SIGNS = tuple(itertools.product((1.0, -1.0), repeat=3))

    def frames(self) -> list[np.ndarray]:
        return [self.axes * np.asarray(s) for s in self.SIGNS]

    def __len__(self) -> int:
        return len(self.SIGNS)


def _canonical_sign(v: np.ndarray) -> np.ndarray:
    k = int(np.argmax(np.abs(v) > np.abs(v).max() * (1 - 1e-9)))
    return v if v[k] >= 0 else -v


def pca_frames(coords) -> FrameSet:
    """Principal axes of the (unnormalized) coordinate covariance, descending.

    Repeated eigenvalues leave the eigenspace basis arbitrary; it is replaced by
    the Gram-Schmidt projection of the canonical axes e_x, e_y, e_z (in that
    order) onto the eigenspace, which makes degenerate inputs deterministic.
    """
    x = np.asarray(coords, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != 3 or x.shape[0] < 1:
        raise ValueError(f"coords must be (N >= 1, 3), got {x.shape}")
    mu = x.mean(axis=0)
    xc = x - mu
    cov = xc.T @ xc
    w, v = np.linalg.eigh(cov)
    w, v = w[::-1], v[:, ::-1]
    tol = 1e-9 * max(1.0, abs(w[0]))
    groups: list[list[int]] = [[0]]
    for i in (1, 2):
        if abs(w[i] - w[groups[-1][-1]]) <= tol:
            groups[-1].append(i)
        else:
            groups.append([i])
    axes: list[np.ndarray] = []
    eye = np.eye(3)
    for grp in groups:
        if len(grp) == 1:
            axes.append(_canonical_sign(v[:, grp[0]]))
            continue
        basis = v[:, grp]
        chosen = 0
        for k in range(3):
            u = basis @ (basis.T @ eye[k])
            for a in axes:
                u = u - (a @ u) * a
            n = np.linalg.norm(u)
            if n > 1e-6:
                axes.append(u / n)
                chosen += 1
                if chosen == len(grp):
                    break
    axes_m = np.stack(axes, axis=1)
    w = np.where(np.abs(w) <= tol, 0.0, w)
    return FrameSet(mu, axes_m, w)


def knn_indices(points: np.ndarray, k: int) -> np.ndarray:
    """(N, k') neighbor indices by Euclidean distance, ties by residue index; self excluded."""
    n = points.shape[0]
    k = min(k, n - 1)
    if k <= 0:
        return np.zeros((n, 0), dtype=np.int64)
    d2 = ((points[:, None, :] - points[None, :, :]) ** 2).sum(-1)
    np.fill_diagonal(d2, np.inf)
    idx = np.arange(n)
    out = np.empty((n, k), dtype=np.int64)
    for i in range(n):
        order = np.lexsort((idx, d2[i]))
        out[i] = order[:k]
    return out


def psi(v, projected: np.ndarray, params: Params, cfg: EncoderConfig, nbr: np.ndarray | None = None) -> Tensor:
    """k-NN message passing over residues; edge inputs are projected coordinate differences."""
    v = ad.as_tensor(v)
    n = projected.shape[0]
    if nbr is None:
        nbr = knn_indices(projected, cfg.knn)
    k = nbr.shape[1]
    h = v
    if k:
        adj = np.zeros((n, n))
        adj[np.repeat(np.arange(n), k), nbr.ravel()] = 1.0
        diffs = (projected[nbr] - projected[:, None, :]).reshape(n * k, 3)
        agg = np.kron(np.eye(n), np.ones((1, k)))
    for layer in range(cfg.psi_layers):
        pre = f"psi.{layer}."
        z = h @ _p(params, pre + "W_self") + _p(params, pre + "b")
        if k:
            z = z + (adj @ h) @ _p(params, pre + "W_msg")
            geo = ad.silu(diffs @ _p(params, pre + "W_geo") + _p(params, pre + "b_geo"))
            z = z + agg @ geo
        h = ad.layer_norm(ad.silu(z), _p(params, pre + "ln.gamma"), _p(params, pre + "ln.beta"), cfg.ln_eps)
    return h


def frame_average(v, coords, params: Params, cfg: EncoderConfig) -> Tensor:
    """Mean of ``psi`` over the eight sign frames of the PCA axes."""
    if coords is None:
        raise ValueError("frame averaging needs residue coordinates")
    coords = np.asarray(coords, dtype=np.float64)
    fs = pca_frames(coords)
    xc = coords - fs.centroid
    nbr = knn_indices(xc, cfg.knn)
    outs = [psi(v, xc @ u, params, cfg, nbr) for u in fs.frames()]
    total = outs[0]
    for o in outs[1:]:
        total = total + o
    return total * (1.0 / len(outs))


def enzyme_embed(e, mode: str = "pooled", params: Params | None = None, cfg: EncoderConfig | None = None) -> Tensor:
    """Enzyme vector as a (1, d_plm) tensor."""
    if e.embedding is None:
        raise ValueError(f"enzyme {e.id!r} has no residue embedding")
    if mode == "pooled":
        return Tensor(np.asarray(e.embedding, dtype=np.float64).mean(axis=0, keepdims=True))
    if mode == "frame_averaged":
        if e.coords is None:
            raise ValueError(f"enzyme {e.id!r} has no coordinates (frame_averaged mode)")
        if params is None or cfg is None:
            raise ValueError("frame_averaged mode needs psi parameters and config")
        return ad.mean(frame_average(e.embedding, e.coords, params, cfg), axis=0, keepdims=True)
    raise ValueError(f"unknown enzyme mode {mode!r}")
