"""Reaction/enzyme encoders and the pair decoder.

Encoders (row-vector convention, ``x @ W + B``)::

    h1 = SiLU(LN1(x W1 + B1)); h2 = SiLU(LN2(h1 W2 + B2))
    h3 = SiLU(LN3(h2 W3 + B3)); z = h3 W4 + B4

Decoder::

    y = (SiLU(SiLU([z_r, z_e] W1 + B1) W2 + B2) W3 + B3) W4   (+ B4 if enabled)
"""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

ENCODER_WIDTHS = (512, 256, 256, 256)
DECODER_WIDTHS = (256, 128, 64)


def _kaiming(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def init_encoder(prefix: str, d_in: int, rng: np.random.Generator, widths: Sequence[int] = ENCODER_WIDTHS) -> dict:
    out = {}
    dims = (d_in, *widths)
    for i in range(len(widths)):
        n = i + 1
        out[f"{prefix}.W{n}"] = _kaiming(rng, dims[i], dims[i + 1])
        out[f"{prefix}.B{n}"] = np.zeros(dims[i + 1])
        if n < len(widths):
            out[f"{prefix}.ln{n}.gamma"] = np.ones(dims[i + 1])
            out[f"{prefix}.ln{n}.beta"] = np.zeros(dims[i + 1])
    return out


def init_decoder(d_in: int, rng: np.random.Generator, widths: Sequence[int] = DECODER_WIDTHS, final_bias: bool = False) -> dict:
    out = {}
    dims = (d_in, *widths, 1)
    for i in range(len(dims) - 1):
        n = i + 1
        out[f"dec.W{n}"] = _kaiming(rng, dims[i], dims[i + 1])
        if n < len(dims) - 1 or final_bias:
            out[f"dec.B{n}"] = np.zeros(dims[i + 1])
    return out


def encoder(x, params: Mapping, prefix: str, layer_norm: bool = True, eps: float = 1e-5) -> Tensor:
    """Four-layer encoder MLP; ``layer_norm=False`` drops the LN stages (test mode)."""
    h = ad.as_tensor(x)
    n_layers = sum(1 for k in params if k.startswith(prefix + ".W"))
    w1 = params[f"{prefix}.W1"]
    if h.shape[-1] != np.shape(w1.value if isinstance(w1, Tensor) else w1)[0]:
        raise ValueError(f"{prefix}: input width {h.shape[-1]} does not match W1")
    for n in range(1, n_layers + 1):
        h = h @ params[f"{prefix}.W{n}"] + params[f"{prefix}.B{n}"]
        if n < n_layers:
            if layer_norm:
                h = ad.layer_norm(h, params[f"{prefix}.ln{n}.gamma"], params[f"{prefix}.ln{n}.beta"], eps)
            h = ad.silu(h)
    return h


def reaction_enc(r, params: Mapping, **kw) -> Tensor:
    return encoder(r, params, "rxn_enc", **kw)


def enzyme_enc(e, params: Mapping, **kw) -> Tensor:
    return encoder(e, params, "enz_enc", **kw)


def decode(z_r, z_e, params: Mapping) -> Tensor:
    """Logits, shape (B, 1), for row-aligned batches of encoded reactions and enzymes."""
    z_r, z_e = ad.as_tensor(z_r), ad.as_tensor(z_e)
    w1 = params["dec.W1"]
    d_in = np.shape(w1.value if isinstance(w1, Tensor) else w1)[0]
    if z_r.shape[-1] + z_e.shape[-1] != d_in:
        raise ValueError(f"decoder expects total width {d_in}, got {z_r.shape[-1]} + {z_e.shape[-1]}")
    h = ad.concat([z_r, z_e], axis=1)
    h = ad.silu(h @ params["dec.W1"] + params["dec.B1"])
    h = ad.silu(h @ params["dec.W2"] + params["dec.B2"])
    h = h @ params["dec.W3"] + params["dec.B3"]
    y = h @ params["dec.W4"]
    if "dec.B4" in params:
        y = y + params["dec.B4"]
    return y
