"""Training objectives."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


def bce_loss(logits, labels) -> Tensor:
    logits = ad.as_tensor(logits)
    labels = np.asarray(labels)
    if logits.value.size == 0:
        raise ValueError("empty batch")
    if logits.value.size != labels.size:
        raise ValueError(f"length mismatch: {logits.value.size} logits, {labels.size} labels")
    return ad.bce_with_logits(logits, labels)


def _cosines(anchor: Tensor, others: Tensor) -> Tensor:
    """Cosine similarity of a (1, d) anchor with each row of (m, d) ``others`` -> (m, 1)."""
    if not np.all(np.linalg.norm(others.value, axis=1) > 0) or not np.linalg.norm(anchor.value) > 0:
        raise ValueError("cosine similarity undefined for zero vectors")
    dots = others @ anchor.T
    n_o = ad.sqrt(ad.sum(others * others, axis=1, keepdims=True))
    n_a = ad.sqrt(ad.sum(anchor * anchor, axis=1, keepdims=True))
    return dots / (n_o * n_a)


def contrastive_loss(z_r, z_e_pos, z_e_negs, temperature: float = 0.1) -> Tensor:
    """InfoNCE over cosine similarities: positive enzyme against ``z_e_negs`` rows."""
    z_r = ad.reshape(ad.as_tensor(z_r), (1, -1))
    pos = ad.reshape(ad.as_tensor(z_e_pos), (1, -1))
    negs = ad.as_tensor(z_e_negs)
    if negs.ndim == 1:
        negs = ad.reshape(negs, (1, -1))
    if negs.shape[0] < 1:
        raise ValueError("contrastive loss needs at least one negative")
    cands = ad.concat([pos, negs], axis=0)
    logits = ad.reshape(_cosines(z_r, cands), (-1,)) * (1.0 / temperature)
    return ad.reshape(ad.logsumexp(logits, axis=0) - ad.take_rows(logits, [0]), ())
