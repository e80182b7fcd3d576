"""Mini-batch training with Adam over positive/negative pairs."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Mapping, Sequence

import numpy as np

from ..dataio import Pair
from . import autodiff as ad
from .autodiff import Tape, Tensor
from .losses import bce_loss, contrastive_loss
from .scorer import FeatureStore, ModelConfig, PairScorer, init_params

logger = logging.getLogger(__name__)


class NumericalError(RuntimeError):
    """Non-finite loss or parameters during training."""


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    epochs: int = 20
    batch: int = 256
    neg_ratio: int = 4
    seed: int = 0
    loss: str = "bce"  # bce | bce+contrastive
    contrastive_weight: float = 1.0
    temperature: float = 0.1

    def __post_init__(self) -> None:
        if self.loss not in ("bce", "bce+contrastive"):
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.batch < 1 or self.epochs < 0 or self.neg_ratio < 0:
            raise ValueError("batch >= 1, epochs >= 0, neg_ratio >= 0 required")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


@dataclass
class TrainResult:
    params: dict[str, np.ndarray]
    log: list[dict] = field(default_factory=list)
    best_epoch: int = 0


class Adam:
    def __init__(self, params: Mapping[str, np.ndarray], cfg: TrainConfig):
        self.cfg = cfg
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: Mapping[str, np.ndarray]) -> None:
        c = self.cfg
        self.t += 1
        b1t = 1.0 - c.beta1**self.t
        b2t = 1.0 - c.beta2**self.t
        for k, g in grads.items():
            m, v = self.m[k], self.v[k]
            m *= c.beta1
            m += (1.0 - c.beta1) * g
            v *= c.beta2
            v += (1.0 - c.beta2) * g * g
            params[k] = params[k] - c.lr * (m / b1t) / (np.sqrt(v / b2t) + c.adam_eps)


def batch_loss(
    scorer: PairScorer,
    batch: Sequence[Pair],
    params: Mapping,
    cfg: TrainConfig,
    positives: set[tuple[str, str]] | None = None,
) -> Tensor:
    """BCE over the batch, plus in-batch contrastive terms when enabled."""
    keys = [(p.enzyme_id, p.reaction_id) for p in batch]
    labels = np.array([p.label for p in batch], dtype=np.float64)
    logits, z_r, z_e, ri, ei = scorer.pair_logits(keys, params)
    loss = bce_loss(logits, labels)
    if cfg.loss == "bce+contrastive":
        known = positives if positives is not None else {k for k, p in zip(keys, batch) if p.label == 1}
        e_ids = sorted({e for e, _ in keys})
        terms = []
        for (e, r), lab, r_i, e_i in zip(keys, labels, ri, ei):
            if lab != 1:
                continue
            negs = [j for j, eid in enumerate(e_ids) if (eid, r) not in known and eid != e]
            if not negs:
                continue
            terms.append(
                contrastive_loss(
                    ad.take_rows(z_r, [r_i]), ad.take_rows(z_e, [e_i]), ad.take_rows(z_e, negs), cfg.temperature
                )
            )
        if terms:
            c = terms[0]
            for t in terms[1:]:
                c = c + t
            loss = loss + c * (cfg.contrastive_weight / len(terms))
    return ad.reshape(loss, ())


def compute_gradients(
    scorer: PairScorer,
    batch: Sequence[Pair],
    params: Mapping[str, np.ndarray],
    cfg: TrainConfig,
    positives: set[tuple[str, str]] | None = None,
) -> tuple[float, dict[str, np.ndarray]]:
    """One recorded forward + backward; unused parameters get zero gradients."""
    leaves = {k: Tensor(v, requires_grad=True, name=k) for k, v in params.items()}
    with Tape() as tape:
        loss = batch_loss(scorer, batch, leaves, cfg, positives)
    ad.backward(tape, loss)
    grads = {k: (t.grad if t.grad is not None else np.zeros_like(t.value)) for k, t in leaves.items()}
    return float(loss.value), grads


def evaluate_loss(scorer: PairScorer, pairs: Sequence[Pair], params: Mapping[str, np.ndarray]) -> tuple[float, float]:
    """(mean BCE, accuracy at logit 0) without recording."""
    if not pairs:
        return float("nan"), float("nan")
    logits = scorer.score([(p.enzyme_id, p.reaction_id) for p in pairs], params)
    labels = np.array([p.label for p in pairs], dtype=np.float64)
    loss = float(bce_loss(logits, labels).value)
    acc = float(np.mean((logits > 0).astype(float) == labels))
    return loss, acc


def _diagnostics(params: Mapping[str, np.ndarray]) -> str:
    bad = [k for k, v in params.items() if not np.all(np.isfinite(v))]
    norms = {k: float(np.linalg.norm(v)) for k, v in params.items()}
    largest = sorted(norms.items(), key=lambda kv: -kv[1] if math.isfinite(kv[1]) else -math.inf)[:3]
    return f"non-finite params: {bad[:5]}; largest norms: {largest}"


def train(
    pairs: Sequence[Pair],
    negatives: Sequence[Pair],
    store: FeatureStore,
    config: TrainConfig = TrainConfig(),
    model_cfg: ModelConfig = ModelConfig(),
    valid: Sequence[Pair] = (),
    init: Mapping[str, np.ndarray] | None = None,
    log_path=None,
) -> TrainResult:
    """Train on positives in ``pairs`` (plus any label-0 rows) and ``negatives``.

    Each batch holds ``batch // (1 + neg_ratio)`` positives and ``neg_ratio`` times
    as many negatives drawn from a seeded, cycling shuffle of the negative pool.
    The parameters with the lowest validation loss (training loss when no
    validation set is given) are returned.
    """
    pos = [p for p in pairs if p.label == 1]
    neg = [p for p in pairs if p.label == 0] + [p for p in negatives if p.label == 0]
    if not pos:
        raise ValueError("training set has no positive pairs")
    rng = np.random.default_rng(config.seed)
    params = {k: np.array(v, dtype=np.float64) for k, v in (init or init_params(model_cfg, rng)).items()}
    scorer = PairScorer(model_cfg, store)
    opt = Adam(params, config)
    known = {(p.enzyme_id, p.reaction_id) for p in pos}
    n_pos = max(1, config.batch // (1 + config.neg_ratio))
    n_neg = n_pos * config.neg_ratio
    neg_order: list[int] = []
    neg_cursor = 0

    def draw_negatives(count: int) -> list[Pair]:
        nonlocal neg_order, neg_cursor
        out: list[Pair] = []
        if not neg:
            return out
        count = min(count, len(neg))
        while len(out) < count:
            if neg_cursor >= len(neg_order):
                neg_order = list(rng.permutation(len(neg)))
                neg_cursor = 0
            out.append(neg[neg_order[neg_cursor]])
            neg_cursor += 1
        return out

    log: list[dict] = []
    best = (math.inf, 0, {k: v.copy() for k, v in params.items()})
    sink = open(log_path, "w", encoding="utf-8") if log_path else None
    try:
        for epoch in range(1, config.epochs + 1):
            order = rng.permutation(len(pos))
            losses = []
            for lo in range(0, len(pos), n_pos):
                batch = [pos[i] for i in order[lo : lo + n_pos]]
                batch += draw_negatives(len(batch) * config.neg_ratio if len(batch) < n_pos else n_neg)
                loss, grads = compute_gradients(scorer, batch, params, config, known)
                if not math.isfinite(loss):
                    raise NumericalError(f"non-finite loss at epoch {epoch}: {loss}; {_diagnostics(params)}")
                opt.step(params, grads)
                losses.append(loss)
            train_loss, train_acc = evaluate_loss(scorer, pos + neg, params)
            valid_loss, valid_acc = evaluate_loss(scorer, list(valid), params)
            if not math.isfinite(train_loss):
                raise NumericalError(f"non-finite training loss after epoch {epoch}; {_diagnostics(params)}")
            entry = {
                "epoch": epoch,
                "batch_loss": float(np.mean(losses)),
                "train_loss": train_loss,
                "train_accuracy": train_acc,
                "valid_loss": valid_loss if valid else None,
                "valid_accuracy": valid_acc if valid else None,
            }
            log.append(entry)
            if sink:
                sink.write(json.dumps(entry, sort_keys=True) + "\n")
            monitor = valid_loss if valid else train_loss
            if monitor < best[0]:
                best = (monitor, epoch, {k: v.copy() for k, v in params.items()})
            logger.info("epoch %d train_loss %.5f valid_loss %s", epoch, train_loss, entry["valid_loss"])
    finally:
        if sink:
            sink.close()
    if config.epochs == 0:
        return TrainResult(params, log, 0)
    return TrainResult(best[2], log, best[1])
