"""A small tape-based reverse-mode differentiation engine over NumPy arrays.

Values are computed eagerly. While a :class:`Tape` is active, every primitive
whose inputs require gradients appends ``(output, parents, vjp)`` to it;
:func:`backward` replays the tape once in reverse and deposits adjoints in
``leaf.grad``. Outside a tape nothing is recorded (inference mode).
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


class TapeError(RuntimeError):
    pass


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "name")
    __array_ufunc__ = None  # make ndarray (op) Tensor dispatch to the reflected Tensor method

    def __init__(self, value, requires_grad: bool = False, name: str | None = None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def __repr__(self) -> str:
        tag = f" {self.name}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, o):
        return add(self, o)

    __radd__ = __add__

    def __sub__(self, o):
        return sub(self, o)

    def __rsub__(self, o):
        return sub(o, self)

    def __mul__(self, o):
        return mul(self, o)

    __rmul__ = __mul__

    def __truediv__(self, o):
        return div(self, o)

    def __rtruediv__(self, o):
        return div(o, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, o):
        return matmul(self, o)

    def __rmatmul__(self, o):
        return matmul(o, self)


Vjp = Callable[[np.ndarray], Sequence[np.ndarray | None]]


class Tape:
    """Records primitive applications; usable as a context manager."""

    _stack: list["Tape"] = []

    def __init__(self) -> None:
        self.records: list[tuple[Tensor, tuple[Tensor, ...], Vjp]] = []
        self.consumed = False

    def __enter__(self) -> "Tape":
        Tape._stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        Tape._stack.remove(self)

    def __len__(self) -> int:
        return len(self.records)

    @classmethod
    def current(cls) -> "Tape | None":
        return cls._stack[-1] if cls._stack else None


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _emit(value: np.ndarray, parents: tuple[Tensor, ...], vjp: Vjp) -> Tensor:
    out = Tensor(value)
    tape = Tape.current()
    if tape is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        tape.records.append((out, parents, vjp))
    return out


def backward(tape: Tape, loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``leaf.grad`` for every gradient-requiring leaf."""
    if tape.consumed:
        raise TapeError("tape already consumed by a backward pass; re-run the forward pass")
    if loss.value.size != 1:
        raise TapeError("backward needs a scalar loss")
    produced = {id(rec[0]) for rec in tape.records}
    if id(loss) not in produced:
        raise TapeError("loss was not recorded on this tape")
    adj: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.value)}
    for out, parents, vjp in reversed(tape.records):
        g = adj.pop(id(out), None)
        if g is None:
            continue
        for p, gp in zip(parents, vjp(g)):
            if gp is None or not p.requires_grad:
                continue
            if id(p) in produced:
                prev = adj.get(id(p))
                adj[id(p)] = gp if prev is None else prev + gp
            elif p.grad is None:
                p.grad = np.array(gp, dtype=np.float64)
            else:
                p.grad = p.grad + gp
    tape.consumed = True


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# -------------------------------------------------------------------- primitives


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _emit(
        a.value + b.value,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _emit(
        a.value - b.value,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _emit(
        a.value * b.value,
        (a, b),
        lambda g: (_unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)),
    )


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.value / b.value
    return _emit(
        out,
        (a, b),
        lambda g: (_unbroadcast(g / b.value, a.shape), _unbroadcast(-g * out / b.value, b.shape)),
    )


def matmul(a, b) -> Tensor:
    """2-D matrix product."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError(f"matmul expects 2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch {a.shape} @ {b.shape}")
    return _emit(a.value @ b.value, (a, b), lambda g: (g @ b.value.T, a.value.T @ g))


def transpose(a) -> Tensor:
    a = as_tensor(a)
    return _emit(a.value.T, (a,), lambda g: (g.T,))


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return _emit(a.value.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.value)
    return _emit(out, (a,), lambda g: (g * out,))


def log(a) -> Tensor:
    a = as_tensor(a)
    return _emit(np.log(a.value), (a,), lambda g: (g / a.value,))


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.value)
    return _emit(out, (a,), lambda g: (g / (2.0 * out),))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def silu(a) -> Tensor:
    a = as_tensor(a)
    s = _sigmoid(a.value)
    return _emit(a.value * s, (a,), lambda g: (g * s * (1.0 + a.value * (1.0 - s)),))


def sum(a, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    out = a.value.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _emit(out, (a,), vjp)


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    n = a.value.size if axis is None else a.shape[axis]
    return mul(sum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def concat(parts: Sequence, axis: int = 0) -> Tensor:
    ts = tuple(as_tensor(p) for p in parts)
    sizes = [t.shape[axis] for t in ts]
    bounds = np.cumsum([0] + sizes)

    def vjp(g):
        idx = [slice(None)] * g.ndim
        out = []
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            idx[axis] = slice(lo, hi)
            out.append(g[tuple(idx)])
        return out

    return _emit(np.concatenate([t.value for t in ts], axis=axis), ts, vjp)


def take_rows(a, index) -> Tensor:
    """``a[index]`` along axis 0 with scatter-add adjoint."""
    a = as_tensor(a)
    index = np.asarray(index, dtype=np.int64)

    def vjp(g):
        out = np.zeros_like(a.value)
        np.add.at(out, index, g)
        return (out,)

    return _emit(a.value[index], (a,), vjp)


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    z = a.value - a.value.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)
    return _emit(y, (a,), lambda g: (y * (g - (g * y).sum(axis=axis, keepdims=True)),))


def logsumexp(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    m = a.value.max(axis=axis, keepdims=True)
    s = np.exp(a.value - m).sum(axis=axis, keepdims=True)
    out = (m + np.log(s)).squeeze(axis)
    w = np.exp(a.value - m) / s
    return _emit(out, (a,), lambda g: (np.expand_dims(g, axis) * w,))


def layer_norm(x, gamma=None, beta=None, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then apply optional elementwise scale/offset."""
    x = as_tensor(x)
    mu = x.value.mean(axis=-1, keepdims=True)
    xc = x.value - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv

    def vjp(g):
        m1 = g.mean(axis=-1, keepdims=True)
        m2 = (g * xhat).mean(axis=-1, keepdims=True)
        return (inv * (g - m1 - xhat * m2),)

    out = _emit(xhat, (x,), vjp)
    if gamma is not None:
        out = mul(out, gamma)
    if beta is not None:
        out = add(out, beta)
    return out


def bce_with_logits(logits, labels) -> Tensor:
    """Mean of ``log(1 + exp(-s * y))`` with ``s = 2 * label - 1``."""
    x = as_tensor(logits)
    lab = np.asarray(labels, dtype=np.float64).reshape(x.shape)
    s = 2.0 * lab - 1.0
    t = -s * x.value
    loss = np.maximum(t, 0.0) + np.log1p(np.exp(-np.abs(t)))
    n = x.value.size
    return _emit(
        np.asarray(loss.mean()),
        (x,),
        lambda g: (g * (-s) * _sigmoid(t) / n,),
    )
