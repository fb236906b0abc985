"""Reverse-mode differentiable tensors on dense numpy arrays.

A Tensor wraps a float array plus an optional gradient; ops build a tape of
backward closures which ``backward()`` replays in reverse topological order.
The op set is exactly what the transformer needs -- there is no broadcasting
beyond what those ops use, no views, no graph serialization.

Float64 is the default dtype; float32 is supported for long training runs
(gradient checks always run in float64).
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from .. import kernels
from ..errors import EmptyMaskError, IndexErrorWithId, ShapeError

DEFAULT_DTYPE = np.float64
LAYER_NORM_EPS = 1e-5

_grad_state = threading.local()


def grad_enabled() -> bool:
    return getattr(_grad_state, "enabled", True)


@contextmanager
def no_grad():
    """Disable tape building (per thread) inside the context."""
    prev = grad_enabled()
    _grad_state.enabled = False
    try:
        yield
    finally:
        _grad_state.enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(DEFAULT_DTYPE)
        if dtype is not None and arr.dtype != dtype:
            arr = arr.astype(dtype)
        self.data: np.ndarray = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype.name})"

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = g.astype(self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self) -> None:
        """Backpropagate from this (scalar) tensor through the tape."""
        if self.data.size != 1:
            raise ShapeError(f"backward() needs a scalar, got shape {self.shape}")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # Operator sugar; the real ops live below.
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, scale(other, -1.0) if isinstance(other, Tensor) else -other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scale(self, -1.0)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    track = grad_enabled() and any(p.requires_grad or p._parents for p in parents)
    out.requires_grad = track
    out._parents = tuple(parents) if track else ()
    out._backward = backward if track else None
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum g down to `shape` (inverse of numpy broadcasting)."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def add(a: Tensor, b) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b)
    data = a.data + b.data

    def backward(g):
        a._accumulate(_unbroadcast(g, a.shape))
        b._accumulate(_unbroadcast(g, b.shape))

    return _make(data, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    data = a.data * b.data

    def backward(g):
        a._accumulate(_unbroadcast(g * b.data, a.shape))
        b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _make(data, (a, b), backward)


def scale(a: Tensor, s: float) -> Tensor:
    data = a.data * s

    def backward(g):
        a._accumulate(g * s)

    return _make(data, (a,), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product; batched over leading axes when present."""
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError(f"matmul needs 2d+ operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.shape} vs {b.shape}")
    data = np.matmul(a.data, b.data)

    def backward(g):
        a._accumulate(_unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape))
        b._accumulate(_unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape))

    return _make(data, (a, b), backward)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Max-subtracted softmax along `axis`; rows sum to one."""
    if not -x.data.ndim <= axis < x.data.ndim:
        raise ShapeError(f"softmax axis {axis} invalid for shape {x.shape}")
    moved = axis not in (-1, x.data.ndim - 1)
    xd = np.moveaxis(x.data, axis, -1) if moved else x.data
    y = kernels.softmax_fwd(xd)

    def backward(g):
        gd = np.moveaxis(g, axis, -1) if moved else g
        gx = kernels.softmax_bwd(y, gd)
        x._accumulate(np.moveaxis(gx, -1, axis) if moved else gx)

    out = np.moveaxis(y, -1, axis) if moved else y
    return _make(out, (x,), backward)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = LAYER_NORM_EPS) -> Tensor:
    """Normalize over the last axis to zero mean / unit variance, then affine."""
    if gain.shape != x.shape[-1:] or bias.shape != x.shape[-1:]:
        raise ShapeError(
            f"layer_norm affine shapes {gain.shape}/{bias.shape} do not match last axis of {x.shape}"
        )
    xhat, inv = kernels.layer_norm_fwd(x.data, eps)
    data = xhat * gain.data + bias.data

    def backward(g):
        gain._accumulate((g * xhat).reshape(-1, x.shape[-1]).sum(axis=0))
        bias._accumulate(g.reshape(-1, x.shape[-1]).sum(axis=0))
        x._accumulate(kernels.layer_norm_bwd(xhat, inv, g * gain.data))

    return _make(data, (x, gain, bias), backward)


def gelu(x: Tensor) -> Tensor:
    data = kernels.gelu_fwd(x.data)

    def backward(g):
        x._accumulate(kernels.gelu_bwd(x.data, g))

    return _make(data, (x,), backward)


def embedding_lookup(table: Tensor, ids) -> Tensor:
    """Gather rows of `table`; gradients scatter-add back into the rows."""
    idx = np.asarray(ids, dtype=np.int64)
    v = table.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= v):
        bad = idx[(idx < 0) | (idx >= v)][0]
        raise IndexErrorWithId(f"embedding id {int(bad)} out of range [0, {v})")
    data = table.data[idx]

    def backward(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, idx, g)
        table._accumulate(gt)

    return _make(data, (table,), backward)


def masked_cross_entropy(logits: Tensor, targets, mask) -> Tensor:
    """Mean NLL of `targets` under softmax(logits) over masked rows only.

    Unmasked rows contribute exactly zero loss and zero gradient. Accepts
    [L, K] or [B, L, K] logits.
    """
    tg = np.asarray(targets, dtype=np.int64)
    mk = np.asarray(mask, dtype=bool)
    if logits.shape[:-1] != tg.shape or tg.shape != mk.shape:
        raise ShapeError(
            f"cross entropy shapes disagree: logits {logits.shape}, targets {tg.shape}, mask {mk.shape}"
        )
    if not mk.any():
        raise EmptyMaskError("cross entropy mask selects no positions")
    k = logits.shape[-1]
    if tg[mk].min() < 0 or tg[mk].max() >= k:
        raise IndexErrorWithId(f"target id outside [0, {k})")
    flat = logits.data.reshape(-1, k)
    ft = tg.reshape(-1)
    fm = mk.reshape(-1)
    m = flat.max(axis=-1, keepdims=True)
    shifted = flat - m
    lse = np.log(np.exp(shifted).sum(axis=-1))
    rows = np.nonzero(fm)[0]
    nll = lse[rows] - shifted[rows, ft[rows]]
    n = len(rows)
    data = np.asarray(nll.sum() / n, dtype=logits.dtype)

    def backward(g):
        p = np.exp(shifted[rows] - lse[rows, None])
        p[np.arange(n), ft[rows]] -= 1.0
        gl = np.zeros_like(flat)
        gl[rows] = p * (g / n)
        logits._accumulate(gl.reshape(logits.shape))

    return _make(data, (logits,), backward)


def reshape(x: Tensor, shape) -> Tensor:
    data = x.data.reshape(shape)

    def backward(g):
        x._accumulate(g.reshape(x.shape))

    return _make(data, (x,), backward)


def transpose(x: Tensor, axes) -> Tensor:
    data = np.transpose(x.data, axes)
    inverse = np.argsort(axes)

    def backward(g):
        x._accumulate(np.transpose(g, inverse))

    return _make(data, (x,), backward)


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    data = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            p._accumulate(g[tuple(sl)])

    return _make(data, tuple(parts), backward)


def narrow(x: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice [start, start+length) along `axis`."""
    sl = [slice(None)] * x.data.ndim
    sl[axis] = slice(start, start + length)
    sl = tuple(sl)
    data = x.data[sl].copy()

    def backward(g):
        gx = np.zeros_like(x.data)
        gx[sl] = g
        x._accumulate(gx)

    return _make(data, (x,), backward)


@dataclass
class Parameter:
    """A trainable tensor with a freeze group and a hierarchical name."""

    class Group(str, Enum):
        PRETRAINED = "pretrained"
        ADAPTIVE = "adaptive"

    tensor: Tensor = field()
    group: "Parameter.Group" = Group.PRETRAINED
    name: str = ""

    def __post_init__(self):
        self.tensor.requires_grad = True

    @property
    def data(self) -> np.ndarray:
        return self.tensor.data

    def count(self) -> int:
        return int(self.tensor.data.size)
