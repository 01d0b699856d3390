"""Minimal reverse-mode autodiff over dense float64 matrices.

Everything is 2-D: vectors are single-row matrices, scalars are 1x1.
Graph building can be switched off (see `no_grad`) for cheap inference.
"""
from __future__ import annotations

import contextlib
import math
from typing import Callable, Iterable, Sequence

import numpy as np


class ShapeError(ValueError):
    pass


class DegenerateMaskError(ValueError):
    pass


class NumericError(ArithmeticError):
    pass


_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable graph construction inside the block."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    """A 2-D float64 array plus an optional backward closure."""

    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ShapeError(f"tensors are 2-D, got shape {arr.shape}")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._backward: Callable[[], None] | None = None
        self._parents: tuple[Tensor, ...] = ()

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g: np.ndarray):
        if self.grad is None:
            self.grad = g.copy()
        else:
            self.grad += g

    def backward(self):
        """Reverse-mode sweep from this (scalar) tensor."""
        if self.data.size != 1:
            raise ShapeError("backward() expects a scalar loss")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward()

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward) -> Tensor:
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(p for p in parents if p.requires_grad)
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Sum gradient over axes that were broadcast in the forward pass."""
    if g.shape == shape:
        return g
    if shape[0] == 1 and g.shape[0] != 1:
        g = g.sum(axis=0, keepdims=True)
    if shape[1] == 1 and g.shape[1] != 1:
        g = g.sum(axis=1, keepdims=True)
    if g.shape != shape:
        raise ShapeError(f"cannot reduce gradient {g.shape} to {shape}")
    return g


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.cols != b.rows:
        raise ShapeError(f"matmul: {a.shape} @ {b.shape}")
    out_data = a.data @ b.data
    out = _make(out_data, (a, b), None)

    def backward():
        g = out.grad
        if a.requires_grad:
            a._accumulate(g @ b.data.T)
        if b.requires_grad:
            b._accumulate(a.data.T @ g)

    out._backward = backward if out.requires_grad else None
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = _make(a.data + b.data, (a, b), None)

    def backward():
        g = out.grad
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    out._backward = backward if out.requires_grad else None
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    return add(a, scale(b, -1.0))


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = _make(a.data * b.data, (a, b), None)

    def backward():
        g = out.grad
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    out._backward = backward if out.requires_grad else None
    return out


def scale(a: Tensor, c: float) -> Tensor:
    a = _as_tensor(a)
    out = _make(a.data * c, (a,), None)

    def backward():
        a._accumulate(out.grad * c)

    out._backward = backward if out.requires_grad else None
    return out


def add_scalar(a: Tensor, c: float) -> Tensor:
    a = _as_tensor(a)
    out = _make(a.data + c, (a,), None)

    def backward():
        a._accumulate(out.grad)

    out._backward = backward if out.requires_grad else None
    return out


def transpose(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    out = _make(a.data.T.copy(), (a,), None)

    def backward():
        a._accumulate(out.grad.T)

    out._backward = backward if out.requires_grad else None
    return out


def vcat(parts: Sequence[Tensor]) -> Tensor:
    parts = [_as_tensor(p) for p in parts]
    cols = parts[0].cols
    for p in parts:
        if p.cols != cols:
            raise ShapeError("vcat: column mismatch")
    out = _make(np.concatenate([p.data for p in parts], axis=0), tuple(parts), None)
    offsets = np.cumsum([0] + [p.rows for p in parts])

    def backward():
        g = out.grad
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                p._accumulate(g[lo:hi])

    out._backward = backward if out.requires_grad else None
    return out


def hcat(parts: Sequence[Tensor]) -> Tensor:
    parts = [_as_tensor(p) for p in parts]
    rows = parts[0].rows
    for p in parts:
        if p.rows != rows:
            raise ShapeError("hcat: row mismatch")
    out = _make(np.concatenate([p.data for p in parts], axis=1), tuple(parts), None)
    offsets = np.cumsum([0] + [p.cols for p in parts])

    def backward():
        g = out.grad
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                p._accumulate(g[:, lo:hi])

    out._backward = backward if out.requires_grad else None
    return out


def take_rows(a: Tensor, idx: Sequence[int]) -> Tensor:
    """Gather rows by index; backward scatter-adds (rows may repeat)."""
    a = _as_tensor(a)
    idx = np.asarray(idx, dtype=np.intp)
    if idx.size and (idx.min() < 0 or idx.max() >= a.rows):
        raise IndexError(f"row index out of range for {a.rows} rows")
    out = _make(a.data[idx], (a,), None)

    def backward():
        g = np.zeros_like(a.data)
        np.add.at(g, idx, out.grad)
        a._accumulate(g)

    out._backward = backward if out.requires_grad else None
    return out


def slice_rows(a: Tensor, start: int, stop: int) -> Tensor:
    a = _as_tensor(a)
    out = _make(a.data[start:stop].copy(), (a,), None)

    def backward():
        g = np.zeros_like(a.data)
        g[start:stop] = out.grad
        a._accumulate(g)

    out._backward = backward if out.requires_grad else None
    return out


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    a = _as_tensor(a)
    out = _make(a.data[:, start:stop].copy(), (a,), None)

    def backward():
        g = np.zeros_like(a.data)
        g[:, start:stop] = out.grad
        a._accumulate(g)

    out._backward = backward if out.requires_grad else None
    return out


def entry(a: Tensor, i: int, j: int) -> Tensor:
    a = _as_tensor(a)
    out = _make(a.data[i, j].reshape(1, 1), (a,), None)

    def backward():
        g = np.zeros_like(a.data)
        g[i, j] = out.grad[0, 0]
        a._accumulate(g)

    out._backward = backward if out.requires_grad else None
    return out


def sum_all(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    out = _make(np.array([[a.data.sum()]]), (a,), None)

    def backward():
        a._accumulate(np.full_like(a.data, out.grad[0, 0]))

    out._backward = backward if out.requires_grad else None
    return out


def sum_rows(a: Tensor) -> Tensor:
    """Column-wise sum: (m, n) -> (1, n)."""
    a = _as_tensor(a)
    out = _make(a.data.sum(axis=0, keepdims=True), (a,), None)

    def backward():
        a._accumulate(np.repeat(out.grad, a.rows, axis=0))

    out._backward = backward if out.requires_grad else None
    return out


def log(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    if np.any(a.data <= 0):
        raise NumericError("log of non-positive value")
    out = _make(np.log(a.data), (a,), None)

    def backward():
        a._accumulate(out.grad / a.data)

    out._backward = backward if out.requires_grad else None
    return out


def sigmoid(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    s = 1.0 / (1.0 + np.exp(-a.data))
    out = _make(s, (a,), None)

    def backward():
        a._accumulate(out.grad * s * (1.0 - s))

    out._backward = backward if out.requires_grad else None
    return out


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(a: Tensor) -> Tensor:
    """Smooth (tanh-form) GELU; differentiable everywhere."""
    a = _as_tensor(a)
    x = a.data
    inner = _GELU_C * (x + 0.044715 * x**3)
    t = np.tanh(inner)
    out = _make(0.5 * x * (1.0 + t), (a,), None)

    def backward():
        d_inner = _GELU_C * (1.0 + 3 * 0.044715 * x**2)
        d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t**2) * d_inner
        a._accumulate(out.grad * d)

    out._backward = backward if out.requires_grad else None
    return out


def dropout(a: Tensor, p: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout with an explicit generator; p=0 is the identity."""
    if p <= 0.0:
        return a
    if p >= 1.0:
        raise ValueError("dropout probability must be < 1")
    a = _as_tensor(a)
    keep = (rng.random(a.shape) >= p) / (1.0 - p)
    out = _make(a.data * keep, (a,), None)

    def backward():
        a._accumulate(out.grad * keep)

    out._backward = backward if out.requires_grad else None
    return out


def masked_softmax(a: Tensor, mask) -> Tensor:
    """Row-wise softmax over positions where mask is True.

    Masked-out entries are exactly zero in the output. Stabilized by
    subtracting the row max over kept entries.
    """
    a = _as_tensor(a)
    m = np.broadcast_to(np.asarray(mask, dtype=bool), a.shape)
    kept_per_row = m.sum(axis=1)
    if np.any(kept_per_row == 0):
        row = int(np.argmin(kept_per_row))
        raise DegenerateMaskError(f"all positions masked out in row {row}")
    neg = np.where(m, a.data, -np.inf)
    mx = neg.max(axis=1, keepdims=True)
    e = np.exp(neg - mx)
    e = np.where(m, e, 0.0)
    y = e / e.sum(axis=1, keepdims=True)
    out = _make(y, (a,), None)

    def backward():
        g = out.grad
        dot = (g * y).sum(axis=1, keepdims=True)
        a._accumulate(y * (g - dot))

    out._backward = backward if out.requires_grad else None
    return out


def softmax(a: Tensor) -> Tensor:
    return masked_softmax(a, np.ones(_as_tensor(a).shape, dtype=bool))


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Row-wise layer normalization with learned gain/bias (1 x d)."""
    x, gain, bias = _as_tensor(x), _as_tensor(gain), _as_tensor(bias)
    d = x.cols
    if gain.shape != (1, d) or bias.shape != (1, d):
        raise ShapeError("layer_norm gain/bias must be 1 x d")
    mu = x.data.mean(axis=1, keepdims=True)
    var = x.data.var(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out = _make(xhat * gain.data + bias.data, (x, gain, bias), None)

    def backward():
        g = out.grad
        if gain.requires_grad:
            gain._accumulate((g * xhat).sum(axis=0, keepdims=True))
        if bias.requires_grad:
            bias._accumulate(g.sum(axis=0, keepdims=True))
        if x.requires_grad:
            gy = g * gain.data
            m1 = gy.mean(axis=1, keepdims=True)
            m2 = (gy * xhat).mean(axis=1, keepdims=True)
            x._accumulate((gy - m1 - xhat * m2) * inv)

    out._backward = backward if out.requires_grad else None
    return out


def cross_entropy(logits: Tensor, target: int) -> Tensor:
    """-log softmax(logits)[target] for a single-row logit vector."""
    logits = _as_tensor(logits)
    if logits.rows != 1:
        raise ShapeError("cross_entropy expects a 1 x n logit row")
    n = logits.cols
    if not (0 <= target < n):
        raise IndexError(f"target {target} out of range for {n} logits")
    z = logits.data[0]
    mx = z.max()
    lse = mx + np.log(np.exp(z - mx).sum())
    out = _make(np.array([[lse - z[target]]]), (logits,), None)

    def backward():
        p = np.exp(z - lse)
        p[target] -= 1.0
        logits._accumulate(out.grad[0, 0] * p.reshape(1, -1))

    out._backward = backward if out.requires_grad else None
    return out


def linear(x: Tensor, w: Tensor, bias: Tensor | None = None) -> Tensor:
    """x @ w (+ bias row). The workhorse projection."""
    x, w = _as_tensor(x), _as_tensor(w)
    if x.cols != w.rows:
        raise ShapeError(f"linear: input cols {x.cols} != weight rows {w.rows}")
    out = matmul(x, w)
    if bias is not None:
        out = add(out, bias)
    return out


def attention(q: Tensor, k: Tensor, v: Tensor, mask, heads: int = 1) -> tuple[Tensor, Tensor]:
    """Scaled dot-product attention with a boolean mask.

    Returns (output, weights); `weights` is the post-softmax matrix,
    averaged over heads when heads > 1, and stays in the autodiff graph
    so attention maps can be supervised.
    """
    q, k, v = _as_tensor(q), _as_tensor(k), _as_tensor(v)
    if q.cols != k.cols:
        raise ShapeError("attention: query/key dim mismatch")
    if k.rows != v.rows:
        raise ShapeError("attention: key/value length mismatch")
    m = np.asarray(mask, dtype=bool)
    if m.shape != (q.rows, k.rows):
        raise ShapeError(f"attention: mask shape {m.shape} != {(q.rows, k.rows)}")
    d = q.cols
    if d % heads != 0:
        raise ShapeError(f"attention: dim {d} not divisible by {heads} heads")
    dh = d // heads
    if heads == 1:
        scores = scale(matmul(q, transpose(k)), 1.0 / math.sqrt(d))
        weights = masked_softmax(scores, m)
        return matmul(weights, v), weights
    outs, wsum = [], None
    for h in range(heads):
        qs = slice_cols(q, h * dh, (h + 1) * dh)
        ks = slice_cols(k, h * dh, (h + 1) * dh)
        vs = slice_cols(v, h * dh, (h + 1) * dh)
        scores = scale(matmul(qs, transpose(ks)), 1.0 / math.sqrt(dh))
        w = masked_softmax(scores, m)
        outs.append(matmul(w, vs))
        wsum = w if wsum is None else add(wsum, w)
    return hcat(outs), scale(wsum, 1.0 / heads)
