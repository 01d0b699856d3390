"""Parameter registration and forward helpers shared by the encoder stacks."""
from __future__ import annotations

from typing import Callable

import numpy as np

from . import numerics as nt
from .numerics import ParameterStore, Tensor

Drop = Callable[[Tensor], Tensor] | None


def add_linear(store: ParameterStore, rng, name: str, d_in: int, d_out: int, bias: bool):
    store.add(f"{name}.w", nt.xavier_uniform(rng, d_in, d_out))
    if bias:
        store.add(f"{name}.b", np.zeros((1, d_out)))


def linear_p(store: ParameterStore, name: str, x: Tensor) -> Tensor:
    bias = store[f"{name}.b"] if f"{name}.b" in store else None
    return nt.linear(x, store[f"{name}.w"], bias)


def add_layer_norm(store: ParameterStore, name: str, d: int):
    store.add(f"{name}.g", np.ones((1, d)))
    store.add(f"{name}.b", np.zeros((1, d)))


def ln_p(store: ParameterStore, name: str, x: Tensor) -> Tensor:
    return nt.layer_norm(x, store[f"{name}.g"], store[f"{name}.b"])


def add_ffn(store: ParameterStore, rng, name: str, d: int, mult: int, bias: bool):
    add_linear(store, rng, f"{name}.fc1", d, mult * d, bias)
    add_linear(store, rng, f"{name}.fc2", mult * d, d, bias)


def ffn_p(store: ParameterStore, name: str, x: Tensor) -> Tensor:
    return linear_p(store, f"{name}.fc2", nt.gelu(linear_p(store, f"{name}.fc1", x)))


def add_attention(store: ParameterStore, rng, name: str, d: int, bias: bool, out_proj: bool):
    # No key bias: it shifts every logit of a query row equally, which the
    # softmax cancels, leaving a parameter with an identically zero gradient.
    add_linear(store, rng, f"{name}.q", d, d, bias)
    add_linear(store, rng, f"{name}.k", d, d, bias=False)
    add_linear(store, rng, f"{name}.v", d, d, bias)
    if out_proj:
        add_linear(store, rng, f"{name}.o", d, d, bias)


def attention_p(
    store: ParameterStore,
    name: str,
    x_q: Tensor,
    x_kv: Tensor,
    mask: np.ndarray,
    heads: int,
) -> tuple[Tensor, Tensor]:
    """Projected attention sublayer; applies `.o` only when registered."""
    q = linear_p(store, f"{name}.q", x_q)
    k = linear_p(store, f"{name}.k", x_kv)
    v = linear_p(store, f"{name}.v", x_kv)
    out, weights = nt.attention(q, k, v, mask, heads=heads)
    if f"{name}.o.w" in store:
        out = linear_p(store, f"{name}.o", out)
    return out, weights


def add_standard_layer(store, rng, prefix: str, d: int, mult: int, bias: bool):
    """Self-attention block with output projection (backbone style)."""
    add_layer_norm(store, f"{prefix}.ln1", d)
    add_attention(store, rng, f"{prefix}.attn", d, bias, out_proj=True)
    add_layer_norm(store, f"{prefix}.ln2", d)
    add_ffn(store, rng, f"{prefix}.ffn", d, mult, bias)


def standard_layer(
    store, prefix: str, h: Tensor, mask: np.ndarray, heads: int, drop: Drop = None
) -> Tensor:
    z = ln_p(store, f"{prefix}.ln1", h)
    a, _ = attention_p(store, f"{prefix}.attn", z, z, mask, heads)
    if drop is not None:
        a = drop(a)
    h = nt.add(h, a)
    f = ffn_p(store, f"{prefix}.ffn", ln_p(store, f"{prefix}.ln2", h))
    if drop is not None:
        f = drop(f)
    return nt.add(h, f)


def add_interactor_layer(store, rng, prefix: str, d: int, mult: int, bias: bool):
    """Attention block without output projection: value mixing feeds the
    residual directly, so attention weights are the mixing coefficients."""
    add_layer_norm(store, f"{prefix}.ln1", d)
    add_attention(store, rng, f"{prefix}.attn", d, bias, out_proj=False)
    add_layer_norm(store, f"{prefix}.ln2", d)
    add_ffn(store, rng, f"{prefix}.ffn", d, mult, bias)


def interactor_layer(
    store, prefix: str, h: Tensor, mask: np.ndarray, heads: int, drop: Drop = None
) -> tuple[Tensor, Tensor]:
    z = ln_p(store, f"{prefix}.ln1", h)
    a, weights = attention_p(store, f"{prefix}.attn", z, z, mask, heads)
    if drop is not None:
        a = drop(a)
    h = nt.add(h, a)
    f = ffn_p(store, f"{prefix}.ffn", ln_p(store, f"{prefix}.ln2", h))
    if drop is not None:
        f = drop(f)
    return nt.add(h, f), weights


def full_mask(rows: int, cols: int) -> np.ndarray:
    return np.ones((rows, cols), dtype=bool)


def causal_mask(n: int) -> np.ndarray:
    return np.tril(np.ones((n, n), dtype=bool))


def group_mask(groups: list[list[int]], size: int) -> np.ndarray:
    """Block mask: position i may attend to j iff they share a group."""
    m = np.zeros((size, size), dtype=bool)
    covered = np.zeros(size, dtype=bool)
    for g in groups:
        idx = np.asarray(g, dtype=np.intp)
        m[np.ix_(idx, idx)] = True
        covered[idx] = True
    if not covered.all():
        missing = int(np.argmin(covered))
        raise ValueError(f"position {missing} belongs to no group")
    return m
