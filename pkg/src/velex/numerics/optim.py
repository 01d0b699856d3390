"""Named parameter store and an Adam optimizer with per-group rates."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import ShapeError, Tensor


class ParameterStore:
    """Named trainable matrices. Frozen names are excluded from updates."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self.frozen: set[str] = set()

    def add(self, name: str, data: np.ndarray) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter {name!r}")
        t = Tensor(np.asarray(data, dtype=np.float64), requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def trainable_names(self) -> list[str]:
        return [n for n in self._params if n not in self.frozen]

    def freeze(self, names):
        names = set(names)
        unknown = names - set(self._params)
        if unknown:
            raise KeyError(f"cannot freeze unknown parameters: {sorted(unknown)}")
        self.frozen |= names

    def freeze_except(self, prefixes: tuple[str, ...]):
        self.frozen = {n for n in self._params if not n.startswith(prefixes)}

    def unfreeze_all(self):
        self.frozen = set()

    def zero_grad(self):
        for t in self._params.values():
            t.grad = None

    def grads(self) -> dict[str, np.ndarray]:
        """Gradients of non-frozen parameters that received one."""
        return {
            n: t.grad
            for n, t in self._params.items()
            if n not in self.frozen and t.grad is not None
        }

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {n: t.data.copy() for n, t in self._params.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]):
        for n, a in arrays.items():
            if n not in self._params:
                raise KeyError(f"unknown parameter {n!r}")
            if self._params[n].data.shape != a.shape:
                raise ShapeError(
                    f"parameter {n!r}: stored shape {a.shape} != model shape "
                    f"{self._params[n].data.shape}"
                )
            self._params[n].data = np.asarray(a, dtype=np.float64).copy()


@dataclass
class AdamState:
    """Adam moments plus the learning-rate schedule.

    `group_lrs` maps a name prefix to an override; the longest matching
    prefix wins. `decay_steps`, when set, scales every rate linearly from
    1 at step 0 down to 0 at `decay_steps`.
    """

    lr: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    group_lrs: dict[str, float] = field(default_factory=dict)
    decay_steps: int | None = None
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def lr_for(self, name: str) -> float:
        base = self.lr
        best = -1
        for prefix, rate in self.group_lrs.items():
            if name.startswith(prefix) and len(prefix) > best:
                best = len(prefix)
                base = rate
        if self.decay_steps is not None:
            base *= max(0.0, 1.0 - self.step / self.decay_steps)
        return base


def adam_step(store: ParameterStore, grads: dict[str, np.ndarray], state: AdamState):
    """One Adam update with bias correction. Frozen parameters never move."""
    state.step += 1
    for name in store.names():
        if name in store.frozen or name not in grads:
            continue
        p = store[name]
        g = np.asarray(grads[name], dtype=np.float64)
        if g.shape != p.data.shape:
            raise ShapeError(
                f"gradient for {name!r} has shape {g.shape}, expected {p.data.shape}"
            )
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        state.m[name] = m
        state.v[name] = v
        mhat = m / (1.0 - state.beta1**state.step)
        vhat = v / (1.0 - state.beta2**state.step)
        p.data = p.data - state.lr_for(name) * mhat / (np.sqrt(vhat) + state.eps)


def xavier_uniform(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-bound, bound, size=(rows, cols))
