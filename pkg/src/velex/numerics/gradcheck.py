"""Central-difference verification of analytic gradients."""
from __future__ import annotations

from typing import Callable

import numpy as np

from .optim import ParameterStore
from .tensor import NumericError, Tensor, no_grad


def grad_check(
    f: Callable[[], Tensor],
    store: ParameterStore,
    epsilon: float = 1e-5,
    names: list[str] | None = None,
    max_coords_per_param: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Max relative error between analytic and numeric gradients of f().

    f must rebuild its graph on every call and return a scalar. The
    numeric side is a central difference; per-coordinate error is
    |a - n| / max(|a|, |n|, 1e-8). `max_coords_per_param` subsamples
    coordinates (needs `rng`) when a full sweep is too slow.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    store.zero_grad()
    loss = f()
    if not np.isfinite(loss.data).all():
        raise NumericError("loss is not finite")
    loss.backward()
    check_names = names if names is not None else store.trainable_names()
    analytic = {
        n: (store[n].grad.copy() if store[n].grad is not None else np.zeros_like(store[n].data))
        for n in check_names
    }

    worst = 0.0
    for name in check_names:
        p = store[name]
        flat = p.data.reshape(-1)
        ga = analytic[name].reshape(-1)
        coords = np.arange(flat.size)
        if max_coords_per_param is not None and flat.size > max_coords_per_param:
            if rng is None:
                raise ValueError("coordinate subsampling requires an rng")
            coords = rng.choice(flat.size, size=max_coords_per_param, replace=False)
        for c in coords:
            orig = flat[c]
            with no_grad():
                flat[c] = orig + epsilon
                hi = f().item()
                flat[c] = orig - epsilon
                lo = f().item()
            flat[c] = orig
            if not (np.isfinite(hi) and np.isfinite(lo)):
                raise NumericError(f"non-finite loss while perturbing {name}[{c}]")
            num = (hi - lo) / (2.0 * epsilon)
            err = abs(ga[c] - num) / max(abs(ga[c]), abs(num), 1e-8)
            if err > worst:
                worst = err
    return worst
