"""Beam sampling and its lexically-constrained variant.

Scores are cumulative log-probabilities (always <= 0 before
adjustment). The constrained variant multiplies a candidate's score by
the coefficient lambda whenever its newest token is a constraint hit;
for negative scores and lambda in (0, 1) that strictly raises the
score, so candidates meeting more constraints rank higher. A beam that
hits constraints at several steps is multiplied once per hit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Collection

import numpy as np

from .config import ConfigError, DecodeConfig

StepFn = Callable[[list[int]], np.ndarray]


@dataclass
class Beam:
    sent: list[int]
    score: float = 0.0
    finished: bool = False
    trace: list[tuple[int, float]] = field(default_factory=list)  # (token, log p)


def top_k_sample_step(probs: np.ndarray, top_k: int, rng: np.random.Generator) -> int:
    """Sample from the renormalized top-k of a distribution.

    Ties on probability keep the lower token id. Draws exactly one
    uniform variate from `rng`.
    """
    if top_k < 1:
        raise ConfigError("top_k must be >= 1")
    p = np.asarray(probs, dtype=np.float64).reshape(-1)
    order = np.argsort(-p, kind="stable")[:top_k]
    kept = p[order]
    positive = kept > 0.0
    order, kept = order[positive], kept[positive]
    total = kept.sum()
    if total <= 0.0:
        raise ValueError("top-k mass is zero; not a valid distribution")
    u = rng.random() * total
    acc = 0.0
    for idx, mass in zip(order, kept):
        acc += mass
        if u < acc:
            return int(idx)
    return int(order[-1])


def _expand(
    step_fn: StepFn,
    init_ids: list[int],
    eos_id: int,
    config: DecodeConfig,
    constraints: Collection[int],
    lam: float,
    rng: np.random.Generator | None,
) -> list[Beam]:
    if rng is None:
        rng = np.random.default_rng(config.seed)
    k, s = config.beam, config.samples
    beams = [Beam(sent=list(init_ids)) for _ in range(k)]
    for _ in range(config.max_len):
        if all(b.finished for b in beams):
            break
        candidates: list[Beam] = []
        for beam in beams:
            if beam.finished:
                candidates.append(beam)
                continue
            probs = step_fn(beam.sent)
            for _ in range(s):
                tok = top_k_sample_step(probs, config.top_k, rng)
                logp = math.log(probs[tok])
                score = beam.score + logp
                if tok in constraints:
                    score = lam * score
                candidates.append(
                    Beam(
                        sent=beam.sent + [tok],
                        score=score,
                        finished=tok == eos_id,
                        trace=beam.trace + [(tok, logp)],
                    )
                )
        candidates.sort(key=lambda b: -b.score)
        beams = candidates[: k]
    return beams


def beam_sample(
    step_fn: StepFn,
    init_ids: list[int],
    eos_id: int,
    config: DecodeConfig,
    rng: np.random.Generator | None = None,
) -> tuple[list[int], list[Beam]]:
    """Plain beam sampling; returns (generated ids, final ranked beams)."""
    beams = _expand(step_fn, init_ids, eos_id, config, frozenset(), 1.0, rng)
    return beams[0].sent[len(init_ids):], beams


def constrained_beam_sample(
    step_fn: StepFn,
    init_ids: list[int],
    eos_id: int,
    constraints: Collection[int],
    config: DecodeConfig,
    rng: np.random.Generator | None = None,
) -> tuple[list[int], list[Beam]]:
    """Beam sampling with per-hit score multiplication by config.lam."""
    beams = _expand(
        step_fn, init_ids, eos_id, config, frozenset(constraints), config.lam, rng
    )
    return beams[0].sent[len(init_ids):], beams
