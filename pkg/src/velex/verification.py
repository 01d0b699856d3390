"""Gradient-fidelity harness over the full training losses.

Builds a deliberately small model (dim 8, six content tokens, four
regions, vocab 50) and sweeps every trainable coordinate of the
stage-1 relation loss and the stage-2 generation loss (gate and
constraint-distribution paths included) against central differences.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ModelConfig
from .generator import build_constraint_set
from .model import Model
from .numerics import Tensor, grad_check, no_grad
from .text import TokenSequence


@dataclass
class ToyProblem:
    model: Model
    seq: TokenSequence
    spans: list[tuple[int, int]]
    regions: np.ndarray
    gold: int
    full_ids: list[int]
    n_prefix: int


def build_toy_problem(seed: int = 0) -> ToyProblem:
    cfg = ModelConfig(
        vocab_size=50,
        dim=8,
        region_feat_dim=6,
        max_text_positions=10,
        max_gen_positions=16,
        backbone_layers=1,
        within_layers=1,
        cross_layers=1,
        xmodal_layers=1,
        inferrer_layers=2,
        decoder_layers=1,
        init_seed=seed,
    )
    model = Model(cfg)
    rng = np.random.default_rng(seed + 1)
    words = [f"w{i}" for i in range(6)]
    content = [int(t) for t in rng.integers(4, 50, size=6)]
    seq = TokenSequence([0] + content + [1], words)
    spans = [(0, 2), (2, 3), (3, 6)]
    regions = rng.normal(size=(5, 6))  # global + N=4
    explanation = [int(t) for t in rng.integers(4, 50, size=4)]
    full_ids = [2] + content + explanation + [3]
    return ToyProblem(
        model=model,
        seq=seq,
        spans=spans,
        regions=regions,
        gold=1,
        full_ids=full_ids,
        n_prefix=len(content),
    )


def stage1_gradient_error(problem: ToyProblem, epsilon: float = 1e-5) -> float:
    model = problem.model
    names = [n for n in model.store.trainable_names() if not n.startswith("gen.")]
    return grad_check(
        lambda: model.stage1_loss(problem.seq, problem.spans, problem.regions, problem.gold),
        model.store,
        epsilon=epsilon,
        names=names,
    )


def stage2_gradient_error(problem: ToyProblem, epsilon: float = 1e-5) -> float:
    model = problem.model
    with no_grad():
        enc = model.encode(problem.seq, problem.spans, problem.regions)
        inf = model.infer(enc)
        joint_tokens = inf.joint_tokens.data.copy()
        state = build_constraint_set(
            model.saliency(inf, problem.seq.content_len), problem.seq
        )
    if state.empty:
        raise RuntimeError("toy constraint set is empty; cannot exercise the mixture")
    names = [n for n in model.store.trainable_names() if n.startswith("gen.")]
    return grad_check(
        lambda: model.generation_loss(
            problem.full_ids,
            problem.n_prefix,
            Tensor(joint_tokens),
            state,
            problem.seq.content_ids,
        ),
        model.store,
        epsilon=epsilon,
        names=names,
    )
