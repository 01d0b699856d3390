"""Relation inference over fused token-level and chunk-level encodings.

A joint summary vector is refined by repeatedly attending over the
stacked token representations of both encoders, then classified with a
linear head. The refinement attention maps double as token-importance
scores for the downstream constraint set.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import layers as ly
from . import numerics as nt
from .config import ModelConfig
from .numerics import ParameterStore, Tensor


@dataclass
class InferenceOutputs:
    logits: Tensor
    predicted: int
    refined_cls: Tensor
    refinement_weights: list[Tensor]  # one 1 x 2M row per refinement layer
    joint_tokens: Tensor              # 2M x d


class RelationInferrer:
    def __init__(self, cfg: ModelConfig, store: ParameterStore, rng):
        self.cfg = cfg
        self.store = store
        d, bias = cfg.dim, cfg.use_bias
        ly.add_linear(store, rng, "inferrer.fuse", 2 * d, d, bias)
        for i in range(cfg.inferrer_layers):
            ly.add_attention(store, rng, f"inferrer.{i}.attn", d, bias, out_proj=False)
        ly.add_linear(store, rng, "inferrer.cls", d, cfg.n_relations, bias)

    def fuse_cls(self, token_cls: Tensor, chunk_cls: Tensor) -> Tensor:
        """Concatenate the two summary vectors and project back to d."""
        return ly.linear_p(self.store, "inferrer.fuse", nt.hcat([token_cls, chunk_cls]))

    @staticmethod
    def joint_tokens(token_states: Tensor, chunk_states: Tensor, content_len: int) -> Tensor:
        """Stack content-token rows of both encoders: token-level copy in
        rows 0..M-1, chunk-level copy in rows M..2M-1. Markers excluded."""
        if token_states.rows != chunk_states.rows:
            raise nt.ShapeError("encoder outputs disagree on sequence length")
        m = content_len
        return nt.vcat([
            nt.slice_rows(token_states, 1, 1 + m),
            nt.slice_rows(chunk_states, 1, 1 + m),
        ])

    def refine(self, summary: Tensor, joint_tokens: Tensor) -> tuple[Tensor, list[Tensor]]:
        """Iterative residual refinement; keeps every attention row."""
        weights: list[Tensor] = []
        o = summary
        for i in range(self.cfg.inferrer_layers):
            prefix = f"inferrer.{i}.attn"
            q = ly.linear_p(self.store, f"{prefix}.q", o)
            k = ly.linear_p(self.store, f"{prefix}.k", joint_tokens)
            v = ly.linear_p(self.store, f"{prefix}.v", joint_tokens)
            alpha = nt.softmax(nt.matmul(q, nt.transpose(k)))
            weights.append(alpha)
            o = nt.add(nt.matmul(alpha, v), o)
        return o, weights

    def classify(self, refined: Tensor) -> tuple[Tensor, int]:
        """Linear head; argmax with lowest-index tie-breaking."""
        logits = ly.linear_p(self.store, "inferrer.cls", refined)
        return logits, int(np.argmax(logits.data[0]))

    def __call__(self, token_states: Tensor, chunk_states: Tensor, content_len: int) -> InferenceOutputs:
        summary = self.fuse_cls(
            nt.slice_rows(token_states, 0, 1), nt.slice_rows(chunk_states, 0, 1)
        )
        joint = self.joint_tokens(token_states, chunk_states, content_len)
        refined, weights = self.refine(summary, joint)
        logits, predicted = self.classify(refined)
        return InferenceOutputs(
            logits=logits,
            predicted=predicted,
            refined_cls=refined,
            refinement_weights=weights,
            joint_tokens=joint,
        )


def token_saliency(refinement_weights: list[Tensor], content_len: int) -> np.ndarray:
    """Per-token importance: both stacked copies of a token, summed over
    every refinement layer."""
    if not refinement_weights:
        raise ValueError("need at least one layer of refinement weights")
    m = content_len
    scores = np.zeros(m)
    for w in refinement_weights:
        row = w.data[0]
        if row.size != 2 * m:
            raise nt.ShapeError(f"expected 2M={2*m} weights, got {row.size}")
        scores += row[:m] + row[m:]
    return scores


def inference_loss(logits: Tensor, gold: int) -> Tensor:
    return nt.cross_entropy(logits, gold)
