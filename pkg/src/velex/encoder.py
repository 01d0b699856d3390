"""Input embedding, region projection, and the token-level joint encoder.

The joint sequence is laid out [CLS, w_1..w_M, SEP, g, r_1..r_N]: text
with markers first, then the global image feature and the regions.
Regions carry no position information and behave as a set.
"""
from __future__ import annotations

import numpy as np

from . import layers as ly
from . import numerics as nt
from .config import ModelConfig
from .numerics import ParameterStore, ShapeError, Tensor
from .text import TokenSequence, VocabError


class TextImageEmbedder:
    """Shared token/position tables plus the region feature projection."""

    def __init__(self, cfg: ModelConfig, store: ParameterStore, rng):
        self.cfg = cfg
        self.store = store
        store.add("embed.token", nt.xavier_uniform(rng, cfg.vocab_size, cfg.dim))
        store.add("embed.pos", nt.xavier_uniform(rng, cfg.max_text_positions, cfg.dim))
        ly.add_linear(store, rng, "embed.region", cfg.region_feat_dim, cfg.dim, cfg.use_bias)

    def embed_text(self, seq: TokenSequence) -> Tensor:
        ids = seq.ids
        if max(ids) >= self.cfg.vocab_size:
            raise VocabError(f"token id {max(ids)} outside vocabulary")
        if len(ids) > self.cfg.max_text_positions:
            raise ShapeError(
                f"sequence of {len(ids)} exceeds {self.cfg.max_text_positions} positions"
            )
        tok = nt.take_rows(self.store["embed.token"], ids)
        pos = nt.slice_rows(self.store["embed.pos"], 0, len(ids))
        return nt.add(tok, pos)

    def project_regions(self, features: np.ndarray) -> Tensor:
        feats = np.asarray(features, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[1] != self.cfg.region_feat_dim:
            raise ShapeError(
                f"region features must be (n, {self.cfg.region_feat_dim}), got {feats.shape}"
            )
        return ly.linear_p(self.store, "embed.region", Tensor(feats))

    def joint(self, seq: TokenSequence, features: np.ndarray) -> Tensor:
        return nt.vcat([self.embed_text(seq), self.project_regions(features)])


class TokenLevelEncoder:
    """Full-attention transformer over the joint sequence (no chunk masks)."""

    def __init__(self, cfg: ModelConfig, store: ParameterStore, rng):
        self.cfg = cfg
        self.store = store
        for i in range(cfg.backbone_layers):
            ly.add_standard_layer(store, rng, f"backbone.{i}", cfg.dim, cfg.ffn_mult, cfg.use_bias)
        ly.add_layer_norm(store, "backbone.final_ln", cfg.dim)

    def __call__(self, joint: Tensor, drop: ly.Drop = None) -> Tensor:
        h = joint
        mask = ly.full_mask(joint.rows, joint.rows)
        for i in range(self.cfg.backbone_layers):
            h = ly.standard_layer(self.store, f"backbone.{i}", h, mask, self.cfg.heads, drop)
        # Final norm tames the pre-LN residual stream; an empty stack
        # stays a true identity.
        if self.cfg.backbone_layers > 0:
            h = ly.ln_p(self.store, "backbone.final_ln", h)
        return h
