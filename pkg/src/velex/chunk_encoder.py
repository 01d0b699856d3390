"""Chunk-aware encoder: within-chunk, cross-chunk and cross-modal stages.

The within-chunk stage restricts attention to chunk blocks (markers are
singletons, image rows form one block). The cross-chunk stage is
unrestricted. The cross-modal stage pools each chunk, attends over
[global, region_1..region_N], and broadcasts the mixed region content
back to every token of the chunk. Final states concatenate the
cross-chunk and cross-modal stage outputs feature-wise and project back
to the model dimension.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import layers as ly
from . import numerics as nt
from .chunking import Span, require_valid_spans
from .config import ModelConfig
from .numerics import ParameterStore, Tensor


class EmptyLabelError(ValueError):
    pass


@dataclass
class ChunkEncoderOutputs:
    states: Tensor
    region_attention: list[Tensor]  # one K x (N+1) matrix per cross-modal layer


def chunk_groups(content_len: int, spans: list[Span], n_image_rows: int) -> list[list[int]]:
    """Attention groups over the joint layout for the within-chunk stage."""
    require_valid_spans(spans, content_len)
    groups: list[list[int]] = [[0]]
    groups.extend([list(range(1 + s, 1 + e)) for s, e in spans])
    groups.append([content_len + 1])
    if n_image_rows > 0:
        base = content_len + 2
        groups.append(list(range(base, base + n_image_rows)))
    return groups


def pool_matrix(spans: list[Span], content_len: int) -> np.ndarray:
    """K x M averaging matrix: row k holds 1/len over span k's tokens."""
    require_valid_spans(spans, content_len)
    p = np.zeros((len(spans), content_len))
    for k, (s, e) in enumerate(spans):
        p[k, s:e] = 1.0 / (e - s)
    return p


def broadcast_matrix(spans: list[Span], content_len: int) -> np.ndarray:
    """M x K matrix carrying chunk k's row to every token of chunk k."""
    require_valid_spans(spans, content_len)
    b = np.zeros((content_len, len(spans)))
    for k, (s, e) in enumerate(spans):
        b[s:e, k] = 1.0
    return b


def pool_chunks(h_text: Tensor, spans: list[Span]) -> Tensor:
    """Mean of token rows per chunk; spans are end-exclusive."""
    return nt.matmul(Tensor(pool_matrix(spans, h_text.rows)), h_text)


class ChunkAwareEncoder:
    def __init__(self, cfg: ModelConfig, store: ParameterStore, rng):
        self.cfg = cfg
        self.store = store
        d, mult, bias = cfg.dim, cfg.ffn_mult, cfg.use_bias
        for i in range(cfg.within_layers):
            ly.add_interactor_layer(store, rng, f"csi.within.{i}", d, mult, bias)
        for i in range(cfg.cross_layers):
            ly.add_interactor_layer(store, rng, f"csi.cross.{i}", d, mult, bias)
        for i in range(cfg.xmodal_layers):
            ly.add_layer_norm(store, f"csi.xmodal.{i}.ln1", d)
            ly.add_attention(store, rng, f"csi.xmodal.{i}.attn", d, bias, out_proj=False)
            ly.add_layer_norm(store, f"csi.xmodal.{i}.ln2", d)
            ly.add_ffn(store, rng, f"csi.xmodal.{i}.ffn", d, mult, bias)
        ly.add_linear(store, rng, "csi.fuse", 2 * d, d, bias)
        ly.add_layer_norm(store, "csi.final_ln", d)

    def within_layer(self, index: int, h: Tensor, groups: list[list[int]],
                     drop: ly.Drop = None) -> tuple[Tensor, Tensor]:
        mask = ly.group_mask(groups, h.rows)
        return ly.interactor_layer(
            self.store, f"csi.within.{index}", h, mask, self.cfg.heads, drop
        )

    def cross_layer(self, index: int, h: Tensor, drop: ly.Drop = None) -> tuple[Tensor, Tensor]:
        mask = ly.full_mask(h.rows, h.rows)
        return ly.interactor_layer(
            self.store, f"csi.cross.{index}", h, mask, self.cfg.heads, drop
        )

    def xmodal_layer(
        self,
        index: int,
        h: Tensor,
        spans: list[Span],
        content_len: int,
        n_image_rows: int,
        drop: ly.Drop = None,
    ) -> tuple[Tensor, Tensor, Tensor]:
        """One chunk-to-region mixing layer.

        Returns (updated joint states, K x (N+1) attention over
        [global, regions], pre-residual per-token update). Every token of
        a chunk receives the same update row; marker and image rows pass
        through unchanged.
        """
        store = self.store
        m, n_img = content_len, n_image_rows
        prefix = f"csi.xmodal.{index}"
        z = ly.ln_p(store, f"{prefix}.ln1", h)
        z_text = nt.slice_rows(z, 1, 1 + m)
        z_img = nt.slice_rows(z, m + 2, m + 2 + n_img)
        pooled = nt.matmul(Tensor(pool_matrix(spans, m)), z_text)
        q = ly.linear_p(store, f"{prefix}.attn.q", pooled)
        k = ly.linear_p(store, f"{prefix}.attn.k", z_img)
        v = ly.linear_p(store, f"{prefix}.attn.v", z_img)
        mixed, weights = nt.attention(q, k, v, ly.full_mask(q.rows, n_img), heads=1)
        update = nt.matmul(Tensor(broadcast_matrix(spans, m)), mixed)
        if drop is not None:
            update = drop(update)
        h_text = nt.add(nt.slice_rows(h, 1, 1 + m), update)
        f = ly.ffn_p(store, f"{prefix}.ffn", ly.ln_p(store, f"{prefix}.ln2", h_text))
        if drop is not None:
            f = drop(f)
        h_text = nt.add(h_text, f)
        out = nt.vcat([
            nt.slice_rows(h, 0, 1),
            h_text,
            nt.slice_rows(h, 1 + m, h.rows),
        ])
        return out, weights, update

    def forward(
        self,
        joint: Tensor,
        spans: list[Span],
        content_len: int,
        n_image_rows: int,
        drop: ly.Drop = None,
    ) -> ChunkEncoderOutputs:
        groups = chunk_groups(content_len, spans, n_image_rows)
        h = joint
        for i in range(self.cfg.within_layers):
            h, _ = self.within_layer(i, h, groups, drop)
        for i in range(self.cfg.cross_layers):
            h, _ = self.cross_layer(i, h, drop)
        h_cross = h
        region_attention: list[Tensor] = []
        for i in range(self.cfg.xmodal_layers):
            h, weights, _ = self.xmodal_layer(i, h, spans, content_len, n_image_rows, drop)
            region_attention.append(weights)
        fused = ly.linear_p(self.store, "csi.fuse", nt.hcat([h_cross, h]))
        if self.cfg.within_layers + self.cfg.cross_layers + self.cfg.xmodal_layers > 0:
            fused = ly.ln_p(self.store, "csi.final_ln", fused)
        return ChunkEncoderOutputs(states=fused, region_attention=region_attention)


def alignment_scores(region_attention: list[Tensor]) -> Tensor:
    """Per-chunk region scores: attention weights summed across layers."""
    if not region_attention:
        raise ValueError("no cross-modal attention to score")
    total = region_attention[0]
    for w in region_attention[1:]:
        total = nt.add(total, w)
    return total


def alignment_loss(region_attention: list[Tensor], labels: list[int]) -> Tensor:
    """Mean cross-entropy of softmax(summed attention) against the target
    region per labeled chunk; label -1 marks an unlabeled chunk."""
    scores = alignment_scores(region_attention)
    labeled = [(k, z) for k, z in enumerate(labels) if z >= 0]
    if not labeled:
        raise EmptyLabelError("no labeled chunks for alignment")
    if len(labels) != scores.rows:
        raise ValueError(f"{len(labels)} labels for {scores.rows} chunks")
    total = None
    for k, z in labeled:
        term = nt.cross_entropy(nt.slice_rows(scores, k, k + 1), z)
        total = term if total is None else nt.add(total, term)
    return nt.scale(total, 1.0 / len(labeled))


def alignment_argmax(region_attention: list[Tensor]) -> np.ndarray:
    """Predicted region index per chunk from the summed attention."""
    return alignment_scores(region_attention).data.argmax(axis=1)
