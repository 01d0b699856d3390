"""Full model assembly: embedder, both encoders, inferrer, generator."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nt
from .chunk_encoder import ChunkAwareEncoder, ChunkEncoderOutputs, alignment_loss
from .chunking import Span
from .config import ModelConfig
from .decoding import StepFn
from .encoder import TextImageEmbedder, TokenLevelEncoder
from .generator import ConstrainedGenerator, ConstraintState, build_constraint_set
from .inferrer import InferenceOutputs, RelationInferrer, token_saliency
from .numerics import ParameterStore, Tensor
from .text import TokenSequence


@dataclass
class EncodeOutputs:
    token_states: Tensor        # token-level encoder, full joint sequence
    chunk_states: Tensor        # chunk-aware encoder, full joint sequence
    region_attention: list[Tensor]
    content_len: int
    n_regions: int              # excludes the global feature


GENERATOR_PREFIXES = ("gen.",)


class Model:
    """Holds the parameter store and wires the forward passes together."""

    def __init__(self, cfg: ModelConfig, store: ParameterStore | None = None):
        self.cfg = cfg
        self.store = store if store is not None else ParameterStore()
        rng = np.random.default_rng(cfg.init_seed)
        self.embedder = TextImageEmbedder(cfg, self.store, rng)
        self.backbone = TokenLevelEncoder(cfg, self.store, rng)
        self.chunk_encoder = ChunkAwareEncoder(cfg, self.store, rng)
        self.inferrer = RelationInferrer(cfg, self.store, rng)
        self.generator = ConstrainedGenerator(cfg, self.store, rng)
        self.training = False
        self._drop_rng = np.random.default_rng(cfg.init_seed + 1)

    def _drop(self):
        if self.training and self.cfg.dropout > 0.0:
            p, rng = self.cfg.dropout, self._drop_rng
            return lambda x: nt.dropout(x, p, rng)
        return None

    # ---- encoding ----

    def encode(self, seq: TokenSequence, spans: list[Span], regions: np.ndarray) -> EncodeOutputs:
        """Run both encoder stacks over the shared embedded joint sequence."""
        drop = self._drop()
        joint = self.embedder.joint(seq, regions)
        m = seq.content_len
        n_image_rows = regions.shape[0]
        token_states = self.backbone(joint, drop)
        chunk_out: ChunkEncoderOutputs = self.chunk_encoder.forward(
            joint, spans, m, n_image_rows, drop
        )
        return EncodeOutputs(
            token_states=token_states,
            chunk_states=chunk_out.states,
            region_attention=chunk_out.region_attention,
            content_len=m,
            n_regions=n_image_rows - 1,
        )

    # ---- relation inference ----

    def infer(self, enc: EncodeOutputs) -> InferenceOutputs:
        return self.inferrer(enc.token_states, enc.chunk_states, enc.content_len)

    def saliency(self, inf: InferenceOutputs, content_len: int) -> np.ndarray:
        return token_saliency(inf.refinement_weights, content_len)

    def constraints(self, inf: InferenceOutputs, seq: TokenSequence) -> ConstraintState:
        return build_constraint_set(self.saliency(inf, seq.content_len), seq)

    # ---- losses ----

    def alignment_loss(
        self, seq: TokenSequence, spans: list[Span], regions: np.ndarray, labels: list[int]
    ) -> Tensor:
        drop = self._drop()
        joint = self.embedder.joint(seq, regions)
        out = self.chunk_encoder.forward(joint, spans, seq.content_len, regions.shape[0], drop)
        return alignment_loss(out.region_attention, labels)

    def stage1_loss(
        self, seq: TokenSequence, spans: list[Span], regions: np.ndarray, gold: int
    ) -> Tensor:
        enc = self.encode(seq, spans, regions)
        inf = self.infer(enc)
        return nt.cross_entropy(inf.logits, gold)

    def generation_loss(
        self,
        full_ids: list[int],
        n_prefix: int,
        joint_tokens: Tensor,
        state: ConstraintState,
        content_ids: list[int],
        use_mixture: bool = True,
    ) -> Tensor:
        return self.generator.generation_loss(
            full_ids, n_prefix, joint_tokens, state, content_ids, use_mixture, self._drop()
        )

    # ---- decoding ----

    def step_fn(
        self,
        joint_tokens: np.ndarray,
        state: ConstraintState,
        content_ids: list[int],
        use_mixture: bool = True,
    ) -> StepFn:
        """Next-token distribution closure for the beam engines."""
        o_w = Tensor(np.asarray(joint_tokens, dtype=np.float64))

        def step(prefix_ids: list[int]) -> np.ndarray:
            with nt.no_grad():
                out = self.generator.decoder_step(prefix_ids, o_w)
                dist = self.generator.step_distribution(
                    out.hidden,
                    out.cross_weights,
                    out.step_input,
                    o_w,
                    state,
                    content_ids,
                    use_mixture,
                )
            return dist.data[0].copy()

        return step
