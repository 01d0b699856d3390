"""Transformer decoder whose output distribution mixes vocabulary
probabilities with a copy-style distribution over constraint tokens.

The constraint set holds input tokens whose inference saliency exceeds
the median. At each step the decoder's cross-attention row is masked to
constraint positions, renormalized, and scattered onto the vocabulary;
a sigmoid gate blends that with the ordinary softmax distribution.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import layers as ly
from . import numerics as nt
from .config import ModelConfig
from .numerics import ParameterStore, ShapeError, Tensor
from .text import TokenSequence, VocabError


@dataclass(frozen=True)
class ConstraintState:
    """Vocab ids selected as lexical constraints, with source positions."""

    token_ids: tuple[int, ...]
    positions: dict[int, tuple[int, ...]] = field(default_factory=dict)
    saliency: np.ndarray | None = None
    median: float = 0.0

    @property
    def empty(self) -> bool:
        return not self.token_ids

    def __contains__(self, token_id: int) -> bool:
        return token_id in self.positions

    def position_mask(self, content_len: int) -> np.ndarray:
        """Boolean mask over the 2M stacked positions (both copies)."""
        mask = np.zeros(2 * content_len, dtype=bool)
        for pos_list in self.positions.values():
            for p in pos_list:
                mask[p] = True
                mask[content_len + p] = True
        return mask


def build_constraint_set(saliency: np.ndarray, seq: TokenSequence) -> ConstraintState:
    """Tokens whose saliency is strictly above the median score.

    Duplicate words collapse to one vocab id carrying all of their
    source positions. All-equal scores yield an empty set.
    """
    scores = np.asarray(saliency, dtype=np.float64)
    m = seq.content_len
    if scores.shape != (m,):
        raise ShapeError(f"saliency must have shape ({m},), got {scores.shape}")
    if m < 1:
        raise ValueError("need at least one content token")
    median = float(np.median(scores))
    positions: dict[int, list[int]] = {}
    for i, tok in enumerate(seq.content_ids):
        if scores[i] > median:
            positions.setdefault(tok, []).append(i)
    return ConstraintState(
        token_ids=tuple(sorted(positions)),
        positions={t: tuple(p) for t, p in positions.items()},
        saliency=scores,
        median=median,
    )


@dataclass
class DecoderStepOutput:
    hidden: Tensor        # 1 x d top-layer state
    cross_weights: Tensor  # 1 x 2M attention over the joint token matrix
    vocab_probs: Tensor   # 1 x V
    step_input: Tensor    # 1 x d decoder input embedding at this step


def scatter_matrix(content_ids: list[int], vocab_size: int) -> np.ndarray:
    """2M x V indicator mapping stacked positions to their vocab ids."""
    m = len(content_ids)
    z = np.zeros((2 * m, vocab_size))
    for i, tok in enumerate(content_ids):
        z[i, tok] = 1.0
        z[m + i, tok] = 1.0
    return z


def lexical_prob(
    cross_weights: Tensor,
    state: ConstraintState,
    content_ids: list[int],
    vocab_size: int,
) -> tuple[Tensor, Tensor]:
    """Constraint distribution over the vocabulary.

    Masks positions whose source token is outside the constraint set,
    renormalizes, and scatter-adds position mass onto vocab ids. With an
    empty set the result is the zero measure (and the caller must force
    the gate to 1).
    """
    m = len(content_ids)
    if cross_weights.shape != (1, 2 * m):
        raise ShapeError(f"cross weights must be (1, {2*m}), got {cross_weights.shape}")
    if state.empty:
        zero = Tensor(np.zeros((1, vocab_size)))
        return zero, Tensor(np.zeros((1, 2 * m)))
    mask = state.position_mask(m).reshape(1, -1)
    constrained = nt.masked_softmax(cross_weights, mask)
    p_lex = nt.matmul(constrained, Tensor(scatter_matrix(content_ids, vocab_size)))
    return p_lex, constrained


def mix(vocab_probs: Tensor, lex_probs: Tensor, p_con: Tensor) -> Tensor:
    """p_con * P_vocab + (1 - p_con) * P_lex."""
    one_minus = nt.add_scalar(nt.scale(p_con, -1.0), 1.0)
    return nt.add(nt.mul(p_con, vocab_probs), nt.mul(one_minus, lex_probs))


class ConstrainedGenerator:
    def __init__(self, cfg: ModelConfig, store: ParameterStore, rng):
        self.cfg = cfg
        self.store = store
        d, mult, bias = cfg.dim, cfg.ffn_mult, cfg.use_bias
        store.add("gen.pos", nt.xavier_uniform(rng, cfg.max_gen_positions, d))
        for i in range(cfg.decoder_layers):
            ly.add_layer_norm(store, f"gen.{i}.ln1", d)
            ly.add_attention(store, rng, f"gen.{i}.self", d, bias, out_proj=True)
            ly.add_layer_norm(store, f"gen.{i}.ln2", d)
            ly.add_attention(store, rng, f"gen.{i}.cross", d, bias, out_proj=True)
            ly.add_layer_norm(store, f"gen.{i}.ln3", d)
            ly.add_ffn(store, rng, f"gen.{i}.ffn", d, mult, bias)
        ly.add_layer_norm(store, "gen.final_ln", d)
        ly.add_linear(store, rng, "gen.out", d, cfg.vocab_size, bias)
        ly.add_linear(store, rng, "gen.gate", 3 * d, 1, bias)

    def states(
        self, ids: list[int], joint_tokens: Tensor, drop: ly.Drop = None
    ) -> tuple[Tensor, Tensor, Tensor]:
        """Run the decoder stack over a full input prefix.

        Returns (top states T x d, final-layer cross-attention T x 2M,
        input embeddings T x d). Self-attention is causal; cross
        attention sees the whole joint token matrix.
        """
        if max(ids) >= self.cfg.vocab_size:
            raise VocabError(f"token id {max(ids)} outside vocabulary")
        t = len(ids)
        if t > self.cfg.max_gen_positions:
            raise ShapeError(f"decoder input of {t} exceeds {self.cfg.max_gen_positions}")
        store, cfg = self.store, self.cfg
        x = nt.add(
            nt.take_rows(store["embed.token"], ids),
            nt.slice_rows(store["gen.pos"], 0, t),
        )
        h = x
        causal = ly.causal_mask(t)
        cross_full = ly.full_mask(t, joint_tokens.rows)
        cross_weights: Tensor | None = None
        for i in range(cfg.decoder_layers):
            z = ly.ln_p(store, f"gen.{i}.ln1", h)
            a, _ = ly.attention_p(store, f"gen.{i}.self", z, z, causal, cfg.heads)
            if drop is not None:
                a = drop(a)
            h = nt.add(h, a)
            z = ly.ln_p(store, f"gen.{i}.ln2", h)
            c, cross_weights = ly.attention_p(
                store, f"gen.{i}.cross", z, joint_tokens, cross_full, cfg.heads
            )
            if drop is not None:
                c = drop(c)
            h = nt.add(h, c)
            f = ly.ffn_p(store, f"gen.{i}.ffn", ly.ln_p(store, f"gen.{i}.ln3", h))
            if drop is not None:
                f = drop(f)
            h = nt.add(h, f)
        if cfg.decoder_layers > 0:
            h = ly.ln_p(store, "gen.final_ln", h)
        return h, cross_weights, x

    def vocab_probs(self, hidden: Tensor) -> Tensor:
        return nt.softmax(ly.linear_p(self.store, "gen.out", hidden))

    def gate(self, context: Tensor, hidden: Tensor, step_input: Tensor) -> Tensor:
        """Mixing weight from [context; state; input]; open interval (0,1)."""
        return nt.sigmoid(
            ly.linear_p(self.store, "gen.gate", nt.hcat([context, hidden, step_input]))
        )

    def step_distribution(
        self,
        hidden_t: Tensor,
        cross_t: Tensor,
        input_t: Tensor,
        joint_tokens: Tensor,
        state: ConstraintState,
        content_ids: list[int],
        use_mixture: bool = True,
    ) -> Tensor:
        """Final next-token distribution for one step."""
        p_vocab = self.vocab_probs(hidden_t)
        if not use_mixture or state.empty:
            return p_vocab
        p_lex, constrained = lexical_prob(cross_t, state, content_ids, self.cfg.vocab_size)
        context = nt.matmul(constrained, joint_tokens)
        p_con = self.gate(context, hidden_t, input_t)
        return mix(p_vocab, p_lex, p_con)

    def decoder_step(self, prefix_ids: list[int], joint_tokens: Tensor) -> DecoderStepOutput:
        """Single-step view: run the prefix, return last-position outputs."""
        if not prefix_ids:
            raise ValueError("prefix must be nonempty (starts with [BOS])")
        h, cw, x = self.states(prefix_ids, joint_tokens)
        t = len(prefix_ids) - 1
        hidden = nt.slice_rows(h, t, t + 1)
        return DecoderStepOutput(
            hidden=hidden,
            cross_weights=nt.slice_rows(cw, t, t + 1),
            vocab_probs=self.vocab_probs(hidden),
            step_input=nt.slice_rows(x, t, t + 1),
        )

    def generation_loss(
        self,
        full_ids: list[int],
        n_prefix: int,
        joint_tokens: Tensor,
        state: ConstraintState,
        content_ids: list[int],
        use_mixture: bool = True,
        drop: ly.Drop = None,
    ) -> Tensor:
        """Teacher-forced negative log-likelihood, summed over the
        explanation positions only.

        `full_ids` is [BOS, prefix..., explanation..., EOS]; `n_prefix`
        counts the prefix tokens (excluding BOS). Prefix positions are
        not supervised.
        """
        if len(full_ids) < n_prefix + 2:
            raise ValueError("need a nonempty explanation after the prefix")
        inputs = full_ids[:-1]
        h, cw, x = self.states(inputs, joint_tokens, drop)
        total = None
        for t in range(n_prefix, len(inputs)):
            target = full_ids[t + 1]
            dist = self.step_distribution(
                nt.slice_rows(h, t, t + 1),
                nt.slice_rows(cw, t, t + 1),
                nt.slice_rows(x, t, t + 1),
                joint_tokens,
                state,
                content_ids,
                use_mixture,
            )
            term = nt.scale(nt.log(nt.entry(dist, 0, target)), -1.0)
            total = term if total is None else nt.add(total, term)
        return total
