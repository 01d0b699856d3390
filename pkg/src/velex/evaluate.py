"""End-to-end evaluation: relation accuracy, explanation BLEU, and the
overall score (their exact product).

The explanation score only averages over correctly answered records; a
record whose decode raises is kept as a failed (incorrect) row so one
bad sample cannot kill a run.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import numerics as nt
from .bleu import bleu4
from .config import DecodeConfig
from .data import RELATION_NAMES, DatasetRecord
from .decoding import beam_sample, constrained_beam_sample
from .model import Model
from .text import Vocabulary
from .training import generation_ids, record_inputs


@dataclass
class RunOutcome:
    predicted: int
    decoded_words: list[str]
    constraint_words: list[str] = field(default_factory=list)
    constraint_hits: int = 0
    extras: dict = field(default_factory=dict)


@dataclass
class EvalRow:
    id: int
    gold: int
    predicted: int
    correct: bool
    bleu: float
    decoded: list[str]
    constraint_words: list[str]
    constraint_hits: int
    failed: bool = False
    error: str = ""
    extras: dict = field(default_factory=dict)


@dataclass
class EvalReport:
    s_t: float
    s_e: float
    s_o: float
    rows: list[EvalRow]

    @property
    def mean_constraint_hits(self) -> float:
        scored = [r for r in self.rows if not r.failed]
        if not scored:
            return 0.0
        return sum(r.constraint_hits for r in scored) / len(scored)


RunOne = Callable[[DatasetRecord], RunOutcome]


def evaluate_records(records: list[DatasetRecord], run_one: RunOne) -> EvalReport:
    rows: list[EvalRow] = []
    for rec in records:
        try:
            out = run_one(rec)
        except Exception as exc:  # failed rows count as incorrect
            rows.append(
                EvalRow(
                    id=rec.id,
                    gold=rec.label,
                    predicted=-1,
                    correct=False,
                    bleu=0.0,
                    decoded=[],
                    constraint_words=[],
                    constraint_hits=0,
                    failed=True,
                    error=f"{type(exc).__name__}: {exc}",
                )
            )
            continue
        correct = out.predicted == rec.label
        score = bleu4(out.decoded_words, [rec.explanation])
        rows.append(
            EvalRow(
                id=rec.id,
                gold=rec.label,
                predicted=out.predicted,
                correct=correct,
                bleu=score,
                decoded=out.decoded_words,
                constraint_words=out.constraint_words,
                constraint_hits=out.constraint_hits,
                extras=out.extras,
            )
        )
    s_t = sum(r.correct for r in rows) / len(rows) if rows else 0.0
    correct_rows = [r for r in rows if r.correct]
    s_e = sum(r.bleu for r in correct_rows) / len(correct_rows) if correct_rows else 0.0
    return EvalReport(s_t=s_t, s_e=s_e, s_o=s_t * s_e, rows=rows)


def model_runner(
    model: Model,
    vocab: Vocabulary,
    decode_cfg: DecodeConfig,
    use_mixture: bool = True,
    constrained: bool = True,
) -> RunOne:
    """Full pipeline closure: infer the relation, build the constraint
    set, decode with the predicted answer as prefix."""

    def run_one(rec: DatasetRecord) -> RunOutcome:
        seq, spans, regions = record_inputs(rec, vocab)
        with nt.no_grad():
            enc = model.encode(seq, spans, regions)
            inf = model.infer(enc)
            state = model.constraints(inf, seq)
            joint_tokens = inf.joint_tokens.data.copy()
        step_fn = model.step_fn(joint_tokens, state, seq.content_ids, use_mixture)
        init_ids, _ = generation_ids(rec, vocab, inf.predicted)
        prefix_end = 1 + len(rec.words) + 1  # BOS + text + answer word
        init = init_ids[:prefix_end]
        rng = np.random.default_rng([decode_cfg.seed, rec.id])
        if constrained:
            generated, _ = constrained_beam_sample(
                step_fn, init, vocab.eos_id, set(state.token_ids), decode_cfg, rng
            )
        else:
            generated, _ = beam_sample(step_fn, init, vocab.eos_id, decode_cfg, rng)
        if generated and generated[-1] == vocab.eos_id:
            generated = generated[:-1]
        decoded_words = vocab.decode(generated)
        hits = sum(1 for t in generated if t in state)
        attention = [w.data.tolist() for w in enc.region_attention]
        return RunOutcome(
            predicted=inf.predicted,
            decoded_words=decoded_words,
            constraint_words=vocab.decode(list(state.token_ids)),
            constraint_hits=hits,
            extras={
                "region_attention": attention,
                "saliency": model.saliency(inf, seq.content_len).tolist(),
            },
        )

    return run_one


def evaluate(
    model: Model,
    records: list[DatasetRecord],
    vocab: Vocabulary,
    decode_cfg: DecodeConfig,
    use_mixture: bool = True,
    constrained: bool = True,
) -> EvalReport:
    return evaluate_records(
        records, model_runner(model, vocab, decode_cfg, use_mixture, constrained)
    )


def write_report(
    report: EvalReport, csv_path: str | Path, jsonl_path: str | Path, force: bool = False
):
    """Summary + per-sample CSV, and a JSON-lines file carrying the
    attention matrices and constraint sets for case inspection."""
    for p in (Path(csv_path), Path(jsonl_path)):
        if p.exists() and not force:
            raise FileExistsError(f"refusing to overwrite {p} (use --force)")
        p.parent.mkdir(parents=True, exist_ok=True)
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "value"])
        writer.writerow(["S_T", report.s_t])
        writer.writerow(["S_E", report.s_e])
        writer.writerow(["S_O", report.s_o])
        writer.writerow([])
        writer.writerow(
            ["id", "gold", "predicted", "correct", "bleu", "constraint_hits", "failed", "decoded"]
        )
        for r in report.rows:
            writer.writerow(
                [r.id, r.gold, r.predicted, int(r.correct), f"{r.bleu:.6f}",
                 r.constraint_hits, int(r.failed), " ".join(r.decoded)]
            )
    with open(jsonl_path, "w", encoding="utf-8") as fh:
        for r in report.rows:
            fh.write(json.dumps(asdict(r)) + "\n")


def explain_record(
    model: Model,
    rec: DatasetRecord,
    vocab: Vocabulary,
    decode_cfg: DecodeConfig,
) -> dict:
    """Human-readable account of one record's inference and decode."""
    seq, spans, regions = record_inputs(rec, vocab)
    outcome = model_runner(model, vocab, decode_cfg)(rec)
    summed = np.sum(outcome.extras["region_attention"], axis=0)
    chunks = [" ".join(rec.words[s:e]) for s, e in spans]
    return {
        "id": rec.id,
        "text": " ".join(rec.words),
        "chunks": chunks,
        "gold_relation": RELATION_NAMES[rec.label],
        "predicted_relation": RELATION_NAMES[outcome.predicted],
        "chunk_region_argmax": {
            chunk: int(np.argmax(summed[k])) for k, chunk in enumerate(chunks)
        },
        "region_concepts": rec.region_concepts,
        "constraint_words": outcome.constraint_words,
        "decoded_explanation": " ".join(outcome.decoded_words),
        "gold_explanation": " ".join(rec.explanation),
    }
