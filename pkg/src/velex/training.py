"""Alignment pre-training, relation-inference training, generator training.

All three stages share the same skeleton: shuffled mini-batches, one
Adam step per batch on the mean loss, a validation metric after every
epoch, and early stopping once the metric stops improving for
`patience` evaluations. The best-scoring parameters are restored at
the end of each stage.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import numerics as nt
from .chunk_encoder import alignment_argmax
from .chunking import rule_chunk
from .config import TrainConfig
from .data import RELATION_NAMES, DataError, DatasetRecord
from .generator import ConstraintState
from .model import GENERATOR_PREFIXES, Model
from .numerics import AdamState, adam_step
from .text import TokenSequence, Vocabulary


class StagingError(RuntimeError):
    pass


@dataclass
class TrainResult:
    history: list[dict]
    best_metric: float
    epochs_run: int


def record_inputs(record: DatasetRecord, vocab: Vocabulary):
    """(sequence, spans, regions) for a record; stored spans win over
    the rule chunker when present."""
    seq = TokenSequence.from_words(record.words, vocab)
    spans = record.spans if record.spans is not None else rule_chunk(record.words, vocab.tags)
    return seq, spans, record.regions


def generation_ids(record: DatasetRecord, vocab: Vocabulary, answer: int):
    """Decoder token layout: [BOS, text..., answer, explanation..., EOS].

    Returns (full_ids, n_prefix); the prefix (text plus answer word) is
    never supervised.
    """
    prefix_words = record.words + [RELATION_NAMES[answer]]
    full = (
        [vocab.bos_id]
        + vocab.encode(prefix_words)
        + vocab.encode(record.explanation)
        + [vocab.eos_id]
    )
    return full, len(prefix_words)


class _EarlyStop:
    def __init__(self, patience: int, maximize: bool):
        self.patience = patience
        self.maximize = maximize
        self.best: float | None = None
        self.stale = 0

    def update(self, metric: float) -> bool:
        """Record a new metric; True when this is a fresh best."""
        better = (
            self.best is None
            or (self.maximize and metric > self.best)
            or (not self.maximize and metric < self.best)
        )
        if better:
            self.best = metric
            self.stale = 0
            return True
        self.stale += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.stale >= self.patience


def _write_history(path: str | Path | None, history: list[dict]):
    if path is None or not history:
        return
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(history[0]))
        writer.writeheader()
        writer.writerows(history)


def _run_epochs(
    model: Model,
    items: list,
    loss_fn,
    metric_fn,
    cfg: TrainConfig,
    optimizer: AdamState,
    maximize_metric: bool,
    csv_path: str | Path | None = None,
) -> TrainResult:
    rng = np.random.default_rng(cfg.seed)
    stopper = _EarlyStop(cfg.patience, maximize_metric)
    steps_per_epoch = max(1, math.ceil(len(items) / cfg.batch_size))
    if cfg.decay and optimizer.decay_steps is None:
        optimizer.decay_steps = max(1, cfg.max_epochs * steps_per_epoch)
    trainable = model.store.trainable_names()
    best_params = {n: model.store[n].data.copy() for n in trainable}
    history: list[dict] = []
    epochs_run = 0
    model.training = True
    try:
        for epoch in range(cfg.max_epochs):
            order = rng.permutation(len(items))
            epoch_loss = 0.0
            for start in range(0, len(items), cfg.batch_size):
                batch = [items[i] for i in order[start:start + cfg.batch_size]]
                model.store.zero_grad()
                total = None
                for item in batch:
                    term = loss_fn(item)
                    total = term if total is None else nt.add(total, term)
                loss = nt.scale(total, 1.0 / len(batch))
                loss.backward()
                adam_step(model.store, model.store.grads(), optimizer)
                epoch_loss += loss.item() * len(batch)
            epochs_run = epoch + 1
            model.training = False
            metric = metric_fn()
            model.training = True
            improved = stopper.update(metric)
            if improved:
                best_params = {n: model.store[n].data.copy() for n in trainable}
            history.append(
                {
                    "epoch": epoch,
                    "train_loss": epoch_loss / len(items),
                    "val_metric": metric,
                    "improved": int(improved),
                }
            )
            if stopper.should_stop:
                break
    finally:
        model.training = False
    for n, arr in best_params.items():
        model.store[n].data = arr
    _write_history(csv_path, history)
    best = stopper.best if stopper.best is not None else metric_fn()
    return TrainResult(history=history, best_metric=best, epochs_run=epochs_run)


# ---- alignment pre-training ----


def alignment_accuracy(model: Model, records: list[DatasetRecord], vocab: Vocabulary) -> float:
    """Argmax chunk-to-region accuracy over labeled chunks."""
    hits = 0
    total = 0
    with nt.no_grad():
        for rec in records:
            if rec.align is None or all(z < 0 for z in rec.align):
                continue
            seq, spans, regions = record_inputs(rec, vocab)
            enc = model.encode(seq, spans, regions)
            pred = alignment_argmax(enc.region_attention)
            for k, z in enumerate(rec.align):
                if z >= 0:
                    total += 1
                    hits += int(pred[k] == z)
    if total == 0:
        raise DataError("no labeled chunks to score alignment on")
    return hits / total


def pretrain_alignment(
    model: Model,
    train_records: list[DatasetRecord],
    val_records: list[DatasetRecord],
    vocab: Vocabulary,
    cfg: TrainConfig,
    csv_path: str | Path | None = None,
) -> TrainResult:
    labeled = [
        r for r in train_records if r.align is not None and any(z >= 0 for z in r.align)
    ]
    if not labeled:
        raise DataError("pre-training needs records with alignment labels")
    optimizer = AdamState(lr=cfg.lr)

    def loss_fn(rec: DatasetRecord):
        seq, spans, regions = record_inputs(rec, vocab)
        return model.alignment_loss(seq, spans, regions, rec.align)

    return _run_epochs(
        model,
        labeled,
        loss_fn,
        lambda: alignment_accuracy(model, val_records, vocab),
        cfg,
        optimizer,
        maximize_metric=True,
        csv_path=csv_path,
    )


# ---- relation inference training ----


def relation_accuracy(model: Model, records: list[DatasetRecord], vocab: Vocabulary) -> float:
    hits = 0
    with nt.no_grad():
        for rec in records:
            seq, spans, regions = record_inputs(rec, vocab)
            inf = model.infer(model.encode(seq, spans, regions))
            hits += int(inf.predicted == rec.label)
    return hits / len(records)


def train_inference(
    model: Model,
    train_records: list[DatasetRecord],
    val_records: list[DatasetRecord],
    vocab: Vocabulary,
    cfg: TrainConfig,
    csv_path: str | Path | None = None,
) -> TrainResult:
    """Stage 1: relation cross-entropy over both encoders and the
    inferrer; the chunk-encoder group runs at its own (lower) rate."""
    group_lrs = {"csi.": cfg.csi_lr} if cfg.csi_lr is not None else {}
    optimizer = AdamState(lr=cfg.lr, group_lrs=group_lrs)

    def loss_fn(rec: DatasetRecord):
        seq, spans, regions = record_inputs(rec, vocab)
        return model.stage1_loss(seq, spans, regions, rec.label)

    return _run_epochs(
        model,
        train_records,
        loss_fn,
        lambda: relation_accuracy(model, val_records, vocab),
        cfg,
        optimizer,
        maximize_metric=True,
        csv_path=csv_path,
    )


# ---- generator training ----


@dataclass
class _GenItem:
    full_ids: list[int]
    n_prefix: int
    joint_tokens: np.ndarray
    state: ConstraintState
    content_ids: list[int]


def _prepare_generation_items(
    model: Model, records: list[DatasetRecord], vocab: Vocabulary
) -> list[_GenItem]:
    """Encoder outputs are frozen in stage 2, so compute them once."""
    items = []
    with nt.no_grad():
        for rec in records:
            seq, spans, regions = record_inputs(rec, vocab)
            enc = model.encode(seq, spans, regions)
            inf = model.infer(enc)
            state = model.constraints(inf, seq)
            full_ids, n_prefix = generation_ids(rec, vocab, rec.label)
            items.append(
                _GenItem(
                    full_ids=full_ids,
                    n_prefix=n_prefix,
                    joint_tokens=inf.joint_tokens.data.copy(),
                    state=state,
                    content_ids=seq.content_ids,
                )
            )
    return items


def generation_nll(model: Model, items: list[_GenItem]) -> float:
    """Mean per-token teacher-forced negative log-likelihood."""
    total = 0.0
    count = 0
    with nt.no_grad():
        for item in items:
            loss = model.generation_loss(
                item.full_ids,
                item.n_prefix,
                nt.Tensor(item.joint_tokens),
                item.state,
                item.content_ids,
            )
            total += loss.item()
            count += len(item.full_ids) - 1 - item.n_prefix
    return total / count


def train_generator(
    model: Model,
    train_records: list[DatasetRecord],
    val_records: list[DatasetRecord],
    vocab: Vocabulary,
    cfg: TrainConfig,
    csv_path: str | Path | None = None,
) -> TrainResult:
    """Stage 2: freeze everything but the generator and minimize the
    explanation NLL. Frozen parameters are verified bit-identical."""
    model.store.freeze_except(GENERATOR_PREFIXES)
    frozen_before = {n: model.store[n].data.copy() for n in model.store.frozen}
    train_items = _prepare_generation_items(model, train_records, vocab)
    val_items = _prepare_generation_items(model, val_records, vocab)
    optimizer = AdamState(lr=cfg.lr)

    def loss_fn(item: _GenItem):
        n_tokens = len(item.full_ids) - 1 - item.n_prefix
        loss = model.generation_loss(
            item.full_ids,
            item.n_prefix,
            nt.Tensor(item.joint_tokens),
            item.state,
            item.content_ids,
        )
        return nt.scale(loss, 1.0 / n_tokens)

    result = _run_epochs(
        model,
        train_items,
        loss_fn,
        lambda: generation_nll(model, val_items),
        cfg,
        optimizer,
        maximize_metric=False,
        csv_path=csv_path,
    )
    for name, before in frozen_before.items():
        if not np.array_equal(model.store[name].data, before):
            raise StagingError(f"frozen parameter {name!r} changed during stage 2")
    return result
