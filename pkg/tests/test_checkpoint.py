"""Checkpoint container: bit-exact round trips, staging metadata."""
import numpy as np
import pytest

from velex.checkpoint import (
    CheckpointError,
    build_model,
    load_checkpoint,
    save_checkpoint,
)
from velex.model import Model
from velex.numerics import AdamState, no_grad

from conftest import small_config


def forward_fingerprint(model, vocab, sample_inputs):
    seq, spans, regions = sample_inputs
    with no_grad():
        enc = model.encode(seq, spans, regions)
        inf = model.infer(enc)
    return inf.logits.data.copy(), enc.chunk_states.data.copy()


def test_round_trip_bit_identical_forward(tmp_path, vocab, sample_inputs):
    model = Model(small_config(vocab))
    logits_before, states_before = forward_fingerprint(model, vocab, sample_inputs)
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, "stage1", model)
    restored = build_model(load_checkpoint(path))
    logits_after, states_after = forward_fingerprint(restored, vocab, sample_inputs)
    assert logits_before.tobytes() == logits_after.tobytes()
    assert states_before.tobytes() == states_after.tobytes()


def test_round_trip_preserves_every_array_exactly(tmp_path, vocab):
    model = Model(small_config(vocab))
    rng = np.random.default_rng(0)
    for name in model.store.names():
        model.store[name].data += rng.normal(size=model.store[name].data.shape) * 1e-7
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, "pretrain", model)
    ck = load_checkpoint(path)
    assert set(ck.params) == set(model.store.names())
    for name in model.store.names():
        assert ck.params[name].tobytes() == model.store[name].data.tobytes()


def test_resave_is_byte_identical(tmp_path, vocab):
    model = Model(small_config(vocab))
    p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_checkpoint(p1, "stage2", model)
    restored = build_model(load_checkpoint(p1))
    save_checkpoint(p2, "stage2", restored)
    assert p1.read_bytes() == p2.read_bytes()


def test_optimizer_state_round_trip(tmp_path, vocab):
    model = Model(small_config(vocab))
    opt = AdamState(lr=3e-4, group_lrs={"csi.": 3e-5}, decay_steps=100, step=7)
    rng = np.random.default_rng(1)
    for name in list(model.store.names())[:5]:
        shape = model.store[name].data.shape
        opt.m[name] = rng.normal(size=shape)
        opt.v[name] = rng.random(shape)
    path = tmp_path / "opt.ckpt"
    save_checkpoint(path, "stage1", model, optimizer=opt)
    ck = load_checkpoint(path)
    assert ck.optimizer.step == 7
    assert ck.optimizer.group_lrs == {"csi.": 3e-5}
    assert ck.optimizer.decay_steps == 100
    for name in opt.m:
        assert ck.optimizer.m[name].tobytes() == opt.m[name].tobytes()
        assert ck.optimizer.v[name].tobytes() == opt.v[name].tobytes()


def test_frozen_names_round_trip(tmp_path, vocab):
    model = Model(small_config(vocab))
    model.store.freeze_except(("gen.",))
    path = tmp_path / "frozen.ckpt"
    save_checkpoint(path, "stage2", model)
    restored = build_model(load_checkpoint(path))
    assert restored.store.frozen == model.store.frozen


def test_stage_tag_validated(tmp_path, vocab):
    model = Model(small_config(vocab))
    with pytest.raises(CheckpointError):
        save_checkpoint(tmp_path / "x.ckpt", "stage9", model)


def test_refuses_overwrite(tmp_path, vocab):
    model = Model(small_config(vocab))
    path = tmp_path / "x.ckpt"
    save_checkpoint(path, "pretrain", model)
    with pytest.raises(FileExistsError):
        save_checkpoint(path, "pretrain", model)
    save_checkpoint(path, "pretrain", model, force=True)


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "junk.ckpt"
    path.write_bytes(b"NOTACKPT" + b"\x00" * 64)
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_config_snapshot_restored(tmp_path, vocab):
    cfg = small_config(vocab, dim=24, inferrer_layers=3)
    model = Model(cfg)
    path = tmp_path / "cfg.ckpt"
    save_checkpoint(path, "stage1", model)
    ck = load_checkpoint(path)
    assert ck.config == cfg
