"""Synthetic corpus: planted structure, determinism, persistence."""
import json

import numpy as np
import pytest

from velex.chunking import validate_spans
from velex.config import DataConfig
from velex.data import (
    DataError,
    DatasetRecord,
    check_split_disjointness,
    concept_signatures,
    generate_dataset,
    generate_records,
    load_dataset,
    make_vocabulary,
    partner_map,
    relation_label,
)

SMALL = dict(pretrain_size=30, train_size=30, val_size=12, test_size=12)


def test_single_record_generation_well_formed():
    cfg = DataConfig(pretrain_size=1, train_size=1, val_size=1, test_size=1, seed=0)
    splits = generate_records(cfg)
    vocab = make_vocabulary()
    for split, records in splits.items():
        rec = records[0]
        assert validate_spans(rec.spans, len(rec.words)).ok
        assert rec.regions.shape == (len(rec.region_concepts) + 1, cfg.region_feat_dim)
        assert len(rec.align) == len(rec.spans)
        assert rec.explanation
        assert all(w in vocab.tags for w in rec.words + rec.explanation)


def test_same_seed_byte_identical_files(tmp_path):
    cfg = DataConfig(seed=5, **SMALL)
    generate_dataset(cfg, tmp_path / "a")
    generate_dataset(cfg, tmp_path / "b")
    for name in ("vocab.json", "meta.json", "pretrain.jsonl", "train.jsonl",
                 "val.jsonl", "test.jsonl"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_different_seed_differs(tmp_path):
    generate_dataset(DataConfig(seed=1, **SMALL), tmp_path / "a")
    generate_dataset(DataConfig(seed=2, **SMALL), tmp_path / "b")
    assert (tmp_path / "a" / "train.jsonl").read_bytes() != (
        tmp_path / "b" / "train.jsonl"
    ).read_bytes()


def test_label_function_audited_by_bruteforce_rederivation():
    cfg = DataConfig(seed=9, **SMALL)
    splits = generate_records(cfg)
    vocab = make_vocabulary()
    count = 0
    for records in splits.values():
        for rec in records:
            sentence_nouns = [w for w in rec.words if vocab.tags[w] == "NOUN"]
            assert relation_label(sentence_nouns, rec.region_concepts) == rec.label
            count += 1
    assert count == sum(len(r) for r in splits.values())


def test_alignment_labels_point_at_matching_region():
    cfg = DataConfig(seed=4, **SMALL)
    splits = generate_records(cfg)
    vocab = make_vocabulary()
    checked = 0
    for records in splits.values():
        for rec in records:
            for k, (s, e) in enumerate(rec.spans):
                z = rec.align[k]
                if z > 0:
                    noun = [w for w in rec.words[s:e] if vocab.tags[w] == "NOUN"]
                    assert noun and rec.region_concepts[z - 1] == noun[0]
                    checked += 1
    assert checked > 0


def test_pretrain_split_fully_matched():
    cfg = DataConfig(seed=2, **SMALL)
    splits = generate_records(cfg)
    for rec in splits["pretrain"]:
        assert rec.label == 0
        assert any(z >= 0 for z in rec.align)


def test_region_features_carry_planted_signatures():
    cfg = DataConfig(seed=8, feature_noise=0.05, **SMALL)
    splits = generate_records(cfg)
    sigs = concept_signatures(cfg.region_feat_dim, cfg.seed + 7919)
    rec = splits["train"][0]
    for row, concept in zip(rec.regions[1:], rec.region_concepts):
        corr = row @ sigs[concept]
        assert corr > 0.5  # matched signature dominates the noise
    np.testing.assert_allclose(
        rec.regions[0], rec.regions[1:].sum(axis=0), atol=1e-12
    )


def test_partner_signatures_are_negated():
    sigs = concept_signatures(12, 123)
    partners = partner_map()
    for a, b in partners.items():
        np.testing.assert_allclose(sigs[a], -sigs[b], atol=1e-15)


def test_split_image_ids_disjoint():
    cfg = DataConfig(seed=3, **SMALL)
    splits = generate_records(cfg)
    check_split_disjointness(splits)
    splits["val"][0].image_id = splits["train"][0].image_id
    with pytest.raises(DataError):
        check_split_disjointness(splits)


def test_round_trip_preserves_records(tmp_path):
    cfg = DataConfig(seed=6, **SMALL)
    bundle = generate_dataset(cfg, tmp_path / "d")
    loaded = load_dataset(tmp_path / "d")
    for split in bundle.splits:
        for a, b in zip(bundle.splits[split], loaded.splits[split]):
            assert a.words == b.words
            assert a.spans == b.spans
            assert a.align == b.align
            assert a.label == b.label
            assert a.explanation == b.explanation
            np.testing.assert_array_equal(a.regions, b.regions)  # exact floats


def test_refuses_overwrite_without_force(tmp_path):
    cfg = DataConfig(seed=6, **SMALL)
    generate_dataset(cfg, tmp_path / "d")
    with pytest.raises(FileExistsError):
        generate_dataset(cfg, tmp_path / "d")
    generate_dataset(cfg, tmp_path / "d", force=True)


def test_loader_rejects_leaky_splits(tmp_path):
    cfg = DataConfig(seed=6, **SMALL)
    generate_dataset(cfg, tmp_path / "d")
    train_path = tmp_path / "d" / "train.jsonl"
    lines = train_path.read_text().strip().splitlines()
    blob = json.loads(lines[0])
    val_first = json.loads((tmp_path / "d" / "val.jsonl").read_text().splitlines()[0])
    blob["image_id"] = val_first["image_id"]
    lines[0] = json.dumps(blob)
    train_path.write_text("\n".join(lines) + "\n")
    with pytest.raises(DataError):
        load_dataset(tmp_path / "d")


def test_max_regions_bounded_by_concept_pairs():
    cfg = DataConfig(min_regions=6, max_regions=6, **SMALL)
    with pytest.raises(DataError):
        generate_records(cfg)


def test_explanations_reuse_hypothesis_chunk_words():
    cfg = DataConfig(seed=12, **SMALL)
    splits = generate_records(cfg)
    vocab = make_vocabulary()
    for rec in splits["test"]:
        nouns = [w for w in rec.words if vocab.tags[w] == "NOUN"]
        assert any(n in rec.explanation for n in nouns)
