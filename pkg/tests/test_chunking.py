"""Rule chunker and span validation."""
import numpy as np
import pytest

from velex.chunking import (
    ChunkTaggingError,
    rule_chunk,
    spans_from_field,
    spans_to_field,
    validate_spans,
)
from velex.data import make_vocabulary

LEX = {
    "a": "DET", "the": "DET", "young": "ADJ", "red": "ADJ",
    "road": "NOUN", "sign": "NOUN", "man": "NOUN", "trick": "NOUN",
    "dogs": "NOUN", "is": "AUX", "doing": "VERB", "run": "VERB",
    "near": "OTHER",
}


def test_single_noun_chunk():
    assert rule_chunk(["a", "road", "sign"], LEX) == [(0, 3)]


def test_singletons():
    assert rule_chunk(["dogs", "run"], LEX) == [(0, 1), (1, 2)]


def test_greedy_rules_by_hand():
    words = ["the", "young", "man", "is", "doing", "a", "trick"]
    assert rule_chunk(words, LEX) == [(0, 3), (3, 5), (5, 7)]


def test_dangling_determiner_is_singleton():
    assert rule_chunk(["the", "is", "doing"], LEX) == [(0, 1), (1, 3)]


def test_unknown_word_named_in_error():
    with pytest.raises(ChunkTaggingError, match="zebra"):
        rule_chunk(["a", "zebra"], LEX)


def test_validate_ok():
    assert validate_spans([(0, 2), (2, 3)], 3).ok


def test_validate_overlap():
    report = validate_spans([(0, 2), (1, 3)], 3)
    assert not report.ok
    assert report.span_index == 1
    assert "overlap" in report.message


def test_validate_coverage_gap():
    report = validate_spans([(0, 2)], 3)
    assert not report.ok
    assert "token 2" in report.message


def test_validate_empty_span():
    report = validate_spans([(1, 1)], 1)
    assert not report.ok and report.span_index == 0


def test_rule_chunk_output_always_valid_and_covering():
    # property: on random sentences over the shipped lexicon, chunker
    # output tiles the sentence and concatenation reproduces the words
    vocab = make_vocabulary()
    words_pool = [w for w in vocab.tags]
    rng = np.random.default_rng(42)
    for _ in range(300):
        n = int(rng.integers(1, 10))
        words = [words_pool[i] for i in rng.integers(0, len(words_pool), n)]
        spans = rule_chunk(words, vocab.tags)
        assert validate_spans(spans, len(words)).ok
        rebuilt = [w for s, e in spans for w in words[s:e]]
        assert rebuilt == words


def test_span_field_round_trip():
    spans = [(0, 3), (3, 5), (5, 7)]
    assert spans_to_field(spans) == "0:3,3:5,5:7"
    assert spans_from_field("0:3,3:5,5:7") == spans
    assert spans_from_field("") == []
