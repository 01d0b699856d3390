"""Vocabulary and marked token sequences."""
import pytest

from velex.text import TokenSequence, VocabError, Vocabulary


@pytest.fixture()
def vv():
    return Vocabulary(["a", "dog", "runs"], {"a": "DET", "dog": "NOUN", "runs": "VERB"})


def test_specials_occupy_first_ids(vv):
    assert vv.id("[CLS]") == 0
    assert vv.id("[SEP]") == 1
    assert vv.id("[BOS]") == 2
    assert vv.id("[EOS]") == 3
    assert vv.id("a") == 4


def test_round_trip(vv):
    ids = vv.encode(["dog", "runs"])
    assert vv.decode(ids) == ["dog", "runs"]


def test_unknown_word(vv):
    with pytest.raises(VocabError):
        vv.id("zebra")
    with pytest.raises(VocabError):
        vv.word(99)


def test_json_round_trip(vv):
    restored = Vocabulary.from_json(vv.to_json())
    assert len(restored) == len(vv)
    assert restored.id("dog") == vv.id("dog")
    assert restored.tags == vv.tags


def test_duplicate_words_rejected():
    with pytest.raises(ValueError):
        Vocabulary(["a", "a"], {"a": "DET"})


def test_sequence_from_words(vv):
    seq = TokenSequence.from_words(["a", "dog"], vv)
    assert seq.ids == [0, 4, 5, 1]
    assert seq.content_ids == [4, 5]
    assert seq.content_len == 2


def test_sequence_requires_markers(vv):
    with pytest.raises(ValueError):
        TokenSequence([4, 5], ["a", "dog"][:0])
    with pytest.raises(ValueError):
        TokenSequence([0, 4, 0, 1], ["a", "dog"])
    with pytest.raises(ValueError):
        TokenSequence([0, 4, 1], ["a", "dog"])


def test_minimal_sequence(vv):
    seq = TokenSequence([0, 1], [])
    assert seq.content_len == 0
