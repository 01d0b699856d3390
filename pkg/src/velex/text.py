"""Word-level vocabulary and marked token sequences."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

CLS = "[CLS]"
SEP = "[SEP]"
BOS = "[BOS]"
EOS = "[EOS]"
SPECIALS = (CLS, SEP, BOS, EOS)


class VocabError(KeyError):
    pass


class Vocabulary:
    """Bidirectional word/id map with per-word part-of-speech tags.

    Ids 0..3 are reserved for the marker tokens; tags cover content
    words only and drive the rule-based chunker.
    """

    def __init__(self, words: list[str], tags: dict[str, str]):
        self._words = list(SPECIALS) + [w for w in words if w not in SPECIALS]
        self._ids = {w: i for i, w in enumerate(self._words)}
        if len(self._ids) != len(self._words):
            raise ValueError("duplicate words in vocabulary")
        self.tags = dict(tags)

    def __len__(self) -> int:
        return len(self._words)

    def __contains__(self, word: str) -> bool:
        return word in self._ids

    def id(self, word: str) -> int:
        try:
            return self._ids[word]
        except KeyError:
            raise VocabError(f"unknown word {word!r}") from None

    def word(self, idx: int) -> str:
        if not (0 <= idx < len(self._words)):
            raise VocabError(f"id {idx} out of range")
        return self._words[idx]

    def encode(self, words: list[str]) -> list[int]:
        return [self.id(w) for w in words]

    def decode(self, ids: list[int]) -> list[str]:
        return [self.word(i) for i in ids]

    @property
    def cls_id(self) -> int:
        return 0

    @property
    def sep_id(self) -> int:
        return 1

    @property
    def bos_id(self) -> int:
        return 2

    @property
    def eos_id(self) -> int:
        return 3

    def tag(self, word: str) -> str:
        try:
            return self.tags[word]
        except KeyError:
            raise VocabError(f"no tag for word {word!r}") from None

    def to_json(self) -> str:
        return json.dumps(
            {"words": self._words[len(SPECIALS):], "tags": self.tags}, indent=1
        )

    @classmethod
    def from_json(cls, text: str) -> "Vocabulary":
        blob = json.loads(text)
        return cls(blob["words"], blob["tags"])

    def save(self, path: str | Path):
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


@dataclass
class TokenSequence:
    """Content token ids wrapped in start/end markers, plus raw words."""

    ids: list[int]
    words: list[str]

    def __post_init__(self):
        if len(self.ids) < 2:
            raise ValueError("token sequence needs at least the two markers")
        if self.ids[0] != 0 or self.ids[-1] != 1:
            raise ValueError("sequence must start with [CLS] and end with [SEP]")
        inner = self.ids[1:-1]
        if 0 in inner or 1 in inner:
            raise ValueError("markers may appear exactly once each")
        if len(self.words) != len(inner):
            raise ValueError("words must parallel the content tokens")

    @classmethod
    def from_words(cls, words: list[str], vocab: Vocabulary) -> "TokenSequence":
        return cls([vocab.cls_id] + vocab.encode(words) + [vocab.sep_id], list(words))

    @property
    def content_ids(self) -> list[int]:
        return self.ids[1:-1]

    @property
    def content_len(self) -> int:
        return len(self.ids) - 2
