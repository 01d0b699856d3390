"""Rule-based shallow chunking over tagged words, plus span validation.

Spans are end-exclusive (start, end) pairs over content tokens and must
tile the sentence: sorted, non-overlapping, no gaps.
"""
from __future__ import annotations

from dataclasses import dataclass

DET = "DET"
ADJ = "ADJ"
NOUN = "NOUN"
AUX = "AUX"
VERB = "VERB"
OTHER = "OTHER"

Span = tuple[int, int]


class ChunkTaggingError(KeyError):
    pass


class SpanError(ValueError):
    pass


@dataclass
class SpanReport:
    ok: bool
    span_index: int | None = None
    message: str = ""

    def __bool__(self) -> bool:
        return self.ok


def rule_chunk(words: list[str], lexicon: dict[str, str]) -> list[Span]:
    """Greedy chunk grouping from word tags.

    Determiner/adjective runs attach to the noun run that follows them;
    auxiliary/verb runs group together; anything else is a singleton.
    """
    if not words:
        raise SpanError("cannot chunk an empty word list")
    missing = [w for w in words if w not in lexicon]
    if missing:
        raise ChunkTaggingError(f"unknown words: {missing}")
    tags = [lexicon[w] for w in words]
    n = len(words)
    spans: list[Span] = []
    i = 0
    while i < n:
        t = tags[i]
        if t in (DET, ADJ):
            j = i
            while j < n and tags[j] in (DET, ADJ):
                j += 1
            if j < n and tags[j] == NOUN:
                k = j
                while k < n and tags[k] == NOUN:
                    k += 1
                spans.append((i, k))
                i = k
            else:
                spans.append((i, i + 1))
                i += 1
        elif t == NOUN:
            k = i
            while k < n and tags[k] == NOUN:
                k += 1
            spans.append((i, k))
            i = k
        elif t in (AUX, VERB):
            k = i
            while k < n and tags[k] in (AUX, VERB):
                k += 1
            spans.append((i, k))
            i = k
        else:
            spans.append((i, i + 1))
            i += 1
    return spans


def validate_spans(spans: list[Span], content_len: int) -> SpanReport:
    """Check bounds, ordering, overlap and full coverage."""
    if not spans:
        if content_len == 0:
            return SpanReport(True)
        return SpanReport(False, None, f"no spans but {content_len} tokens to cover")
    expected = 0
    for idx, (s, e) in enumerate(spans):
        if s >= e:
            return SpanReport(False, idx, f"span {idx} is empty or reversed: ({s}, {e})")
        if s < 0 or e > content_len:
            return SpanReport(
                False, idx, f"span {idx} ({s}, {e}) outside [0, {content_len})"
            )
        if s < expected:
            return SpanReport(False, idx, f"span {idx} overlaps previous (starts at {s})")
        if s > expected:
            return SpanReport(
                False, idx, f"coverage gap at token {expected} before span {idx}"
            )
        expected = e
    if expected != content_len:
        return SpanReport(
            False, len(spans) - 1, f"coverage gap at token {expected}"
        )
    return SpanReport(True)


def require_valid_spans(spans: list[Span], content_len: int):
    report = validate_spans(spans, content_len)
    if not report.ok:
        raise SpanError(report.message)


def spans_to_field(spans: list[Span]) -> str:
    """Serialize as comma-separated `start:end` pairs."""
    return ",".join(f"{s}:{e}" for s, e in spans)


def spans_from_field(field: str) -> list[Span]:
    field = field.strip()
    if not field:
        return []
    out: list[Span] = []
    for part in field.split(","):
        s, _, e = part.partition(":")
        try:
            out.append((int(s), int(e)))
        except ValueError:
            raise SpanError(f"bad span field entry {part!r}") from None
    return out
