"""Sentence BLEU-4 with clipped counts and brevity penalty.

Smoothing: for orders n >= 2, a zero clipped count (or a candidate too
short to have any n-gram) scores (count + 1) / (total + 1). Unigrams
are unsmoothed, so no unigram overlap means a score of exactly 0. The
reference length for the brevity penalty is the closest to the
candidate length, ties going to the shorter reference.
"""
from __future__ import annotations

import math
from collections import Counter
from typing import Sequence

MAX_ORDER = 4

Tokens = Sequence[str] | Sequence[int]


def _ngrams(tokens: Tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu4(candidate: Tokens, references: list[Tokens]) -> float:
    if not references:
        raise ValueError("need at least one reference")
    c = len(candidate)
    if c == 0:
        return 0.0
    log_sum = 0.0
    for n in range(1, MAX_ORDER + 1):
        cand_counts = _ngrams(candidate, n)
        total = max(c - n + 1, 0)
        clipped = 0
        if cand_counts:
            max_ref: Counter = Counter()
            for ref in references:
                ref_counts = _ngrams(ref, n)
                for gram in cand_counts:
                    max_ref[gram] = max(max_ref[gram], ref_counts[gram])
            clipped = sum(min(count, max_ref[gram]) for gram, count in cand_counts.items())
        if n == 1:
            if clipped == 0:
                return 0.0
            p_n = clipped / total
        elif clipped == 0 or total == 0:
            p_n = (clipped + 1) / (total + 1)
        else:
            p_n = clipped / total
        log_sum += math.log(p_n) / MAX_ORDER
    r = min((len(ref) for ref in references), key=lambda rl: (abs(rl - c), rl))
    bp = 1.0 if c >= r else math.exp(1.0 - r / c)
    return bp * math.exp(log_sum)
