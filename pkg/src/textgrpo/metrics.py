"""Sentence-level text similarity metrics over token-id sequences.

All scores lie in [0, 1].  They double as RL rewards and evaluation metrics.

BLEU uses uniform weights, a brevity penalty and additive smoothing of
zero-match precisions for orders above one.  METEOR is restricted to the
exact-match stage (no stemming or synonyms).
"""

from __future__ import annotations

import enum
import math
from collections import Counter
from typing import Sequence

METEOR_ALPHA = 0.9
METEOR_GAMMA = 0.5
METEOR_THETA = 3.0


class Metric(str, enum.Enum):
    BLEU = "BLEU"
    ROUGE1 = "ROUGE1"
    ROUGE2 = "ROUGE2"
    ROUGEL = "ROUGEL"
    METEOR = "METEOR"

    @classmethod
    def parse(cls, name: "str | Metric") -> "Metric":
        if isinstance(name, Metric):
            return name
        key = name.upper().replace("-", "").replace("_", "")
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown metric {name!r}") from None

    @property
    def label(self) -> str:
        """Column label used in report tables (``ROUGE-1`` etc.)."""
        return {"ROUGE1": "ROUGE-1", "ROUGE2": "ROUGE-2", "ROUGEL": "ROUGE-L"}.get(self.value, self.value)


ALL_METRICS = tuple(Metric)


def ngram_counts(tokens: Sequence[int], n: int) -> Counter:
    if n < 1:
        raise ValueError("n-gram order must be >= 1")
    tokens = tuple(tokens)
    return Counter(tokens[i : i + n] for i in range(len(tokens) - n + 1))


def _check_reference(reference: Sequence[int]) -> None:
    if len(reference) == 0:
        raise ValueError("reference must contain at least one token")


def _f1(p: float, r: float) -> float:
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


def bleu(candidate: Sequence[int], reference: Sequence[int], max_n: int = 4) -> float:
    _check_reference(reference)
    c, r = len(candidate), len(reference)
    if c == 0:
        return 0.0
    log_sum = 0.0
    for n in range(1, max_n + 1):
        cand = ngram_counts(candidate, n)
        ref = ngram_counts(reference, n)
        matches = sum(min(k, ref[g]) for g, k in cand.items())
        total = max(0, c - n + 1)
        if n > 1 and matches == 0:
            matches, total = matches + 1, total + 1
        if matches == 0:
            return 0.0
        log_sum += math.log(matches / total) / max_n
    bp = 1.0 if c > r else math.exp(1.0 - r / c)
    return bp * math.exp(log_sum)


def rouge_n(candidate: Sequence[int], reference: Sequence[int], n: int) -> float:
    _check_reference(reference)
    if n not in (1, 2):
        raise ValueError("ROUGE-n is defined here for n in {1, 2}")
    cand = ngram_counts(candidate, n)
    ref = ngram_counts(reference, n)
    overlap = sum(min(k, ref[g]) for g, k in cand.items())
    n_cand, n_ref = sum(cand.values()), sum(ref.values())
    p = overlap / n_cand if n_cand else 0.0
    r = overlap / n_ref if n_ref else 0.0
    return _f1(p, r)


def lcs_length(a: Sequence[int], b: Sequence[int]) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: Sequence[int], reference: Sequence[int]) -> float:
    _check_reference(reference)
    if not candidate:
        return 0.0
    lcs = lcs_length(candidate, reference)
    return _f1(lcs / len(candidate), lcs / len(reference))


def _align(candidate: Sequence[int], reference: Sequence[int]) -> list[tuple[int, int]]:
    """Greedy exact unigram alignment.

    Candidate positions are scanned left to right.  Each takes the unused
    reference position with the same token that continues the previous
    match when one exists, otherwise the earliest unused one.  Every
    candidate token whose type still has unused reference copies gets
    matched, so the match count is maximal (the clipped unigram overlap);
    preferring continuations keeps the chunk count low.
    """
    unused: dict[int, list[int]] = {}
    for j, tok in enumerate(reference):
        unused.setdefault(tok, []).append(j)
    pairs: list[tuple[int, int]] = []
    last_j = None
    for i, tok in enumerate(candidate):
        slots = unused.get(tok)
        if not slots:
            continue
        if (
            last_j is not None
            and pairs
            and pairs[-1][0] == i - 1
            and last_j + 1 in slots
        ):
            j = last_j + 1
        else:
            j = slots[0]
        slots.remove(j)
        pairs.append((i, j))
        last_j = j
    return pairs


def count_chunks(pairs: Sequence[tuple[int, int]]) -> int:
    chunks = 0
    prev = None
    for i, j in pairs:
        if prev is None or not (i == prev[0] + 1 and j == prev[1] + 1):
            chunks += 1
        prev = (i, j)
    return chunks


def meteor_lite(candidate: Sequence[int], reference: Sequence[int]) -> float:
    _check_reference(reference)
    if not candidate:
        return 0.0
    pairs = _align(candidate, reference)
    m = len(pairs)
    if m == 0:
        return 0.0
    p, r = m / len(candidate), m / len(reference)
    f_mean = p * r / (METEOR_ALPHA * p + (1 - METEOR_ALPHA) * r)
    penalty = METEOR_GAMMA * (count_chunks(pairs) / m) ** METEOR_THETA
    return f_mean * (1 - penalty)


def reward(metric: "str | Metric", candidate: Sequence[int], reference: Sequence[int]) -> float:
    """Score ``candidate`` against ``reference`` with the named metric."""
    metric = Metric.parse(metric)
    if metric is Metric.BLEU:
        return bleu(candidate, reference)
    if metric is Metric.ROUGE1:
        return rouge_n(candidate, reference, 1)
    if metric is Metric.ROUGE2:
        return rouge_n(candidate, reference, 2)
    if metric is Metric.ROUGEL:
        return rouge_l(candidate, reference)
    return meteor_lite(candidate, reference)


def score_all(candidate: Sequence[int], reference: Sequence[int]) -> dict[Metric, float]:
    return {m: reward(m, candidate, reference) for m in ALL_METRICS}
