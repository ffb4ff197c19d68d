"""Lexical quality metrics, human-rating aggregation, and the paired signed-rank test."""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass
from itertools import product
from typing import IO, Sequence

from .corpus import Story
from .grammar import GrammarChecker
from .text import tokenize
from .wordselect import EmbeddingProvider, cosine

RATING_DIMENSIONS = ("coherence", "relevance", "interestingness", "overall")

#: Exact enumeration is affordable up to this many nonzero differences;
#: beyond it the normal approximation with tie correction takes over.
EXACT_LIMIT = 12


class DegenerateDataError(ValueError):
    """Statistic undefined for this input (e.g. all paired differences zero)."""


@dataclass(frozen=True)
class LexicalReport:
    grammar: float
    type_token_ratio: float
    trigram_repetition: float
    sentence_coherence: float | None  # None for single-sentence stories

    def to_dict(self) -> dict:
        return {
            "grammar": self.grammar,
            "type_token_ratio": self.type_token_ratio,
            "trigram_repetition": self.trigram_repetition,
            "sentence_coherence": self.sentence_coherence,
        }


@dataclass(frozen=True)
class HumanRating:
    story_id: str
    rater_id: str
    source: str  # which corpus the story came from, e.g. "human" / "machine"
    coherence: int
    relevance: int
    interestingness: int
    overall: int

    def __post_init__(self):
        for dim in RATING_DIMENSIONS:
            score = getattr(self, dim)
            if not 1 <= score <= 5:
                raise ValueError(f"{dim} score {score} outside 1..5")

    def score(self, dimension: str) -> int:
        return getattr(self, dimension)


def type_token_ratio(text: str) -> float:
    """Unique lowercase tokens / total tokens."""
    tokens = [t.lower() for t in tokenize(text)]
    if not tokens:
        raise ValueError("cannot compute type-token ratio of empty text")
    return len(set(tokens)) / len(tokens)


def trigram_repetition(text: str) -> float:
    """1 - unique/total over consecutive token trigrams; 0 for short text."""
    tokens = [t.lower() for t in tokenize(text)]
    if len(tokens) < 3:
        return 0.0
    trigrams = [tuple(tokens[i : i + 3]) for i in range(len(tokens) - 2)]
    return 1.0 - len(set(trigrams)) / len(trigrams)


def sentence_coherence(sentences: Sequence[str], provider: EmbeddingProvider) -> float:
    """Mean cosine similarity between embeddings of adjacent sentence pairs."""
    if len(sentences) < 2:
        raise ValueError("sentence coherence needs at least two sentences")
    vectors = [provider.embed(s) for s in sentences]
    similarities = [cosine(vectors[i], vectors[i + 1]) for i in range(len(vectors) - 1)]
    return sum(similarities) / len(similarities)


def grammar_fraction(sentences: Sequence[str], checker: GrammarChecker) -> float:
    """Fraction of sentences the checker reports clean."""
    if not sentences:
        raise ValueError("grammar fraction needs at least one sentence")
    clean = sum(1 for s in sentences if not checker.check(s))
    return clean / len(sentences)


def lexical_report(
    story: Story,
    provider: EmbeddingProvider,
    checker: GrammarChecker,
) -> LexicalReport:
    """All four quality metrics for one story; coherence is None when the
    story has a single sentence."""
    coherence = (
        sentence_coherence(story.sentences, provider) if len(story.sentences) >= 2 else None
    )
    return LexicalReport(
        grammar=grammar_fraction(story.sentences, checker),
        type_token_ratio=type_token_ratio(story.text),
        trigram_repetition=trigram_repetition(story.text),
        sentence_coherence=coherence,
    )


def load_ratings(source: IO[str]) -> list[HumanRating]:
    """CSV with header story_id,rater_id,source,coherence,relevance,interestingness,overall."""
    reader = csv.DictReader(source)
    ratings = []
    for row in reader:
        ratings.append(
            HumanRating(
                story_id=row["story_id"],
                rater_id=row["rater_id"],
                source=row["source"],
                coherence=int(row["coherence"]),
                relevance=int(row["relevance"]),
                interestingness=int(row["interestingness"]),
                overall=int(row["overall"]),
            )
        )
    return ratings


def aggregate_ratings(ratings: Sequence[HumanRating]) -> dict[str, dict[str, float]]:
    """Arithmetic mean per (story source, dimension)."""
    if not ratings:
        raise ValueError("no ratings to aggregate")
    by_source: dict[str, list[HumanRating]] = defaultdict(list)
    for rating in ratings:
        by_source[rating.source].append(rating)
    return {
        source: {
            dim: sum(r.score(dim) for r in rows) / len(rows) for dim in RATING_DIMENSIONS
        }
        for source, rows in sorted(by_source.items())
    }


@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float  # min of the positive/negative rank sums
    p_value: float
    n_effective: int
    exact: bool


def _midranks(values: Sequence[float]) -> list[float]:
    """Average ranks (1-based) with ties sharing their mid-rank."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        rank = (i + j + 2) / 2  # mean of 1-based positions i+1..j+1
        for idx in order[i : j + 1]:
            ranks[idx] = rank
        i = j + 1
    return ranks


def _normal_cdf(z: float) -> float:
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def wilcoxon_signed_rank(pairs: Sequence[tuple[float, float]]) -> WilcoxonResult:
    """Two-sided Wilcoxon signed-rank test on paired samples.

    Zero differences are dropped and ties mid-ranked. With at most
    ``EXACT_LIMIT`` nonzero differences the p-value is exact: the observed
    statistic is min(W+, W-) and p = P(min rank sum <= observed) over all
    2^n equally likely sign assignments of the same ranks. Larger samples
    use the normal approximation with the tie-corrected variance.
    """
    diffs = [x - y for x, y in pairs if x != y]
    if not diffs:
        raise DegenerateDataError("all paired differences are zero")
    n = len(diffs)
    ranks = _midranks([abs(d) for d in diffs])
    w_plus = sum(r for r, d in zip(ranks, diffs) if d > 0)
    w_minus = sum(r for r, d in zip(ranks, diffs) if d < 0)
    statistic = min(w_plus, w_minus)
    total = sum(ranks)

    if n <= EXACT_LIMIT:
        hits = 0
        for signs in product((0, 1), repeat=n):
            w = sum(r for r, s in zip(ranks, signs) if s)
            if min(w, total - w) <= statistic + 1e-9:
                hits += 1
        return WilcoxonResult(statistic, hits / 2**n, n, exact=True)

    mean = n * (n + 1) / 4
    tie_counts: dict[float, int] = defaultdict(int)
    for d in diffs:
        tie_counts[abs(d)] += 1
    tie_term = sum(t**3 - t for t in tie_counts.values()) / 48
    variance = n * (n + 1) * (2 * n + 1) / 24 - tie_term
    if variance <= 0:
        raise DegenerateDataError("zero variance after tie correction")
    z = (statistic - mean) / math.sqrt(variance)
    p = min(1.0, 2 * _normal_cdf(z))
    return WilcoxonResult(statistic, p, n, exact=False)
