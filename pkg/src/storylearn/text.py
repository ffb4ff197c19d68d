"""Shared text primitives: tokenization, inflection matching, syllables, readability.

Every module that counts words, finds target-word occurrences or scores text
goes through these functions so the whole package agrees on what a "token"
and a "match" are.
"""

from __future__ import annotations

import re
from typing import Iterable, Iterator, NamedTuple

_VOWEL_GROUP = re.compile(r"[aeiouy]+")
_SENTENCE_BREAK = re.compile(r"[.!?]+")

#: Inflection suffixes accepted when matching a vocabulary headword against
#: a token ("hasten" matches "hastened", "run" matches "running", ...).
SUFFIXES = ("s", "es", "ed", "d", "ing")

MASK = "[MASK]"


class TokenSpan(NamedTuple):
    start: int
    end: int
    text: str


def _strip_edges(chunk: str) -> str:
    """Strip leading/trailing non-alphanumeric characters."""
    start = 0
    end = len(chunk)
    while start < end and not chunk[start].isalnum():
        start += 1
    while end > start and not chunk[end - 1].isalnum():
        end -= 1
    return chunk[start:end]


def tokenize(text: str) -> list[str]:
    """Split on whitespace and strip edge punctuation; drops empty leftovers.

    Case is preserved; callers that match or count unique words lowercase
    the result themselves.
    """
    out = []
    for chunk in text.split():
        word = _strip_edges(chunk)
        if word:
            out.append(word)
    return out


def raw_token_spans(text: str) -> list[TokenSpan]:
    """Character spans of whitespace-delimited chunks, punctuation included.

    Useful when a span of the original string must be cut out and pasted
    back byte-for-byte.
    """
    spans = []
    for match in re.finditer(r"\S+", text):
        spans.append(TokenSpan(match.start(), match.end(), match.group()))
    return spans


def word_spans(text: str) -> list[TokenSpan]:
    """Like :func:`raw_token_spans` but trimmed to the alphanumeric core.

    Tokens that are pure punctuation disappear, so the indexes line up with
    :func:`tokenize` output.
    """
    spans = []
    for raw in raw_token_spans(text):
        start, end = raw.start, raw.end
        while start < end and not text[start].isalnum():
            start += 1
        while end > start and not text[end - 1].isalnum():
            end -= 1
        if end > start:
            spans.append(TokenSpan(start, end, text[start:end]))
    return spans


def surface_forms(headword: str) -> frozenset[str]:
    """All lowercase token shapes a headword is allowed to match.

    The rule: the headword itself, headword+suffix for the fixed suffix set,
    the silent-e-dropped stem+suffix, and the final-consonant-doubled
    stem+suffix. Irregular forms are out of scope.
    """
    h = headword.lower()
    forms = {h}
    stems = [h]
    if h.endswith("e") and len(h) > 1:
        stems.append(h[:-1])
    if h and h[-1].isalpha() and h[-1] not in "aeiou":
        stems.append(h + h[-1])
    for stem in stems:
        for suffix in SUFFIXES:
            forms.add(stem + suffix)
    return frozenset(forms)


class SurfaceIndex:
    """Precomputed surface-form -> headword lookup for a set of headwords.

    When two headwords produce the same surface (e.g. "use" and "used" both
    yield "used"), an exact headword match wins, then lexicographic order,
    so matching stays deterministic.
    """

    def __init__(self, headwords: Iterable[str]):
        self.headwords = sorted({w.lower() for w in headwords})
        self._table: dict[str, str] = {}
        for head in self.headwords:
            for form in surface_forms(head):
                self._table.setdefault(form, head)
        # an exact headword always beats another word's inflection
        for head in self.headwords:
            self._table[head] = head

    def match(self, token: str) -> str | None:
        """Headword the token matches, or None."""
        return self._table.get(token.lower())

    def __len__(self) -> int:
        return len(self.headwords)


class Occurrence(NamedTuple):
    headword: str
    token_index: int
    start: int
    end: int
    surface: str


def find_occurrences(text: str, index: SurfaceIndex) -> Iterator[Occurrence]:
    """Yield every token of ``text`` matching the index, in order."""
    for token_index, span in enumerate(word_spans(text)):
        head = index.match(span.text)
        if head is not None:
            yield Occurrence(head, token_index, span.start, span.end, span.text)


def count_syllables(word: str) -> int:
    """Syllable heuristic: maximal vowel groups (y counts as a vowel),
    minus one for a trailing silent "e" unless the word ends in "le",
    never less than one."""
    w = "".join(c for c in word.lower() if c.isalpha())
    if not w:
        return 0
    count = len(_VOWEL_GROUP.findall(w))
    if w.endswith("e") and not w.endswith("le"):
        count -= 1
    return max(count, 1)


def count_sentences(text: str) -> int:
    """Naive sentence count: fragments between runs of ``.!?`` that still
    contain a word. Always at least 1 for non-blank text."""
    fragments = [f for f in _SENTENCE_BREAK.split(text) if tokenize(f)]
    return max(len(fragments), 1)


def flesch_reading_ease(text: str) -> float:
    """Flesch Reading-Ease: 206.835 - 1.015*(words/sentences) - 84.6*(syllables/words)."""
    words = tokenize(text)
    if not words:
        raise ValueError("cannot score text with zero words")
    sentences = count_sentences(text)
    syllables = sum(count_syllables(w) for w in words)
    return 206.835 - 1.015 * (len(words) / sentences) - 84.6 * (syllables / len(words))
