"""Story-generation and infilling backends with target-word coverage enforcement.

Two backends ship here: an HTTP client speaking the wire protocol
(POST /v1/generate, POST /v1/infill) and a deterministic template backend
that needs no network and always covers its words, which makes it the
oracle for everything downstream.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Protocol, Sequence

import httpx

from .text import SurfaceIndex, find_occurrences

DEFAULT_MAX_WORDS = 10
DEFAULT_MAX_RETRIES = 3
DEFAULT_TIMEOUT = 30.0


class BackendError(RuntimeError):
    """Backend unreachable, timed out, or returned a malformed response."""


class Mode(str, enum.Enum):
    FULL_STORY = "full_story"
    NEXT_SENTENCE = "next_sentence"
    INFILL = "infill"


@dataclass(frozen=True)
class GenerationRequest:
    mode: Mode
    title: str | None = None
    words: tuple[str, ...] = ()
    preceding: tuple[str, ...] = ()
    following: tuple[str, ...] = ()
    prefix: str = ""

    def __post_init__(self):
        if self.mode is Mode.FULL_STORY and not self.words:
            raise ValueError("full-story generation requires at least one word")


@dataclass(frozen=True)
class GeneratedText:
    sentences: tuple[str, ...]
    covered_words: frozenset[str]
    attempts: int
    coverage_complete: bool

    @property
    def text(self) -> str:
        return " ".join(self.sentences)


class GenerationBackend(Protocol):
    def generate(self, request: GenerationRequest) -> list[str]:
        """Full story for the request; returns sentences."""
        ...

    def infill(self, request: GenerationRequest) -> str:
        """Span completing ``request.prefix`` given surrounding context."""
        ...


_SUBJECTS = ("Mia", "Leo", "The teacher", "Her brother", "The old man", "A neighbor")
_VERBS = ("noticed", "carried", "described", "borrowed", "examined", "praised")


@dataclass
class TemplateBackend:
    """Deterministic offline backend: one sentence per word from cyclic
    subject/verb lists. Identical requests produce identical output."""

    subjects: tuple[str, ...] = _SUBJECTS
    verbs: tuple[str, ...] = _VERBS

    def _sentence(self, i: int, word: str) -> str:
        subject = self.subjects[i % len(self.subjects)]
        verb = self.verbs[i % len(self.verbs)]
        return f"{subject} {verb} the {word}."

    def generate(self, request: GenerationRequest) -> list[str]:
        return [self._sentence(i, word) for i, word in enumerate(request.words)]

    def infill(self, request: GenerationRequest) -> str:
        position = len(request.preceding)
        covered = _coverage(request.prefix, request.words)
        remaining = [w for w in request.words if w not in covered]
        if not request.prefix:
            word = remaining[0] if remaining else (request.words[0] if request.words else "story")
            return self._sentence(position, word)
        if not remaining:
            return "."
        return f" {remaining[0]}."


class HttpBackend:
    """Client for the JSON wire protocol; non-200 or schema-invalid
    responses raise :class:`BackendError`."""

    def __init__(self, base_url: str, timeout: float = DEFAULT_TIMEOUT, client: httpx.Client | None = None):
        self.base_url = base_url.rstrip("/")
        self._client = client or httpx.Client(timeout=timeout)

    def _post(self, path: str, body: dict) -> dict:
        try:
            response = self._client.post(f"{self.base_url}{path}", json=body)
        except httpx.HTTPError as exc:
            raise BackendError(f"backend request failed: {exc}") from exc
        if response.status_code != 200:
            raise BackendError(f"backend returned HTTP {response.status_code} for {path}")
        try:
            payload = response.json()
        except ValueError as exc:
            raise BackendError(f"backend returned non-JSON body for {path}") from exc
        if not isinstance(payload, dict):
            raise BackendError(f"backend returned non-object body for {path}")
        return payload

    def generate(self, request: GenerationRequest) -> list[str]:
        payload = self._post(
            "/v1/generate", {"title": request.title, "words": list(request.words)}
        )
        sentences = payload.get("sentences")
        if not isinstance(sentences, list) or not all(isinstance(s, str) for s in sentences):
            raise BackendError("generate response missing 'sentences' list of strings")
        return sentences

    def infill(self, request: GenerationRequest) -> str:
        payload = self._post(
            "/v1/infill",
            {
                "title": request.title,
                "preceding": list(request.preceding),
                "following": list(request.following),
                "unused_words": list(request.words),
                "prefix": request.prefix,
            },
        )
        span = payload.get("text")
        if not isinstance(span, str):
            raise BackendError("infill response missing 'text' string")
        return span


def _coverage(text: str, words: Sequence[str]) -> frozenset[str]:
    """Requested words actually present in the text, via the matching rule."""
    if not words:
        return frozenset()
    index = SurfaceIndex(words)
    return frozenset(occ.headword for occ in find_occurrences(text, index))


def generate_story(
    backend: GenerationBackend,
    title: str | None,
    words: Sequence[str],
    *,
    max_words: int = DEFAULT_MAX_WORDS,
    max_retries: int = DEFAULT_MAX_RETRIES,
) -> GeneratedText:
    """Generate a story covering ``words``; retry on dropped words.

    After ``max_retries`` attempts the best-coverage result is returned with
    ``coverage_complete=False`` rather than failing the caller.
    """
    if not 1 <= len(words) <= max_words:
        raise ValueError(f"word count must be in 1..{max_words}, got {len(words)}")
    request = GenerationRequest(mode=Mode.FULL_STORY, title=title, words=tuple(words))
    wanted = {w.lower() for w in words}
    best: GeneratedText | None = None
    for attempt in range(1, max_retries + 1):
        sentences = tuple(backend.generate(request))
        covered = _coverage(" ".join(sentences), words)
        result = GeneratedText(
            sentences=sentences,
            covered_words=covered,
            attempts=attempt,
            coverage_complete=covered == wanted,
        )
        if result.coverage_complete:
            return result
        if best is None or len(covered) > len(best.covered_words):
            best = result
    assert best is not None
    return GeneratedText(
        sentences=best.sentences,
        covered_words=best.covered_words,
        attempts=max_retries,
        coverage_complete=False,
    )


def next_sentence(
    backend: GenerationBackend,
    title: str | None,
    prior_sentences: Sequence[str],
    unused_words: Sequence[str],
    *,
    max_retries: int = DEFAULT_MAX_RETRIES,
) -> GeneratedText:
    """One new sentence that should consume at least one unused target word."""
    if not unused_words:
        raise ValueError("next_sentence requires at least one unused word")
    request = GenerationRequest(
        mode=Mode.NEXT_SENTENCE,
        title=title,
        words=tuple(unused_words),
        preceding=tuple(prior_sentences),
        prefix="",
    )
    best: GeneratedText | None = None
    for attempt in range(1, max_retries + 1):
        sentence = backend.infill(request).strip()
        if not sentence:
            raise BackendError("backend returned an empty sentence")
        covered = _coverage(sentence, unused_words)
        result = GeneratedText(
            sentences=(sentence,),
            covered_words=covered,
            attempts=attempt,
            coverage_complete=bool(covered),
        )
        if result.coverage_complete:
            return result
        if best is None or len(covered) > len(best.covered_words):
            best = result
    assert best is not None
    return GeneratedText(
        sentences=best.sentences,
        covered_words=best.covered_words,
        attempts=max_retries,
        coverage_complete=False,
    )


def infill(
    backend: GenerationBackend,
    preceding: Sequence[str],
    following: Sequence[str],
    unused_words: Sequence[str],
    title: str | None = None,
    prefix: str = "",
    *,
    max_retries: int = DEFAULT_MAX_RETRIES,
) -> GeneratedText:
    """Span completing ``prefix`` (the span excludes the prefix itself).

    Coverage counts only words inside the returned span; with no new
    coverage after retries the result is flagged, matching generate_story.
    """
    request = GenerationRequest(
        mode=Mode.INFILL,
        title=title,
        words=tuple(unused_words),
        preceding=tuple(preceding),
        following=tuple(following),
        prefix=prefix,
    )
    best: GeneratedText | None = None
    for attempt in range(1, max_retries + 1):
        span = backend.infill(request)
        covered = _coverage(span, unused_words)
        result = GeneratedText(
            sentences=(span,),
            covered_words=covered,
            attempts=attempt,
            coverage_complete=bool(covered) or not unused_words,
        )
        if result.coverage_complete:
            return result
        if best is None or len(covered) > len(best.covered_words):
            best = result
    assert best is not None
    return GeneratedText(
        sentences=best.sentences,
        covered_words=best.covered_words,
        attempts=max_retries,
        coverage_complete=False,
    )
