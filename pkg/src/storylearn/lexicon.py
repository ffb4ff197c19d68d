"""Target-vocabulary pool: dictionary entries, lookup, difficulty filtering, sampling."""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from typing import IO, Iterable, Iterator

_REQUIRED_KEYS = ("headword", "definition", "pos", "phonetic", "example", "gloss_zh", "rank")


class VocabError(ValueError):
    """Malformed vocabulary input."""


class WordNotFoundError(KeyError):
    """Lookup of a word that is not in the pool."""


@dataclass(frozen=True)
class VocabEntry:
    headword: str
    definition: str
    pos: str
    phonetic: str
    example: str
    gloss_zh: str
    rank: int


class VocabPool:
    """Immutable mapping of lowercase headword -> entry, in file order."""

    def __init__(self, entries: Iterable[VocabEntry]):
        self._entries: dict[str, VocabEntry] = {}
        ranks: dict[int, str] = {}
        for entry in entries:
            word = entry.headword
            if word in self._entries:
                raise VocabError(f"duplicate headword: {word!r}")
            if entry.rank in ranks:
                raise VocabError(
                    f"duplicate frequency rank {entry.rank} ({ranks[entry.rank]!r} and {word!r})"
                )
            ranks[entry.rank] = word
            self._entries[word] = entry
        if not self._entries:
            raise VocabError("empty vocabulary")

    @property
    def words(self) -> list[str]:
        return list(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, word: str) -> bool:
        return word.lower() in self._entries

    def __iter__(self) -> Iterator[VocabEntry]:
        return iter(self._entries.values())

    def get(self, word: str) -> VocabEntry | None:
        return self._entries.get(word.lower())


@dataclass(frozen=True)
class WordSet:
    """The words a learner studies in one session (default five)."""

    words: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.words)) != len(self.words):
            raise ValueError(f"word set contains duplicates: {self.words}")
        if not self.words:
            raise ValueError("word set is empty")

    @property
    def size(self) -> int:
        return len(self.words)


def load_vocab(source: IO[str]) -> VocabPool:
    """Parse a newline-delimited JSON vocabulary file into a pool.

    Required keys per record: headword, definition, pos, phonetic, example,
    gloss_zh, rank. Headwords are lowercased.
    """
    entries = []
    for lineno, line in enumerate(source, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise VocabError(f"invalid JSON at line {lineno}: {exc}") from exc
        missing = [k for k in _REQUIRED_KEYS if k not in record]
        if missing:
            raise VocabError(f"missing field(s) {missing} at line {lineno}")
        entries.append(
            VocabEntry(
                headword=str(record["headword"]).lower(),
                definition=str(record["definition"]),
                pos=str(record["pos"]),
                phonetic=str(record["phonetic"]),
                example=str(record["example"]),
                gloss_zh=str(record["gloss_zh"]),
                rank=int(record["rank"]),
            )
        )
    return VocabPool(entries)


def lookup(pool: VocabPool, word: str) -> VocabEntry:
    """Case-insensitive dictionary lookup."""
    entry = pool.get(word)
    if entry is None:
        raise WordNotFoundError(word)
    return entry


def filter_by_difficulty(pool: VocabPool, min_rank: int, max_rank: int) -> list[str]:
    """Headwords whose frequency rank falls in [min_rank, max_rank], by rank."""
    picked = [e for e in pool if min_rank <= e.rank <= max_rank]
    picked.sort(key=lambda e: e.rank)
    return [e.headword for e in picked]


def sample_word_set(
    pool: VocabPool,
    k: int,
    rng: random.Random,
    exclude: Iterable[str] = (),
) -> WordSet:
    """Draw ``k`` distinct words uniformly without replacement, skipping ``exclude``."""
    excluded = {w.lower() for w in exclude}
    candidates = [w for w in pool.words if w not in excluded]
    if len(candidates) < k:
        raise ValueError(
            f"cannot sample {k} words: only {len(candidates)} candidates after exclusions"
        )
    return WordSet(tuple(rng.sample(candidates, k)))
