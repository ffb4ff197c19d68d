"""Experiment pipeline: pretest, word-set partition, counterbalancing, scoring.

Each participant takes a multiple-choice pretest, gets 40 of their unknown
words partitioned into eight five-word sets, learns two sets under each of
the four interface conditions (order counterbalanced by a Williams Latin
square), and is scored on a posttest of choices plus written sentences.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Mapping, Sequence

from .lexicon import VocabPool, WordSet
from .session import Mode

DONT_KNOW = "I do not know this word"

WORDS_PER_SET = 5
SETS_PER_PLAN = 8
SETS_PER_CONDITION = 2
PLAN_WORDS = WORDS_PER_SET * SETS_PER_PLAN  # 40

CONDITIONS = (Mode.READ_SEN, Mode.READ_AI, Mode.STORYFIER_SEN, Mode.STORYFIER_AI)


class IneligibleParticipantError(ValueError):
    """Participant does not have enough unknown words for a full plan."""


@dataclass(frozen=True)
class PretestItem:
    word: str
    options: tuple[str, ...]  # four glosses + the fixed don't-know option, last
    correct_index: int  # 0..3

    def __post_init__(self):
        if len(self.options) != 5:
            raise ValueError(f"pretest item for {self.word!r} must have 5 options")
        if not 0 <= self.correct_index <= 3:
            raise ValueError(f"correct_index {self.correct_index} outside 0..3")


@dataclass(frozen=True)
class StudyPlan:
    participant_id: str
    unknown_words: tuple[str, ...]
    sets: tuple[WordSet, ...]
    condition_order: tuple[Mode, ...]
    set_to_condition: tuple[Mode, ...]  # parallel to sets

    def to_dict(self) -> dict:
        return {
            "participant_id": self.participant_id,
            "unknown_words": list(self.unknown_words),
            "sets": [list(s.words) for s in self.sets],
            "condition_order": [m.value for m in self.condition_order],
            "set_to_condition": [m.value for m in self.set_to_condition],
        }


@dataclass(frozen=True)
class PosttestRecord:
    word: str
    choice_correct: bool
    sentence: str  # "nothing" when the participant declined to write
    grammar_score: int | None = None
    context_score: int | None = None

    def __post_init__(self):
        wrote = self.sentence.strip().lower() != "nothing"
        if wrote:
            for label, score in (("grammar", self.grammar_score), ("context", self.context_score)):
                if score is None or not 0 <= score <= 2:
                    raise ValueError(f"{label} score {score} outside 0..2 for {self.word!r}")
        elif self.grammar_score is not None or self.context_score is not None:
            raise ValueError(f"scores present for unwritten sentence ({self.word!r})")


@dataclass(frozen=True)
class ConditionOutcome:
    correct_choices: int  # 0-10
    correct_sentences: int  # 0-10
    total_sentence_score: int  # 0-40


def build_pretest(
    pool: VocabPool,
    candidate_words: Sequence[str],
    rng: random.Random,
) -> list[PretestItem]:
    """One item per candidate word: its Chinese gloss plus three distractor
    glosses from other entries (same part of speech when available), the
    four shuffled, and the fixed don't-know option appended last."""
    items = []
    for word in candidate_words:
        entry = pool.get(word)
        if entry is None:
            raise KeyError(f"candidate word {word!r} not in pool")
        same_pos = [
            e.gloss_zh for e in pool
            if e.headword != entry.headword and e.pos == entry.pos and e.gloss_zh != entry.gloss_zh
        ]
        any_pos = [
            e.gloss_zh for e in pool
            if e.headword != entry.headword and e.gloss_zh != entry.gloss_zh
        ]
        candidates = same_pos if len(same_pos) >= 3 else any_pos
        if len(candidates) < 3:
            raise ValueError(f"not enough distractor glosses for {word!r}")
        distractors = rng.sample(candidates, 3)
        glosses = [entry.gloss_zh, *distractors]
        rng.shuffle(glosses)
        items.append(
            PretestItem(
                word=entry.headword,
                options=(*glosses, DONT_KNOW),
                correct_index=glosses.index(entry.gloss_zh),
            )
        )
    return items


def score_pretest(items: Sequence[PretestItem], answers: Mapping[str, int]) -> list[str]:
    """Words answered incorrectly or with the don't-know option."""
    unknown = []
    for item in items:
        if item.word not in answers:
            raise KeyError(f"missing answer for {item.word!r}")
        if answers[item.word] != item.correct_index:
            unknown.append(item.word)
    return unknown


def latin_square(n: int) -> list[list[int]]:
    """Williams design: every symbol once per row and column; for even n,
    every symbol immediately precedes every other equally often."""
    if n < 1:
        raise ValueError("latin square order must be >= 1")
    first = [0]
    low, high = 1, n - 1
    for i in range(1, n):
        if i % 2:
            first.append(low)
            low += 1
        else:
            first.append(high)
            high -= 1
    return [[(symbol + shift) % n for symbol in first] for shift in range(n)]


def plan_study(
    participant_id: str,
    sequence: int,
    unknown_words: Sequence[str],
    rng: random.Random,
) -> StudyPlan:
    """Sample 40 unknown words into eight disjoint five-word sets and assign
    two consecutive sets to each condition, in the participant's
    counterbalanced order (Latin-square row ``sequence mod 4``)."""
    if len(unknown_words) < PLAN_WORDS:
        raise IneligibleParticipantError(
            f"participant {participant_id!r} has {len(unknown_words)} unknown words, need {PLAN_WORDS}"
        )
    chosen = rng.sample(list(unknown_words), PLAN_WORDS)
    sets = tuple(
        WordSet(tuple(chosen[i : i + WORDS_PER_SET]))
        for i in range(0, PLAN_WORDS, WORDS_PER_SET)
    )
    row = latin_square(len(CONDITIONS))[sequence % len(CONDITIONS)]
    condition_order = tuple(CONDITIONS[i] for i in row)
    set_to_condition = tuple(
        condition_order[i // SETS_PER_CONDITION] for i in range(SETS_PER_PLAN)
    )
    return StudyPlan(
        participant_id=participant_id,
        unknown_words=tuple(unknown_words),
        sets=sets,
        condition_order=condition_order,
        set_to_condition=set_to_condition,
    )


def score_posttest(records: Sequence[PosttestRecord]) -> ConditionOutcome:
    """Outcome for one condition: correct choices, sentences correct in both
    grammar and context, and the summed sentence score (max 4 each)."""
    if len(records) > 2 * WORDS_PER_SET:
        raise ValueError(f"{len(records)} records for one condition, max {2 * WORDS_PER_SET}")
    correct_choices = sum(1 for r in records if r.choice_correct)
    correct_sentences = sum(
        1 for r in records if r.grammar_score == 2 and r.context_score == 2
    )
    total = sum((r.grammar_score or 0) + (r.context_score or 0) for r in records)
    return ConditionOutcome(
        correct_choices=correct_choices,
        correct_sentences=correct_sentences,
        total_sentence_score=total,
    )


def aggregate_questionnaire(responses: Mapping[str, Sequence[float]]) -> dict[str, float]:
    """Mean rating per construct (each construct averages its items)."""
    out = {}
    for construct, scores in responses.items():
        if not scores:
            raise ValueError(f"construct {construct!r} has no items")
        out[construct] = sum(scores) / len(scores)
    return out


def cronbach_alpha(item_matrix: Sequence[Sequence[float]]) -> float:
    """Internal-consistency alpha over a participants x items matrix,
    using sample variances (n-1 denominator)."""
    rows = [list(r) for r in item_matrix]
    if len(rows) < 2:
        raise ValueError("need at least two participants")
    k = len(rows[0])
    if k < 2 or any(len(r) != k for r in rows):
        raise ValueError("need at least two items and a rectangular matrix")

    def sample_var(values: list[float]) -> float:
        mean = sum(values) / len(values)
        return sum((v - mean) ** 2 for v in values) / (len(values) - 1)

    item_vars = [sample_var([row[j] for row in rows]) for j in range(k)]
    totals = [sum(row) for row in rows]
    total_var = sample_var(totals)
    if total_var == 0:
        raise ValueError("total-score variance is zero")
    return (k / (k - 1)) * (1 - sum(item_vars) / total_var)
