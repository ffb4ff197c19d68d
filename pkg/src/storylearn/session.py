"""One learner's read -> cloze -> write flow, event-sourced.

Every state change is an event; live operation validates, emits events, and
folds them into state with :func:`apply_event`. Replaying the same events
rebuilds the same state byte-for-byte, which is what the service layer's
crash recovery leans on. Timestamps come from an injectable clock so tests
stay deterministic.
"""

from __future__ import annotations

import enum
import json
import random
import time
import uuid
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

from . import genclient
from .grammar import GrammarChecker
from .text import SurfaceIndex, find_occurrences, tokenize

Clock = Callable[[], float]


class SessionFlowError(RuntimeError):
    """Operation not legal at the session's current step."""


class Mode(str, enum.Enum):
    READ_SEN = "read_sen"
    READ_AI = "read_ai"
    STORYFIER_SEN = "storyfier_sen"
    STORYFIER_AI = "storyfier_ai"

    @property
    def interactive(self) -> bool:
        """Whether the mode runs the cloze and writing steps after reading."""
        return self in (Mode.STORYFIER_SEN, Mode.STORYFIER_AI)

    @property
    def generative(self) -> bool:
        """Whether the reading material is a generated story."""
        return self in (Mode.READ_AI, Mode.STORYFIER_AI)


class Step(str, enum.Enum):
    READ = "read"
    CLOZE = "cloze"
    WRITE = "write"
    DONE = "done"


_STEP_ORDER = (Step.READ, Step.CLOZE, Step.WRITE, Step.DONE)


class Author(str, enum.Enum):
    HUMAN = "human"
    MACHINE = "machine"
    # a human turn completed from an accepted inline suggestion
    MACHINE_ASSISTED = "machine_assisted"


# ---------------------------------------------------------------------------
# Cloze construction and checking
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Blank:
    index: int
    expected_surface: str
    headword: str


@dataclass(frozen=True)
class ClozeTest:
    """Alternation of literal text segments and blanks over the material.

    Joining the segments with each blank replaced by its expected surface
    reconstructs the material byte-for-byte.
    """

    segments: tuple[str | Blank, ...]
    bank: tuple[str, ...]
    warnings: tuple[str, ...]  # target words with no occurrence to blank

    @property
    def blanks(self) -> list[Blank]:
        return [s for s in self.segments if isinstance(s, Blank)]

    def reconstruct(self, answers: Mapping[int, str] | None = None) -> str:
        parts = []
        for seg in self.segments:
            if isinstance(seg, Blank):
                parts.append(answers[seg.index] if answers else seg.expected_surface)
            else:
                parts.append(seg)
        return "".join(parts)

    def to_dict(self, include_answers: bool = True) -> dict:
        segments = []
        for seg in self.segments:
            if isinstance(seg, Blank):
                blank = {"index": seg.index, "headword": seg.headword}
                if include_answers:
                    blank["expected_surface"] = seg.expected_surface
                segments.append({"blank": blank})
            else:
                segments.append({"text": seg})
        return {"segments": segments, "bank": list(self.bank), "warnings": list(self.warnings)}


@dataclass(frozen=True)
class BlankResult:
    index: int
    submitted: str
    correct: bool


@dataclass(frozen=True)
class ClozeResult:
    per_blank: tuple[BlankResult, ...]
    all_correct: bool

    def to_dict(self) -> dict:
        return {
            "per_blank": [
                {"index": b.index, "submitted": b.submitted, "correct": b.correct}
                for b in self.per_blank
            ],
            "all_correct": self.all_correct,
        }


def build_cloze(
    material: Sequence[str],
    words: Sequence[str],
    rng: random.Random,
) -> ClozeTest:
    """Blank every occurrence of every target word in the material.

    The word bank is a seeded shuffle of the distinct blanked headwords;
    target words that never occur are surfaced as warnings, not errors.
    """
    joined = " ".join(material)
    index = SurfaceIndex(words)
    segments: list[str | Blank] = []
    cursor = 0
    blank_index = 0
    seen: set[str] = set()
    for occ in find_occurrences(joined, index):
        if occ.start > cursor:
            segments.append(joined[cursor : occ.start])
        segments.append(
            Blank(index=blank_index, expected_surface=occ.surface, headword=occ.headword)
        )
        seen.add(occ.headword)
        cursor = occ.end
        blank_index += 1
    if cursor < len(joined):
        segments.append(joined[cursor:])
    bank = sorted(seen)
    rng.shuffle(bank)
    warnings = tuple(w.lower() for w in words if w.lower() not in seen)
    return ClozeTest(segments=tuple(segments), bank=tuple(bank), warnings=warnings)


def check_cloze(test: ClozeTest, submission: Mapping[int, str]) -> ClozeResult:
    """Compare each submitted answer against the removed surface form,
    case-insensitively and ignoring surrounding whitespace."""
    results = []
    for blank in test.blanks:
        if blank.index not in submission:
            raise KeyError(f"missing answer for blank {blank.index}")
        submitted = submission[blank.index]
        correct = submitted.strip().lower() == blank.expected_surface.strip().lower()
        results.append(BlankResult(index=blank.index, submitted=submitted, correct=correct))
    return ClozeResult(per_blank=tuple(results), all_correct=all(r.correct for r in results))


# ---------------------------------------------------------------------------
# Turn-taking writing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Turn:
    author: Author
    text: str
    words_used: frozenset[str]


@dataclass
class WritingSession:
    title: str
    target_words: tuple[str, ...]
    turns: list[Turn] = field(default_factory=list)
    unused: set[str] = field(default_factory=set)
    grammar_alerts: list[list[dict]] = field(default_factory=list)
    human_word_count: int = 0
    machine_word_count: int = 0

    @property
    def sentences(self) -> list[str]:
        return [t.text for t in self.turns]

    @property
    def complete(self) -> bool:
        return not self.unused

    def to_dict(self) -> dict:
        return {
            "title": self.title,
            "target_words": list(self.target_words),
            "turns": [
                {"author": t.author.value, "text": t.text, "words_used": sorted(t.words_used)}
                for t in self.turns
            ],
            "unused": sorted(self.unused),
            "grammar_alerts": self.grammar_alerts,
            "human_word_count": self.human_word_count,
            "machine_word_count": self.machine_word_count,
        }


def begin_writing(words: Sequence[str], title: str = "") -> WritingSession:
    """Fresh co-writing state: no turns yet, every target word unused."""
    target = tuple(w.lower() for w in words)
    return WritingSession(title=title, target_words=target, unused=set(target))


def _words_in(text_value: str, words: Sequence[str]) -> frozenset[str]:
    index = SurfaceIndex(words)
    return frozenset(occ.headword for occ in find_occurrences(text_value, index))


def _append_turn(
    ws: WritingSession,
    author: Author,
    text_value: str,
    alerts: list[dict],
    human_tokens: int,
    machine_tokens: int,
) -> None:
    used = _words_in(text_value, ws.target_words)
    ws.turns.append(Turn(author=author, text=text_value, words_used=used))
    ws.grammar_alerts.append(alerts)
    ws.unused -= used
    ws.human_word_count += human_tokens
    ws.machine_word_count += machine_tokens


def writing_stats(ws: WritingSession) -> dict:
    """Projection shown to the learner: word-usage and effort counters."""
    return {
        "used_count": len(ws.target_words) - len(ws.unused),
        "unused_count": len(ws.unused),
        "human_words": ws.human_word_count,
        "machine_words": ws.machine_word_count,
        "complete": ws.complete,
    }


# ---------------------------------------------------------------------------
# Events and state
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Event:
    ts: float
    session_id: str
    kind: str
    payload: dict

    def to_dict(self) -> dict:
        return {"ts": self.ts, "session_id": self.session_id, "kind": self.kind, "payload": self.payload}

    @classmethod
    def from_dict(cls, record: Mapping) -> "Event":
        return cls(
            ts=record["ts"],
            session_id=record["session_id"],
            kind=record["kind"],
            payload=dict(record["payload"]),
        )


KIND_SESSION_START = "session_start"
KIND_STEP_ENTER = "step_enter"
KIND_STEP_EXIT = "step_exit"
KIND_CLOZE_SUBMIT = "cloze_submit"
KIND_TURN = "turn"
KIND_SUGGESTION_SHOWN = "suggestion_shown"
KIND_SUGGESTION_ACCEPTED = "suggestion_accepted"
KIND_FINISH_EARLY = "finish_early"


@dataclass
class SessionState:
    session_id: str
    mode: Mode
    step: Step
    title: str
    word_set: tuple[str, ...]
    material: tuple[str, ...]
    material_kind: str  # "story" | "examples"
    cloze_seed: int
    fallback: bool  # material fell back to examples after a backend failure
    cloze: ClozeTest | None = None
    cloze_submissions: int = 0
    last_cloze: ClozeResult | None = None
    writing: WritingSession | None = None
    finish_early: bool = False
    timers: dict[str, float] = field(default_factory=dict)
    step_entered_at: float | None = None
    log: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "mode": self.mode.value,
            "step": self.step.value,
            "title": self.title,
            "word_set": list(self.word_set),
            "material": list(self.material),
            "material_kind": self.material_kind,
            "cloze_seed": self.cloze_seed,
            "fallback": self.fallback,
            "cloze": self.cloze.to_dict() if self.cloze else None,
            "cloze_submissions": self.cloze_submissions,
            "last_cloze": self.last_cloze.to_dict() if self.last_cloze else None,
            "writing": self.writing.to_dict() if self.writing else None,
            "finish_early": self.finish_early,
            "timers": dict(self.timers),
            "step_entered_at": self.step_entered_at,
            "log": self.log,
        }

    def canonical_json(self) -> str:
        """Stable serialization used for replay-equivalence comparisons."""
        return json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False)


def next_step(state: SessionState) -> Step:
    if state.step is Step.DONE:
        raise SessionFlowError("session is already done")
    if state.step is Step.READ and not state.mode.interactive:
        return Step.DONE
    return _STEP_ORDER[_STEP_ORDER.index(state.step) + 1]


def apply_event(state: SessionState | None, event: Event) -> SessionState:
    """Fold one event into the state. Pure with respect to the event stream:
    no clocks, no randomness beyond the seeds carried in payloads."""
    kind = event.kind
    payload = event.payload

    if kind == KIND_SESSION_START:
        if state is not None:
            raise SessionFlowError(f"duplicate session_start for {event.session_id}")
        mode = Mode(payload["mode"])
        words = tuple(payload["words"])
        material = tuple(payload["material"])
        new = SessionState(
            session_id=event.session_id,
            mode=mode,
            step=Step.READ,
            title=payload.get("title") or "",
            word_set=words,
            material=material,
            material_kind=payload["material_kind"],
            cloze_seed=payload["cloze_seed"],
            fallback=payload.get("fallback", False),
        )
        if mode.interactive:
            new.cloze = build_cloze(material, words, random.Random(new.cloze_seed))
        new.log.append(event.to_dict())
        return new

    if state is None:
        raise SessionFlowError(f"event {kind} for unknown session {event.session_id}")
    state.log.append(event.to_dict())

    if kind == KIND_STEP_ENTER:
        step = Step(payload["step"])
        state.step = step
        state.step_entered_at = event.ts if step is not Step.DONE else None
        if step is Step.WRITE and state.writing is None:
            state.writing = begin_writing(state.word_set, state.title)
    elif kind == KIND_STEP_EXIT:
        step = Step(payload["step"])
        if state.step_entered_at is not None:
            state.timers[step.value] = state.timers.get(step.value, 0.0) + (
                event.ts - state.step_entered_at
            )
        state.step_entered_at = None
    elif kind == KIND_CLOZE_SUBMIT:
        assert state.cloze is not None
        answers = {int(k): v for k, v in payload["answers"].items()}
        state.last_cloze = check_cloze(state.cloze, answers)
        state.cloze_submissions += 1
    elif kind == KIND_TURN:
        assert state.writing is not None
        author = Author(payload["author"])
        tokens = len(tokenize(payload["text"]))
        human = tokens if author is Author.HUMAN else 0
        machine = tokens if author is Author.MACHINE else 0
        _append_turn(
            state.writing, author, payload["text"], payload.get("alerts", []), human, machine
        )
    elif kind == KIND_SUGGESTION_SHOWN:
        pass  # advisory only; logged for the activity record
    elif kind == KIND_SUGGESTION_ACCEPTED:
        assert state.writing is not None
        prefix = payload["prefix"]
        span = payload["span"]
        _append_turn(
            state.writing,
            Author.MACHINE_ASSISTED,
            prefix + span,
            payload.get("alerts", []),
            human_tokens=len(tokenize(prefix)),
            machine_tokens=len(tokenize(span)),
        )
    elif kind == KIND_FINISH_EARLY:
        state.finish_early = True
    else:
        raise SessionFlowError(f"unknown event kind {kind!r}")
    return state


# ---------------------------------------------------------------------------
# Commands: validate against current state, emit events
# ---------------------------------------------------------------------------


def start_events(
    session_id: str,
    mode: Mode,
    words: Sequence[str],
    title: str,
    material: Sequence[str],
    material_kind: str,
    cloze_seed: int,
    ts: float,
    fallback: bool = False,
) -> list[Event]:
    payload = {
        "mode": mode.value,
        "words": [w.lower() for w in words],
        "title": title,
        "material": list(material),
        "material_kind": material_kind,
        "cloze_seed": cloze_seed,
        "fallback": fallback,
    }
    return [
        Event(ts=ts, session_id=session_id, kind=KIND_SESSION_START, payload=payload),
        Event(ts=ts, session_id=session_id, kind=KIND_STEP_ENTER, payload={"step": Step.READ.value}),
    ]


def advance_events(state: SessionState, ts: float) -> list[Event]:
    """Move one step forward, closing the finished activity's timer.

    Gates: the cloze step requires at least one submission; the write step
    requires every target word used or an explicit finish-early event.
    """
    target = next_step(state)
    if state.step is Step.CLOZE and state.cloze_submissions < 1:
        raise SessionFlowError("cannot leave cloze before submitting at least once")
    if state.step is Step.WRITE:
        assert state.writing is not None
        if not state.writing.complete and not state.finish_early:
            raise SessionFlowError("cannot finish writing with unused target words")
    sid = state.session_id
    return [
        Event(ts=ts, session_id=sid, kind=KIND_STEP_EXIT, payload={"step": state.step.value}),
        Event(ts=ts, session_id=sid, kind=KIND_STEP_ENTER, payload={"step": target.value}),
    ]


def cloze_submit_events(state: SessionState, answers: Mapping[int, str], ts: float) -> list[Event]:
    if state.step is not Step.CLOZE:
        raise SessionFlowError(f"cloze submission during step {state.step.value}")
    assert state.cloze is not None
    check_cloze(state.cloze, answers)  # validates completeness before logging
    payload = {"answers": {str(k): v for k, v in answers.items()}}
    return [Event(ts=ts, session_id=state.session_id, kind=KIND_CLOZE_SUBMIT, payload=payload)]


def human_turn_events(
    state: SessionState, text_value: str, checker: GrammarChecker, ts: float
) -> list[Event]:
    if state.step is not Step.WRITE:
        raise SessionFlowError(f"writing turn during step {state.step.value}")
    if not text_value.strip():
        raise ValueError("empty turn text")
    alerts = [issue.to_dict() for issue in checker.check(text_value)]
    payload = {"author": Author.HUMAN.value, "text": text_value, "alerts": alerts}
    return [Event(ts=ts, session_id=state.session_id, kind=KIND_TURN, payload=payload)]


def machine_turn_events(
    state: SessionState, backend: genclient.GenerationBackend, ts: float
) -> list[Event]:
    """Ask the backend for the next sentence. The generated text rides in the
    event payload so replay never re-contacts the backend."""
    if state.step is not Step.WRITE:
        raise SessionFlowError(f"writing turn during step {state.step.value}")
    ws = state.writing
    assert ws is not None
    if not ws.turns:
        raise SessionFlowError("the learner writes the first sentence")
    if not ws.unused:
        raise ValueError("no unused target words left for a machine turn")
    result = genclient.next_sentence(backend, ws.title or None, ws.sentences, sorted(ws.unused))
    payload = {
        "author": Author.MACHINE.value,
        "text": result.text,
        "alerts": [],
        "coverage_complete": result.coverage_complete,
    }
    return [Event(ts=ts, session_id=state.session_id, kind=KIND_TURN, payload=payload)]


def suggestion_events(
    state: SessionState, prefix: str, backend: genclient.GenerationBackend, ts: float
) -> tuple[str, list[Event]]:
    """Fetch an inline completion for ``prefix``. Advisory: nothing is
    appended until the learner accepts. Returns (span, events)."""
    if state.step is not Step.WRITE:
        raise SessionFlowError(f"suggestion during step {state.step.value}")
    ws = state.writing
    assert ws is not None
    result = genclient.infill(
        backend,
        preceding=ws.sentences,
        following=[],
        unused_words=sorted(ws.unused),
        title=ws.title or None,
        prefix=prefix,
    )
    span = result.sentences[0]
    payload = {"prefix": prefix, "span": span}
    return span, [
        Event(ts=ts, session_id=state.session_id, kind=KIND_SUGGESTION_SHOWN, payload=payload)
    ]


def accept_suggestion_events(
    state: SessionState, prefix: str, span: str, checker: GrammarChecker, ts: float
) -> list[Event]:
    """Accepted suggestion becomes a machine-assisted turn: the prefix counts
    as human words, the span as machine words."""
    if state.step is not Step.WRITE:
        raise SessionFlowError(f"suggestion accept during step {state.step.value}")
    ws = state.writing
    assert ws is not None
    if not ws.turns and not prefix.strip():
        raise SessionFlowError("the learner writes the first sentence")
    if not (prefix + span).strip():
        raise ValueError("empty accepted suggestion")
    alerts = [issue.to_dict() for issue in checker.check(prefix + span)]
    payload = {"prefix": prefix, "span": span, "alerts": alerts}
    return [
        Event(ts=ts, session_id=state.session_id, kind=KIND_SUGGESTION_ACCEPTED, payload=payload)
    ]


def finish_early_events(state: SessionState, ts: float) -> list[Event]:
    if state.step is not Step.WRITE:
        raise SessionFlowError(f"finish-early during step {state.step.value}")
    return [Event(ts=ts, session_id=state.session_id, kind=KIND_FINISH_EARLY, payload={})]


# ---------------------------------------------------------------------------
# Library-style wrappers (no store): validate, emit, apply
# ---------------------------------------------------------------------------


def _apply_all(state: SessionState | None, events: Sequence[Event]) -> SessionState:
    for event in events:
        state = apply_event(state, event)
    assert state is not None
    return state


def start_session(
    word_set: Sequence[str],
    mode: Mode | str,
    *,
    backend: genclient.GenerationBackend | None = None,
    examples: Sequence[str] | None = None,
    title: str = "",
    session_id: str | None = None,
    cloze_seed: int = 0,
    clock: Clock = time.time,
) -> SessionState:
    """Create a session at the read step.

    Generative modes take their material from the backend (falling back to
    the example sentences, flagged, if the backend fails and examples are
    available); sentence modes read the per-word usage examples directly.
    """
    mode = Mode(mode)
    sid = session_id or uuid.uuid4().hex
    fallback = False
    if mode.generative:
        if backend is None:
            raise ValueError(f"mode {mode.value} requires a generation backend")
        try:
            story = genclient.generate_story(backend, title or None, list(word_set))
            material: Sequence[str] = story.sentences
            material_kind = "story"
        except genclient.BackendError:
            if examples is None:
                raise
            material = examples
            material_kind = "examples"
            fallback = True
    else:
        if examples is None:
            raise ValueError(f"mode {mode.value} requires per-word example sentences")
        material = examples
        material_kind = "examples"
    events = start_events(
        sid, mode, word_set, title, material, material_kind, cloze_seed, clock(), fallback
    )
    return _apply_all(None, events)


def advance(state: SessionState, clock: Clock = time.time) -> SessionState:
    return _apply_all(state, advance_events(state, clock()))


def submit_cloze(
    state: SessionState, answers: Mapping[int, str], clock: Clock = time.time
) -> ClozeResult:
    state = _apply_all(state, cloze_submit_events(state, answers, clock()))
    assert state.last_cloze is not None
    return state.last_cloze


def submit_human_turn(
    state: SessionState, text_value: str, checker: GrammarChecker, clock: Clock = time.time
) -> SessionState:
    return _apply_all(state, human_turn_events(state, text_value, checker, clock()))


def machine_turn(
    state: SessionState, backend: genclient.GenerationBackend, clock: Clock = time.time
) -> SessionState:
    return _apply_all(state, machine_turn_events(state, backend, clock()))


def inline_suggestion(
    state: SessionState, prefix: str, backend: genclient.GenerationBackend, clock: Clock = time.time
) -> str:
    span, events = suggestion_events(state, prefix, backend, clock())
    _apply_all(state, events)
    return span


def accept_suggestion(
    state: SessionState,
    prefix: str,
    span: str,
    checker: GrammarChecker,
    clock: Clock = time.time,
) -> SessionState:
    return _apply_all(state, accept_suggestion_events(state, prefix, span, checker, clock()))


def finish_early(state: SessionState, clock: Clock = time.time) -> SessionState:
    return _apply_all(state, finish_early_events(state, clock()))
