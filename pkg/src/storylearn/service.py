"""HTTP service exposing sessions, dictionary, word selection, and the study API.

All mutating endpoints funnel through one path: validate the command against
the in-memory state, persist the resulting events, then apply them. A lock
per session serializes its mutations; distinct sessions proceed in parallel.
Write endpoints are idempotent under a client-supplied ``request_id``.
"""

from __future__ import annotations

import json
import logging
import os
import random
import threading
import time
import uuid
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from fastapi import Body, FastAPI, HTTPException, Query

from . import genclient, session as sess, study
from .grammar import GrammarChecker, LanguageToolChecker, NullChecker
from .lexicon import VocabPool, WordNotFoundError, load_vocab, lookup, sample_word_set
from .session import Mode, SessionState, Step
from .store import EventStore, load_sessions
from .study import PosttestRecord
from .wordselect import EmbeddingProvider, FileEmbeddingProvider, HashingEmbeddingProvider, rank_by_title

log = logging.getLogger(__name__)

ENV_PREFIX = "STORYLEARN_"


@dataclass
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8000
    generation_url: str | None = None
    grammar_url: str | None = None
    embedding_file: str | None = None
    vocab_file: str = ""
    data_dir: str = "./data"
    template_backend: bool = False

    def __post_init__(self):
        if not self.template_backend and not self.generation_url:
            raise ValueError("either a generation backend URL or the template backend is required")

    @classmethod
    def from_sources(cls, config_file: str | None = None, env: dict | None = None, **overrides):
        """Config-file keys mirror the field names; env vars use the
        STORYLEARN_ prefix; explicit overrides win."""
        values: dict = {}
        if config_file:
            values.update(json.loads(Path(config_file).read_text(encoding="utf-8")))
        environ = env if env is not None else os.environ
        for name in cls.__dataclass_fields__:
            key = ENV_PREFIX + name.upper()
            if key in environ:
                raw = environ[key]
                if name == "port":
                    values[name] = int(raw)
                elif name == "template_backend":
                    values[name] = raw.lower() in ("1", "true", "yes")
                else:
                    values[name] = raw
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


class Runtime:
    """Shared service state: pool, backends, store, and live sessions."""

    def __init__(self, config: ServiceConfig):
        self.config = config
        with open(config.vocab_file, encoding="utf-8") as fh:
            self.pool: VocabPool = load_vocab(fh)
        if config.template_backend:
            self.backend: genclient.GenerationBackend = genclient.TemplateBackend()
        else:
            assert config.generation_url is not None
            self.backend = genclient.HttpBackend(config.generation_url)
        self.checker: GrammarChecker = (
            LanguageToolChecker(config.grammar_url) if config.grammar_url else NullChecker()
        )
        if config.embedding_file:
            with open(config.embedding_file, encoding="utf-8") as fh:
                self.provider: EmbeddingProvider = FileEmbeddingProvider.load(fh)
        else:
            self.provider = HashingEmbeddingProvider()
        self.store = EventStore(config.data_dir)
        self.sessions: dict[str, SessionState] = load_sessions(self.store)
        self.locks: defaultdict[str, threading.Lock] = defaultdict(threading.Lock)
        self.request_cache: dict[str, dict] = {}
        self._cache_lock = threading.Lock()
        self._events_since_snapshot = 0

    def commit(self, events: Sequence[sess.Event]) -> SessionState:
        """Persist then apply a batch of events for one session."""
        state = self.sessions.get(events[0].session_id)
        for event in events:
            self.store.append(event)
            state = sess.apply_event(state, event)
        assert state is not None
        self.sessions[state.session_id] = state
        self._events_since_snapshot += len(events)
        if self._events_since_snapshot >= self.store.snapshot_every:
            self.store.write_snapshot(self.sessions)
            self._events_since_snapshot = 0
        return state

    def get_session(self, session_id: str) -> SessionState:
        state = self.sessions.get(session_id)
        if state is None:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id!r}")
        return state

    def cached_response(self, request_id: str | None) -> dict | None:
        if not request_id:
            return None
        with self._cache_lock:
            return self.request_cache.get(request_id)

    def cache_response(self, request_id: str | None, response: dict) -> dict:
        if request_id:
            with self._cache_lock:
                self.request_cache[request_id] = response
        return response


def _session_view(state: SessionState) -> dict:
    """Public session representation: everything the UI needs, minus cloze
    answers (correctness is the server's job)."""
    view = {
        "session_id": state.session_id,
        "mode": state.mode.value,
        "step": state.step.value,
        "title": state.title,
        "word_set": list(state.word_set),
        "material": list(state.material),
        "material_kind": state.material_kind,
        "fallback": state.fallback,
        "timers": dict(state.timers),
        "cloze_submissions": state.cloze_submissions,
    }
    if state.writing is not None:
        ws = state.writing
        view["writing"] = {
            "turns": [{"author": t.author.value, "text": t.text} for t in ws.turns],
            "grammar_alerts": ws.grammar_alerts,
            "stats": sess.writing_stats(ws),
        }
    else:
        view["writing"] = None
    return view


def _highlight_spans(state: SessionState) -> list[dict]:
    """Target word occurrences in the reading material, for UI highlighting."""
    from .text import SurfaceIndex, find_occurrences

    joined = " ".join(state.material)
    index = SurfaceIndex(state.word_set)
    return [
        {"headword": occ.headword, "start": occ.start, "end": occ.end, "surface": occ.surface}
        for occ in find_occurrences(joined, index)
    ]


def create_app(config: ServiceConfig) -> FastAPI:
    runtime = Runtime(config)
    app = FastAPI(title="storylearn", version="0.1.0")
    app.state.runtime = runtime

    def domain_error(exc: Exception) -> HTTPException:
        return HTTPException(status_code=409, detail=str(exc))

    @app.get("/healthz")
    def healthz():
        return {
            "status": "ok",
            "vocab_words": len(runtime.pool),
            "backend": "template" if config.template_backend else config.generation_url,
            "grammar": config.grammar_url or "disabled",
            "sessions": len(runtime.sessions),
        }

    @app.get("/api/dictionary/{word}")
    def dictionary(word: str):
        try:
            entry = lookup(runtime.pool, word)
        except WordNotFoundError:
            raise HTTPException(status_code=404, detail=f"unknown word {word!r}")
        return {
            "headword": entry.headword,
            "definition": entry.definition,
            "pos": entry.pos,
            "phonetic": entry.phonetic,
            "example": entry.example,
            "gloss_zh": entry.gloss_zh,
            "rank": entry.rank,
        }

    @app.get("/api/wordsets/sample")
    def wordsets_sample(k: int = Query(5, ge=1), exclude: str = "", seed: int | None = None):
        rng = random.Random(seed)
        excluded = [w for w in exclude.split(",") if w.strip()]
        try:
            ws = sample_word_set(runtime.pool, k, rng, excluded)
        except ValueError as exc:
            raise domain_error(exc)
        return {"words": list(ws.words)}

    @app.get("/api/wordsets/rank")
    def wordsets_rank(title: str, k: int = Query(5, ge=1)):
        try:
            ranked = rank_by_title(title, runtime.pool, k, runtime.provider)
        except (ValueError, KeyError) as exc:
            raise domain_error(exc)
        return {"title": title, "words": ranked}

    @app.post("/api/sessions")
    def create_session(body: dict = Body(...)):
        request_id = body.get("request_id")
        if cached := runtime.cached_response(request_id):
            return cached
        try:
            mode = Mode(body["mode"])
        except (KeyError, ValueError):
            raise HTTPException(status_code=422, detail="body requires a valid 'mode'")
        title = body.get("title") or ""
        seed = body.get("seed")
        rng = random.Random(seed)
        words = body.get("word_set") or body.get("words")
        if words is None:
            words = list(sample_word_set(runtime.pool, int(body.get("k", 5)), rng).words)
        words = [w.lower() for w in words]
        missing = [w for w in words if w not in runtime.pool]
        if missing:
            raise HTTPException(status_code=422, detail=f"words not in pool: {missing}")
        examples = [lookup(runtime.pool, w).example for w in words]
        session_id = body.get("session_id") or uuid.uuid4().hex
        cloze_seed = seed if seed is not None else rng.randrange(2**31)
        with runtime.locks[session_id]:
            if session_id in runtime.sessions:
                raise HTTPException(status_code=409, detail=f"session {session_id!r} exists")
            fallback = False
            if mode.generative:
                try:
                    story = genclient.generate_story(runtime.backend, title or None, words)
                    material: Sequence[str] = story.sentences
                    material_kind = "story"
                except genclient.BackendError as exc:
                    log.warning("generation backend failed, serving examples: %s", exc)
                    material = examples
                    material_kind = "examples"
                    fallback = True
            else:
                material = examples
                material_kind = "examples"
            events = sess.start_events(
                session_id, mode, words, title, material, material_kind, cloze_seed,
                time.time(), fallback,
            )
            state = runtime.commit(events)
        return runtime.cache_response(request_id, _session_view(state))

    @app.get("/api/sessions/{session_id}")
    def get_session(session_id: str):
        return _session_view(runtime.get_session(session_id))

    @app.get("/api/sessions/{session_id}/reading")
    def get_reading(session_id: str):
        state = runtime.get_session(session_id)
        return {
            "material": list(state.material),
            "material_kind": state.material_kind,
            "text": " ".join(state.material),
            "highlights": _highlight_spans(state),
        }

    @app.post("/api/sessions/{session_id}/advance")
    def advance(session_id: str, body: dict = Body(default={})):
        request_id = body.get("request_id")
        if cached := runtime.cached_response(request_id):
            return cached
        with runtime.locks[session_id]:
            state = runtime.get_session(session_id)
            try:
                events = sess.advance_events(state, time.time())
            except sess.SessionFlowError as exc:
                raise domain_error(exc)
            state = runtime.commit(events)
        return runtime.cache_response(request_id, _session_view(state))

    @app.get("/api/sessions/{session_id}/cloze")
    def get_cloze(session_id: str):
        state = runtime.get_session(session_id)
        if state.cloze is None:
            raise HTTPException(status_code=404, detail="session has no cloze test")
        return state.cloze.to_dict(include_answers=False)

    @app.post("/api/sessions/{session_id}/cloze")
    def submit_cloze(session_id: str, body: dict = Body(...)):
        request_id = body.get("request_id")
        if cached := runtime.cached_response(request_id):
            return cached
        answers_raw = body.get("answers")
        if not isinstance(answers_raw, dict):
            raise HTTPException(status_code=422, detail="body requires an 'answers' object")
        try:
            answers = {int(k): str(v) for k, v in answers_raw.items()}
        except ValueError:
            raise HTTPException(status_code=422, detail="answer keys must be blank indexes")
        with runtime.locks[session_id]:
            state = runtime.get_session(session_id)
            try:
                events = sess.cloze_submit_events(state, answers, time.time())
            except sess.SessionFlowError as exc:
                raise domain_error(exc)
            except KeyError as exc:
                raise HTTPException(status_code=422, detail=str(exc))
            state = runtime.commit(events)
        assert state.last_cloze is not None
        return runtime.cache_response(request_id, state.last_cloze.to_dict())

    @app.post("/api/sessions/{session_id}/write/turn")
    def write_turn(session_id: str, body: dict = Body(...)):
        request_id = body.get("request_id")
        if cached := runtime.cached_response(request_id):
            return cached
        text_value = body.get("text", "")
        with runtime.locks[session_id]:
            state = runtime.get_session(session_id)
            try:
                events = sess.human_turn_events(state, text_value, runtime.checker, time.time())
            except (sess.SessionFlowError, ValueError) as exc:
                raise domain_error(exc)
            state = runtime.commit(events)
        return runtime.cache_response(request_id, _session_view(state))

    @app.post("/api/sessions/{session_id}/write/machine-turn")
    def write_machine_turn(session_id: str, body: dict = Body(default={})):
        request_id = body.get("request_id")
        if cached := runtime.cached_response(request_id):
            return cached
        with runtime.locks[session_id]:
            state = runtime.get_session(session_id)
            try:
                events = sess.machine_turn_events(state, runtime.backend, time.time())
            except (sess.SessionFlowError, ValueError) as exc:
                raise domain_error(exc)
            except genclient.BackendError as exc:
                raise HTTPException(status_code=502, detail=str(exc))
            state = runtime.commit(events)
        return runtime.cache_response(request_id, _session_view(state))

    @app.post("/api/sessions/{session_id}/write/suggest")
    def write_suggest(session_id: str, body: dict = Body(...)):
        request_id = body.get("request_id")
        if cached := runtime.cached_response(request_id):
            return cached
        prefix = body.get("prefix", "")
        with runtime.locks[session_id]:
            state = runtime.get_session(session_id)
            try:
                span, events = sess.suggestion_events(state, prefix, runtime.backend, time.time())
            except sess.SessionFlowError as exc:
                raise domain_error(exc)
            except genclient.BackendError as exc:
                return runtime.cache_response(
                    request_id, {"prefix": prefix, "suggestion": "", "error": str(exc)}
                )
            runtime.commit(events)
        return runtime.cache_response(
            request_id, {"prefix": prefix, "suggestion": span, "error": None}
        )

    @app.post("/api/sessions/{session_id}/write/accept")
    def write_accept(session_id: str, body: dict = Body(...)):
        request_id = body.get("request_id")
        if cached := runtime.cached_response(request_id):
            return cached
        prefix = body.get("prefix", "")
        span = body.get("suggestion", "")
        with runtime.locks[session_id]:
            state = runtime.get_session(session_id)
            try:
                events = sess.accept_suggestion_events(
                    state, prefix, span, runtime.checker, time.time()
                )
            except (sess.SessionFlowError, ValueError) as exc:
                raise domain_error(exc)
            state = runtime.commit(events)
        return runtime.cache_response(request_id, _session_view(state))

    @app.post("/api/sessions/{session_id}/write/finish-early")
    def write_finish_early(session_id: str, body: dict = Body(default={})):
        request_id = body.get("request_id")
        if cached := runtime.cached_response(request_id):
            return cached
        with runtime.locks[session_id]:
            state = runtime.get_session(session_id)
            try:
                events = sess.finish_early_events(state, time.time())
            except sess.SessionFlowError as exc:
                raise domain_error(exc)
            state = runtime.commit(events)
        return runtime.cache_response(request_id, _session_view(state))

    @app.get("/api/sessions/{session_id}/stats")
    def session_stats(session_id: str):
        state = runtime.get_session(session_id)
        stats = sess.writing_stats(state.writing) if state.writing else None
        return {
            "session_id": session_id,
            "step": state.step.value,
            "timers": dict(state.timers),
            "cloze_submissions": state.cloze_submissions,
            "writing": stats,
        }

    @app.post("/api/study/plan")
    def study_plan(body: dict = Body(...)):
        try:
            plan = study.plan_study(
                participant_id=str(body["participant_id"]),
                sequence=int(body.get("sequence", 0)),
                unknown_words=list(body["unknown_words"]),
                rng=random.Random(body.get("seed")),
            )
        except KeyError as exc:
            raise HTTPException(status_code=422, detail=f"missing field {exc}")
        except study.IneligibleParticipantError as exc:
            raise domain_error(exc)
        return plan.to_dict()

    @app.post("/api/study/posttest")
    def study_posttest(body: dict = Body(...)):
        conditions = body.get("conditions")
        if not isinstance(conditions, dict):
            raise HTTPException(status_code=422, detail="body requires a 'conditions' object")
        outcomes = {}
        for condition, records_raw in conditions.items():
            try:
                records = [
                    PosttestRecord(
                        word=r["word"],
                        choice_correct=bool(r["choice_correct"]),
                        sentence=r.get("sentence", "nothing"),
                        grammar_score=r.get("grammar_score"),
                        context_score=r.get("context_score"),
                    )
                    for r in records_raw
                ]
                outcome = study.score_posttest(records)
            except (KeyError, ValueError) as exc:
                raise HTTPException(status_code=422, detail=f"{condition}: {exc}")
            outcomes[condition] = {
                "correct_choices": outcome.correct_choices,
                "correct_sentences": outcome.correct_sentences,
                "total_sentence_score": outcome.total_sentence_score,
            }
        return {"outcomes": outcomes}

    return app


def serve(config: ServiceConfig) -> None:
    import uvicorn

    uvicorn.run(create_app(config), host=config.host, port=config.port, log_level="info")
