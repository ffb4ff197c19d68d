"""Durable session persistence: append-only event log plus JSON snapshots.

The log is newline-delimited JSON, one persisted event per line, with a
strictly consecutive sequence number. Replaying a log folds the events
through the session module's ``apply_event``, which reconstructs exactly
the states a live run produced.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .session import Event, SessionState, apply_event

LOG_NAME = "events.ndjson"
SNAPSHOT_NAME = "snapshot.json"


class StoreCorruptionError(RuntimeError):
    """Log gap or undecodable record; carries the offending sequence number."""

    def __init__(self, message: str, seq: int):
        super().__init__(message)
        self.seq = seq


@dataclass(frozen=True)
class PersistedEvent:
    seq: int
    event: Event

    def to_dict(self) -> dict:
        record = self.event.to_dict()
        record["seq"] = self.seq
        return record


class EventStore:
    """Append-only store rooted at a data directory."""

    def __init__(self, data_dir: str | Path, snapshot_every: int = 100):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.log_path = self.data_dir / LOG_NAME
        self.snapshot_path = self.data_dir / SNAPSHOT_NAME
        self.snapshot_every = snapshot_every
        self._seq = self._last_seq()

    def _last_seq(self) -> int:
        last = 0
        if self.log_path.exists():
            with self.log_path.open(encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        last = json.loads(line)["seq"]
        return last

    def append(self, event: Event) -> PersistedEvent:
        self._seq += 1
        persisted = PersistedEvent(seq=self._seq, event=event)
        with self.log_path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(persisted.to_dict(), ensure_ascii=False))
            fh.write("\n")
        return persisted

    def read_all(self) -> list[PersistedEvent]:
        """Load and validate the full log; sequence numbers must be
        consecutive starting at 1."""
        if not self.log_path.exists():
            return []
        events = []
        expected = 1
        with self.log_path.open(encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                    seq = record["seq"]
                    event = Event.from_dict(record)
                except (ValueError, KeyError) as exc:
                    raise StoreCorruptionError(
                        f"corrupt record at sequence {expected}: {exc}", seq=expected
                    ) from exc
                if seq != expected:
                    raise StoreCorruptionError(
                        f"sequence gap: expected {expected}, found {seq}", seq=seq
                    )
                events.append(PersistedEvent(seq=seq, event=event))
                expected += 1
        return events

    def write_snapshot(self, states: dict[str, SessionState]) -> None:
        payload = {
            "seq": self._seq,
            "sessions": {sid: state.to_dict() for sid, state in states.items()},
        }
        tmp = self.snapshot_path.with_suffix(".tmp")
        tmp.write_text(json.dumps(payload, ensure_ascii=False, sort_keys=True), encoding="utf-8")
        tmp.replace(self.snapshot_path)

    @property
    def seq(self) -> int:
        return self._seq


def replay(events: Iterable[PersistedEvent]) -> dict[str, SessionState]:
    """Fold persisted events into per-session states."""
    states: dict[str, SessionState] = {}
    for persisted in events:
        event = persisted.event
        states[event.session_id] = apply_event(states.get(event.session_id), event)
    return states


def load_sessions(store: EventStore) -> dict[str, SessionState]:
    return replay(store.read_all())
