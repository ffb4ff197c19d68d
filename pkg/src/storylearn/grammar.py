"""Grammar-check clients: a LanguageTool-protocol HTTP client plus offline stubs."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Protocol, Sequence

import httpx


class CheckerUnavailable(RuntimeError):
    """The grammar service could not be reached or answered garbage."""


@dataclass(frozen=True)
class GrammarIssue:
    message: str
    offset: int
    length: int
    rule: str | None = None

    def to_dict(self) -> dict:
        return {"message": self.message, "offset": self.offset, "length": self.length, "rule": self.rule}


class GrammarChecker(Protocol):
    def check(self, text: str) -> list[GrammarIssue]: ...


class NullChecker:
    """Never flags anything; the no-error stub used in tests and offline runs."""

    def check(self, text: str) -> list[GrammarIssue]:
        return []


class PatternChecker:
    """Flags regex patterns; handy as a scripted stand-in for a real service."""

    def __init__(self, patterns: dict[str, str]):
        self._rules = [(re.compile(pat), msg) for pat, msg in patterns.items()]

    def check(self, text: str) -> list[GrammarIssue]:
        issues = []
        for regex, message in self._rules:
            for match in regex.finditer(text):
                issues.append(
                    GrammarIssue(
                        message=message,
                        offset=match.start(),
                        length=match.end() - match.start(),
                        rule=regex.pattern,
                    )
                )
        issues.sort(key=lambda i: (i.offset, i.length))
        return issues


class LanguageToolChecker:
    """Client for the LanguageTool HTTP check endpoint (POST <base>/v2/check)."""

    def __init__(
        self,
        base_url: str,
        language: str = "en-US",
        timeout: float = 30.0,
        client: httpx.Client | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.language = language
        self._client = client or httpx.Client(timeout=timeout)

    def check(self, text: str) -> list[GrammarIssue]:
        try:
            response = self._client.post(
                f"{self.base_url}/v2/check",
                data={"text": text, "language": self.language},
            )
        except httpx.HTTPError as exc:
            raise CheckerUnavailable(f"grammar check failed: {exc}") from exc
        if response.status_code != 200:
            raise CheckerUnavailable(f"grammar service returned HTTP {response.status_code}")
        try:
            matches = response.json().get("matches", [])
        except ValueError as exc:
            raise CheckerUnavailable("grammar service returned non-JSON body") from exc
        issues = []
        for m in matches:
            issues.append(
                GrammarIssue(
                    message=str(m.get("message", "")),
                    offset=int(m.get("offset", 0)),
                    length=int(m.get("length", 0)),
                    rule=(m.get("rule") or {}).get("id"),
                )
            )
        return issues


def issues_from_dicts(records: Sequence[dict]) -> list[GrammarIssue]:
    """Rebuild issues from their JSON form (event-log payloads)."""
    return [
        GrammarIssue(
            message=r["message"], offset=r["offset"], length=r["length"], rule=r.get("rule")
        )
        for r in records
    ]
