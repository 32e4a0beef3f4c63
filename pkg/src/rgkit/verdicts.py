"""Check outcomes: PASS, FAIL with a replayable witness, or a diagnostic."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any


@dataclass
class Verdict:
    result: str  # "PASS" | "FAIL" | "DIAGNOSTIC"
    check: str = ""
    clause: str | None = None  # which condition failed / diagnostic kind
    witness: Any = None
    universe: str | None = None
    node_count: int | None = None
    detail: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.result == "PASS"

    @property
    def failed(self) -> bool:
        return self.result == "FAIL"

    @property
    def diagnostic(self) -> bool:
        return self.result == "DIAGNOSTIC"

    def __bool__(self) -> bool:  # guard against `if verdict:` mistakes
        raise TypeError("use .passed / .failed explicitly")


def ok(check: str, **kw) -> Verdict:
    return Verdict("PASS", check, **kw)


def fail(check: str, clause: str, witness: Any = None, **kw) -> Verdict:
    return Verdict("FAIL", check, clause=clause, witness=witness, **kw)


def diag(check: str, kind: str, **kw) -> Verdict:
    return Verdict("DIAGNOSTIC", check, clause=kind, **kw)
