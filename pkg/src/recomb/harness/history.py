"""Recorded concurrent executions: events, histories, and the JSONL trace format."""

from __future__ import annotations

import json
from dataclasses import dataclass


@dataclass(frozen=True)
class Event:
    step: int
    thread: int | None
    kind: str          # invoke | respond | crash | recover_invoke | recover_respond
    op: str | None = None
    arg: int | None = None
    seq: int | None = None
    value: int | None = None

    def as_dict(self) -> dict:
        return {
            "step": self.step,
            "thread": self.thread,
            "kind": self.kind,
            "op": self.op,
            "args": self.arg,
            "seq": self.seq,
            "value": self.value,
        }


class History(list):
    """Ordered event list with trace serialization."""

    def to_jsonl(self) -> str:
        return "\n".join(json.dumps(ev.as_dict(), sort_keys=True) for ev in self) + "\n"

    def write_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_jsonl())

    def key(self) -> tuple:
        """Canonical identity, used to dedupe equivalent runs."""
        return tuple((ev.thread, ev.kind, ev.op, ev.arg, ev.seq, ev.value) for ev in self)

    @property
    def crashed(self) -> bool:
        return any(ev.kind == "crash" for ev in self)
