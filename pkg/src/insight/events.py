"""Append-only event log shared by the kernel and the pentest session.

Records are totally ordered by `seq`. Serialization is deterministic
(sorted keys) so two runs with the same seed and script produce identical
logs once `wall_time` is stripped.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

KINDS = (
    "syscall",
    "connect",
    "exploit_attempt",
    "exploit_result",
    "agent_installed",
    "machine_crash",
    "module_start",
    "module_end",
)


@dataclass(frozen=True)
class EventRecord:
    seq: int
    wall_time: float
    sim_time: int
    kind: str
    machine: Optional[str] = None
    pid: Optional[int] = None
    details: dict = field(default_factory=dict)

    def to_json(self, include_wall_time: bool = True) -> str:
        d = {
            "seq": self.seq,
            "sim_time": self.sim_time,
            "kind": self.kind,
            "machine": self.machine,
            "pid": self.pid,
            "details": self.details,
        }
        if include_wall_time:
            d["wall_time"] = self.wall_time
        return json.dumps(d, sort_keys=True)

    @staticmethod
    def from_json(line: str) -> "EventRecord":
        d = json.loads(line)
        return EventRecord(
            seq=d["seq"],
            wall_time=d.get("wall_time", 0.0),
            sim_time=d["sim_time"],
            kind=d["kind"],
            machine=d.get("machine"),
            pid=d.get("pid"),
            details=d.get("details", {}),
        )


class EventLog:
    """Ordered, append-only in-memory log with optional JSONL persistence."""

    def __init__(self, path: Optional[str] = None):
        self.records: list[EventRecord] = []
        self._next_seq = 0
        self._path = path
        self._fh = open(path, "a", encoding="utf-8") if path else None
        self._listeners: list[Callable[[EventRecord], None]] = []

    def emit(self, sim_time: int, kind: str, machine=None, pid=None, **details) -> EventRecord:
        if kind not in KINDS:
            raise ValueError(f"unknown event kind {kind!r}")
        rec = EventRecord(
            seq=self._next_seq,
            wall_time=time.time(),
            sim_time=sim_time,
            kind=kind,
            machine=machine,
            pid=pid,
            details=details,
        )
        self._next_seq += 1
        self.records.append(rec)
        if self._fh:
            self._fh.write(rec.to_json() + "\n")
            self._fh.flush()
        for fn in list(self._listeners):
            fn(rec)
        return rec

    def subscribe(self, fn: Callable[[EventRecord], None]) -> None:
        self._listeners.append(fn)

    def unsubscribe(self, fn: Callable[[EventRecord], None]) -> None:
        if fn in self._listeners:
            self._listeners.remove(fn)

    def query(
        self,
        kind: Optional[str] = None,
        machine: Optional[str] = None,
        since_seq: Optional[int] = None,
        sim_time_range: Optional[tuple[int, int]] = None,
    ) -> list[EventRecord]:
        """Matching records in seq order."""
        out = []
        for rec in self.records:
            if kind is not None and rec.kind != kind:
                continue
            if machine is not None and rec.machine != machine:
                continue
            if since_seq is not None and rec.seq < since_seq:
                continue
            if sim_time_range is not None:
                lo, hi = sim_time_range
                if not (lo <= rec.sim_time <= hi):
                    continue
            out.append(rec)
        return out

    def dump(self, include_wall_time: bool = True) -> str:
        return "\n".join(r.to_json(include_wall_time) for r in self.records) + (
            "\n" if self.records else ""
        )

    def close(self) -> None:
        if self._fh:
            self._fh.close()
            self._fh = None


def strip_wall_time(jsonl: str | Iterable[str]) -> str:
    """Normalize a JSONL event dump for replay comparison."""
    lines = jsonl.splitlines() if isinstance(jsonl, str) else list(jsonl)
    out = []
    for line in lines:
        if not line.strip():
            continue
        d = json.loads(line)
        d.pop("wall_time", None)
        out.append(json.dumps(d, sort_keys=True))
    return "\n".join(out) + ("\n" if out else "")
