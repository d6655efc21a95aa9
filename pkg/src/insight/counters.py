"""Simulation-wide bookkeeping counters."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class SimCounters:
    dispatches: int = 0        # completed syscall dispatches
    bytes_copied: int = 0      # payload bytes moved between buffers
    private_copies: int = 0    # files materialized by copy-on-write
    private_copy_bytes: int = 0
    connects: int = 0
    exploits_attempted: int = 0
    extra: dict = field(default_factory=dict)

    def note_copy(self, path: str, nbytes: int) -> None:
        self.private_copies += 1
        self.private_copy_bytes += nbytes

    def as_dict(self) -> dict:
        return {
            "dispatches": self.dispatches,
            "bytes_copied": self.bytes_copied,
            "private_copies": self.private_copies,
            "private_copy_bytes": self.private_copy_bytes,
            "connects": self.connects,
            "exploits_attempted": self.exploits_attempted,
            **self.extra,
        }
