"""Scaling measurement: boot n quarter-thousand-host LANs and sweep
them with connect probes, reporting wall time and syscall throughput.

Throughput counts completed kernel dispatches divided by elapsed wall
seconds. Absolute numbers are hardware-bound; the useful signals are
completion and how elapsed time grows with machine count.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

from ..scenario.wizard import generate_lans
from .session import PentestSession


@dataclass(frozen=True)
class BenchmarkRow:
    lans: int
    computers: int
    elapsed_seconds: float
    syscalls_per_second: float
    hosts_found: int

    def as_dict(self) -> dict:
        return {
            "lans": self.lans,
            "computers": self.computers,
            "elapsed_seconds": round(self.elapsed_seconds, 3),
            "syscalls_per_second": round(self.syscalls_per_second, 1),
            "hosts_found": self.hosts_found,
        }


@dataclass(frozen=True)
class BenchmarkReport:
    rows: tuple[BenchmarkRow, ...]

    def as_dict(self) -> dict:
        return {"rows": [r.as_dict() for r in self.rows]}

    def table(self) -> str:
        lines = [f"{'lans':>5} {'computers':>10} {'elapsed_s':>10} "
                 f"{'syscalls/s':>11} {'found':>6}"]
        for r in self.rows:
            lines.append(f"{r.lans:>5} {r.computers:>10} "
                         f"{r.elapsed_seconds:>10.2f} "
                         f"{r.syscalls_per_second:>11.1f} "
                         f"{r.hosts_found:>6}")
        return "\n".join(lines)


def run_benchmark(max_lans: int = 4, per_lan: int = 250, seed: int = 0,
                  open_port: int = 80) -> BenchmarkReport:
    """One row per LAN count from 1 to max_lans. Each row times the
    whole cycle: generate, boot, discover every LAN."""
    if max_lans < 1:
        raise ValueError("max_lans must be >= 1")
    rows = []
    for n in range(1, max_lans + 1):
        t0 = time.perf_counter()
        scenario = generate_lans(n, per_lan=per_lan, open_port=open_port,
                                 seed=seed)
        session = PentestSession(scenario, seed=seed)
        found = 0
        for i in range(1, n + 1):
            found += len(session.discover_network(f"10.0.{i}.0/24",
                                                  open_port))
        elapsed = time.perf_counter() - t0
        dispatched = session.kernel.counters.dispatches
        rows.append(BenchmarkRow(
            lans=n,
            computers=n * per_lan,
            elapsed_seconds=elapsed,
            syscalls_per_second=dispatched / elapsed if elapsed else 0.0,
            hosts_found=found,
        ))
    return BenchmarkReport(tuple(rows))
