"""Operator-facing attack plane: sessions, benchmark, HTTP API, CLI."""

from .benchmark import BenchmarkReport, BenchmarkRow, run_benchmark
from .session import ExploitResult, HostReport, PentestSession, UNDETECTED

__all__ = [
    "PentestSession",
    "HostReport",
    "ExploitResult",
    "UNDETECTED",
    "BenchmarkReport",
    "BenchmarkRow",
    "run_benchmark",
]
