"""Exploit resolution: requirement matching, seeded outcome draws, and
application of results to the running simulation.

Resolution is probabilistic but reproducible: every attempt gets its own
RNG stream derived from (global seed, payload nonce), so outcomes do not
depend on the interleaving of unrelated attempts.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass

from ..errors import UnknownExploit
from ..scenario.model import MachineSpec
from .database import (
    AGENT,
    CRASH_APP,
    CRASH_OS,
    RESET_APP,
    RESET_OS,
    ExploitDatabase,
    ExploitEntry,
)
from .payload import MagicPayload, StreamScanner

# outcome kinds beyond the table rows
AGENT_INSTALLED = "agent_installed"
NO_EFFECT = "no_effect"
REQUIREMENTS_UNMET = "requirements_unmet"

_KIND_MAP = {AGENT: AGENT_INSTALLED}


@dataclass(frozen=True)
class Outcome:
    kind: str
    privilege: str = ""  # set for agent_installed


def resolution_rng(seed: int, nonce: int) -> random.Random:
    """Independent, platform-stable stream for one resolution."""
    digest = hashlib.sha256(f"{seed}:{nonce}".encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def requirements_met(entry: ExploitEntry, target: MachineSpec,
                     running=(), open_ports=()) -> bool:
    """True iff every requirement holds against the ACTUAL target.

    `running` is the set of program names alive on the machine and
    `open_ports` its listening ports; both default to empty, which only
    matters for entries that require them.
    """
    for req in entry.requirements:
        if req.kind == "system":
            if not req.system.matches(target.os):
                return False
        elif req.kind == "application":
            if req.application not in running:
                return False
        elif req.kind == "port":
            if req.port not in open_ports:
                return False
        else:
            return False
    return True


def draw_outcome(entry: ExploitEntry, rng: random.Random) -> str:
    """Walk the outcome table in order; first winning row decides."""
    for row in entry.outcomes:
        if row.chance > 0 and rng.random() < row.chance:
            return _KIND_MAP.get(row.kind, row.kind)
    return NO_EFFECT


def resolve_outcome(entry: ExploitEntry, target: MachineSpec,
                    payload: MagicPayload, rng: random.Random, *,
                    running=(), open_ports=(),
                    privilege: str = "user") -> Outcome:
    """One complete resolution. Unmet requirements are deterministic and
    consume no randomness."""
    if payload.exploit_id != entry.id:
        raise UnknownExploit(payload.exploit_id)
    if not requirements_met(entry, target, running, open_ports):
        return Outcome(REQUIREMENTS_UNMET)
    kind = draw_outcome(entry, rng)
    if kind == AGENT_INSTALLED:
        return Outcome(kind, privilege=privilege)
    return Outcome(kind)


class ExploitEngine:
    """Watches syscall payload traffic for magic strings and drives the
    full detect -> match -> draw -> apply pipeline.

    Side effects (crashes, resets, agent installs) are deferred to run
    right after the dispatch that carried the payload, so the triggering
    read or write always completes and returns first.
    """

    def __init__(self, kernel, db: ExploitDatabase, seed: int = 0,
                 agent_installer=None):
        self.kernel = kernel
        self.db = db
        self.seed = seed
        # callable(machine_id, pid, privilege, tap_ctx, entry, nonce)
        self.agent_installer = agent_installer
        self._scanners: dict = {}
        kernel.payload_tap = self.scan_chunk

    def scanner_for(self, stream_key) -> StreamScanner:
        scanner = self._scanners.get(stream_key)
        if scanner is None:
            scanner = self._scanners[stream_key] = StreamScanner()
        return scanner

    def drop_stream(self, stream_key) -> None:
        self._scanners.pop(stream_key, None)

    # programs that relay attacker traffic verbatim; a payload passing
    # through one acts at the far end of the chain, not on the relay,
    # whose only scanned input is its stdin
    RELAY_PROGRAMS = ("agent",)

    def scan_chunk(self, data: bytes, ctx) -> None:
        if ctx.origin == "socket_recv" and ctx.program in self.RELAY_PROGRAMS:
            return
        for payload in self.scanner_for(ctx.stream_key).feed(data):
            self._attempt(payload, ctx)

    # -- one attempt ---------------------------------------------------------

    def _attempt(self, payload: MagicPayload, ctx) -> None:
        if payload.exploit_id not in self.db:
            return  # not in the catalog: it was just bytes
        entry = self.db.get(payload.exploit_id)
        kernel = self.kernel
        self.kernel.counters.exploits_attempted += 1
        kernel.emit("exploit_attempt", ctx.machine_id, ctx.pid,
                    exploit_id=entry.id, nonce=payload.nonce,
                    origin=ctx.origin, program=ctx.program,
                    assumed_os=payload.assumed_target.summary(),
                    source=ctx.peer_machine)

        machine = kernel.machines[ctx.machine_id]
        running = {p.program for p in machine.processes.values()}
        open_ports = {port for _, port
                      in kernel.introspect(ctx.machine_id, "listeners")}
        # local payloads come in via stdin and yield elevated access;
        # remote ones inherit the attacked process's privilege
        privilege = "root" if ctx.origin == "stdin_write" else ctx.privilege
        outcome = resolve_outcome(
            entry, machine.spec, payload,
            resolution_rng(self.seed, payload.nonce),
            running=running, open_ports=open_ports, privilege=privilege)

        kernel.emit("exploit_result", ctx.machine_id, ctx.pid,
                    exploit_id=entry.id, nonce=payload.nonce,
                    result=outcome.kind, privilege=outcome.privilege)
        self._apply(entry, outcome, payload, ctx)

    def _apply(self, entry: ExploitEntry, outcome: Outcome,
               payload: MagicPayload, ctx) -> None:
        kernel = self.kernel
        mid, pid = ctx.machine_id, ctx.pid
        if outcome.kind == AGENT_INSTALLED and self.agent_installer:
            kernel.defer(lambda: self.agent_installer(
                mid, pid, outcome.privilege, ctx, entry, payload.nonce))
        elif outcome.kind == CRASH_OS:
            kernel.defer(lambda: kernel.set_machine_state(mid, "crash"))
        elif outcome.kind == RESET_OS:
            kernel.defer(lambda: kernel.set_machine_state(mid, "reset"))
        elif outcome.kind == CRASH_APP:
            kernel.defer(lambda: kernel.kill_process(mid, pid))
        elif outcome.kind == RESET_APP:
            kernel.defer(lambda: kernel.restart_service(mid, pid))
        # no_effect, requirements_unmet, and opaque kinds: event only
