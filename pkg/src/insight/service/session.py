"""The operator attack plane.

One session owns a booted scenario, its exploit catalog, the installed
agents, and the ordered event log. All attack operations (discovery,
remote and local exploits) funnel through here, each wrapped in
module_start/module_end markers so a reviewer can reconstruct what the
operator did from the log alone.
"""

from __future__ import annotations

import contextlib
import ipaddress
from dataclasses import dataclass

from ..agents import AgentManager
from ..errors import Einval, SimError, SnapshotWhileBusy, UnknownExploit
from ..events import EventLog
from ..exploits import ExploitDatabase, ExploitEngine, MagicPayload
from ..kernel import Kernel
from ..scenario.model import OsDescriptor, Scenario

# outcome reported when the payload was delivered but never scanned
# (the receiving program exited before reading it)
UNDETECTED = "undetected"


@dataclass(frozen=True)
class HostReport:
    addr: str
    port_open: bool = True

    def as_dict(self) -> dict:
        return {"addr": self.addr, "port_open": self.port_open}


@dataclass(frozen=True)
class ExploitResult:
    exploit_id: str
    nonce: int
    outcome: str
    privilege: str = ""
    agent_id: str | None = None
    target: str = ""

    def as_dict(self) -> dict:
        return {
            "exploit_id": self.exploit_id,
            "nonce": self.nonce,
            "outcome": self.outcome,
            "privilege": self.privilege,
            "agent_id": self.agent_id,
            "target": self.target,
        }


class PentestSession:
    def __init__(self, scenario: Scenario, *, seed: int = 0,
                 db: ExploitDatabase | None = None,
                 log_path: str | None = None,
                 log_syscalls: bool = False):
        self.seed = seed
        self.session_id = f"{scenario.name}-{seed}"
        self.events = EventLog(path=log_path)
        self.kernel = Kernel(scenario, events=self.events,
                             log_syscalls=log_syscalls).boot()
        self.db = db if db is not None else ExploitDatabase({})
        self.engine = ExploitEngine(self.kernel, self.db, seed=seed)
        self.agents = AgentManager(self.kernel, self.engine)
        self.paused = False
        self._nonce = 0
        self._snapshots: dict[str, dict] = {}
        self.origin = self._pick_origin(scenario)

    @staticmethod
    def _pick_origin(scenario: Scenario) -> str:
        """The machine operations are issued from when no chain is given."""
        for m in scenario.machines:
            if m.id == "attacker":
                return m.id
        return scenario.machines[0].id if scenario.machines else ""

    def _require_active(self) -> None:
        if self.paused:
            raise Einval("session is paused")

    def _next_nonce(self) -> int:
        # session-scoped counter: the nonce picks the RNG stream, so a
        # replay with the same action sequence redraws identically
        self._nonce += 1
        return self._nonce

    @contextlib.contextmanager
    def _module(self, name: str, **params):
        self.kernel.emit("module_start", None, None, module=name, **params)
        outcome: dict = {}
        try:
            yield outcome
        finally:
            self.kernel.emit("module_end", None, None, module=name, **outcome)

    # -- operations ---------------------------------------------------------

    def discover_network(self, cidr: str, port: int = 80,
                         via: list[str] | None = None) -> list[HostReport]:
        """Probe every address in cidr with a plain connect; a host is in
        the report iff its connect succeeded. Works purely through the
        connect contract, no peeking at the scenario."""
        self._require_active()
        hops = list(via or ())
        found: list[HostReport] = []
        with self._module("discover", cidr=str(cidr), port=int(port),
                          via=hops) as out:
            for ip in ipaddress.ip_network(str(cidr)).hosts():
                try:
                    ch = self.agents.open_chain(hops, (str(ip), port),
                                                origin_machine=self.origin)
                except SimError:
                    continue
                with contextlib.suppress(SimError):
                    ch.close()
                found.append(HostReport(str(ip)))
            # let the probed listeners reap their half-open connections
            self.kernel.run_until_quiescent()
            out["hosts_found"] = len(found)
        return found

    def run_remote_exploit(self, exploit_id: str, target: tuple[str, int],
                           assumed_os: OsDescriptor | None = None,
                           via: list[str] | None = None) -> ExploitResult:
        """Send the exploit's magic payload at target, wait for the
        verdict, and adopt the new agent when one is installed."""
        self._require_active()
        if exploit_id not in self.db:
            raise UnknownExploit(exploit_id)
        addr, port = str(target[0]), int(target[1])
        nonce = self._next_nonce()
        hops = list(via or ())
        with self._module("exploit_remote", exploit_id=exploit_id,
                          target=f"{addr}:{port}", nonce=nonce,
                          via=hops) as out:
            ch = self.agents.open_chain(hops, (addr, port),
                                        origin_machine=self.origin)
            payload = MagicPayload(exploit_id,
                                   assumed_target=assumed_os or OsDescriptor(),
                                   nonce=nonce)
            ch.send(payload.encode())
            record = self._await_verdict(nonce)
            result = self._finish_attempt(exploit_id, nonce, record,
                                          f"{addr}:{port}", channel=ch)
            out["result"] = result.outcome
        return result

    def run_local_exploit(self, agent_id: str,
                          exploit_id: str) -> ExploitResult:
        """Feed the payload to an existing agent's stdin (the local
        privilege escalation path)."""
        self._require_active()
        if exploit_id not in self.db:
            raise UnknownExploit(exploit_id)
        nonce = self._next_nonce()
        with self._module("exploit_local", exploit_id=exploit_id,
                          agent=agent_id, nonce=nonce) as out:
            payload = MagicPayload(exploit_id, nonce=nonce)
            self.agents.agent_stdin_write(agent_id, payload.encode())
            record = self._await_verdict(nonce)
            result = self._finish_attempt(exploit_id, nonce, record,
                                          agent_id)
            out["result"] = result.outcome
        return result

    def _await_verdict(self, nonce: int):
        def find():
            for rec in reversed(self.events.records):
                if (rec.kind == "exploit_result"
                        and rec.details.get("nonce") == nonce):
                    return rec
            return None

        self.kernel.pump_until(lambda: find() is not None)
        return find()

    def _finish_attempt(self, exploit_id: str, nonce: int, record,
                        target: str, channel=None) -> ExploitResult:
        outcome = record.details["result"] if record else UNDETECTED
        privilege = record.details.get("privilege", "") if record else ""
        agent_id = None
        if outcome == "agent_installed":
            agent = self.agents.agent_for_nonce(nonce)
            if agent is not None:
                agent_id = agent.agent_id
                if channel is not None and agent.link is None:
                    # the attack connection doubles as the control link
                    self.agents.adopt_link(agent_id, channel)
                    channel = None
        if channel is not None:
            with contextlib.suppress(SimError):
                channel.close()
        return ExploitResult(exploit_id, nonce, outcome, privilege,
                             agent_id, target)

    # -- views ------------------------------------------------------------------

    def query_events(self, kind: str | None = None,
                     machine: str | None = None,
                     since_seq: int | None = None,
                     sim_time_range: tuple[int, int] | None = None):
        return self.events.query(kind=kind, machine=machine,
                                 since_seq=since_seq,
                                 sim_time_range=sim_time_range)

    def topology(self) -> dict:
        sc = self.kernel.scenario
        return {
            "scenario": sc.name,
            "networks": [{"id": n.id, "cidr": n.cidr} for n in sc.networks],
            "machines": [
                {
                    "id": m.id,
                    "os": m.os.summary(),
                    "interfaces": [{"network": net, "addr": addr}
                                   for net, addr in m.interfaces],
                    "services": [{"program": s.program, "port": s.port}
                                 for s in m.services],
                    "state": self.kernel.machines[m.id].state,
                }
                for m in sc.machines
            ],
            "devices": [
                {
                    "id": d.id,
                    "kind": d.kind,
                    "networks": list(d.attached_networks),
                    "rules": [
                        {
                            "action": r.action,
                            "src": r.src_cidr,
                            "dst": r.dst_cidr,
                            "ports": [r.dst_port_lo, r.dst_port_hi],
                            "direction": r.direction,
                        }
                        for r in d.firewall_rules
                    ],
                }
                for d in sc.devices
            ],
        }

    def agents_view(self) -> list[dict]:
        return [
            {
                "agent_id": a.agent_id,
                "machine": a.machine_id,
                "privilege": a.privilege,
                "transport": [str(x) for x in a.transport],
                "alive": self.agents.check_alive(a),
            }
            for a in self.agents.all_agents()
        ]

    # -- control -----------------------------------------------------------------

    def snapshot(self) -> dict:
        """Checkpoint every machine's private file state. Refused while
        the simulation still has runnable work."""
        if not self.kernel.quiescent:
            raise SnapshotWhileBusy("simulation has runnable work")
        snap_id = f"snap-{len(self._snapshots) + 1}"
        self._snapshots[snap_id] = {
            "sim_time": self.kernel.sim_time,
            "event_seq": len(self.events.records),
            "filesystems": {mid: m.fs.snapshot()
                            for mid, m in self.kernel.machines.items()},
        }
        return {"snapshot_id": snap_id,
                "sim_time": self.kernel.sim_time,
                "machines": len(self.kernel.machines)}

    def snapshot_ids(self) -> list[str]:
        return list(self._snapshots)
