"""Agent registry and the attacker-side proxy operations.

An agent is a syscall server spawned on a compromised machine. The
manager tracks every installed agent, owns the client end of each
control link, and exposes the operations the attack plane builds on:
remote syscall execution, stdin injection, and chained channels for
pivoting.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import AgentLost, Einval, MachineDown, error_for_code
from ..kernel.machine import RUNNING
from ..kernel.syscalls import SyscallRequest, SyscallResponse, sys_recv
from .frames import (
    ERROR,
    RESPONSE,
    chain_data_frame,
    chain_open_frame,
    request_frame,
)
from .link import ChannelStream, FrameLink, HostSocket, StdioTransport

AGENT_FD = 3  # where a reused exploit connection lands in the agent


@dataclass
class Agent:
    agent_id: str
    machine_id: str
    pid: int
    privilege: str
    transport: tuple
    link: FrameLink | None = None
    alive: bool = True
    # exploited process for reused-connection installs; if it dies, the
    # agent hosted on its connection dies with it
    host_pid: int | None = None
    nonce: int = 0
    stdin_scanner: object = field(default=None, repr=False)


class AgentManager:
    """Installs agents, keeps them alive-or-latched-dead, and proxies."""

    def __init__(self, kernel, engine=None):
        self.kernel = kernel
        self.engine = engine
        self.agents: dict[str, Agent] = {}
        self._next_agent = 1
        if engine is not None:
            engine.agent_installer = self._install_from_exploit
        kernel.events.subscribe(self._on_event)

    # -- liveness ------------------------------------------------------------

    def _on_event(self, record) -> None:
        # covers both crash and reset transitions; death is permanent
        if record.kind == "machine_crash":
            for agent in self.agents.values():
                if agent.machine_id == record.machine:
                    agent.alive = False

    def _agent(self, agent_id: str) -> Agent:
        agent = self.agents.get(agent_id)
        if agent is None:
            raise AgentLost(f"unknown agent {agent_id!r}")
        return agent

    def _ensure_alive(self, agent: Agent) -> None:
        if agent.alive:
            machine = self.kernel.machines.get(agent.machine_id)
            if machine is None or machine.state != RUNNING:
                agent.alive = False
            elif agent.pid not in machine.processes:
                agent.alive = False
            elif (agent.host_pid is not None
                    and agent.host_pid not in machine.processes):
                agent.alive = False
        if not agent.alive:
            raise AgentLost(agent.agent_id)

    def check_alive(self, agent: Agent) -> bool:
        """Non-raising liveness probe; latches the flag as a side effect."""
        try:
            self._ensure_alive(agent)
        except AgentLost:
            return False
        return True

    def all_agents(self) -> list[Agent]:
        return list(self.agents.values())

    # -- installation ----------------------------------------------------------

    def _register(self, machine_id: str, pid: int, privilege: str,
                  transport: tuple, link: FrameLink | None,
                  host_pid: int | None = None, nonce: int = 0,
                  exploit_id: str | None = None) -> Agent:
        agent = Agent(f"agent-{self._next_agent}", machine_id, pid,
                      privilege, transport, link,
                      host_pid=host_pid, nonce=nonce)
        self._next_agent += 1
        if self.engine is not None:
            proc = self.kernel.machines[machine_id].processes[pid]
            agent.stdin_scanner = self.engine.scanner_for(
                ("stdin", id(proc.stdin_buf)))
        self.agents[agent.agent_id] = agent
        self.kernel.emit("agent_installed", machine_id, pid,
                         agent_id=agent.agent_id, privilege=privilege,
                         transport=transport[0], nonce=nonce,
                         exploit_id=exploit_id)
        return agent

    def install_agent(self, machine_id: str, privilege: str = "user",
                      transport: tuple = ("stdio",), *,
                      origin: str | None = None,
                      server: HostSocket | None = None) -> str:
        """Plant an agent directly (the operator already owns the box).

        transport: ("stdio",) | ("listener", port) | ("connect_back",
        addr, port). Socket transports need the client end too: `origin`
        names the machine to connect from, or `server` hands over an
        already-listening socket for the connect-back.
        """
        kernel = self.kernel
        mode = transport[0]
        if mode == "stdio":
            pid = kernel.spawn(machine_id, "agent", ("pipe",),
                               privilege=privilege)
            link = FrameLink(kernel, StdioTransport(kernel, machine_id, pid))
            return self._register(machine_id, pid, privilege,
                                  ("stdio",), link).agent_id

        if mode == "listener":
            port = int(transport[1])
            pid = kernel.spawn(machine_id, "agent", ("listen", str(port)),
                               privilege=privilege)
            listening = lambda: any(
                m == machine_id and p == port
                for m, _, p in kernel.fabric.listening_entries())
            if not kernel.pump_until(listening):
                raise AgentLost(f"agent never listened on {port}")
            link = None
            if origin is not None:
                link = FrameLink(kernel,
                                 self._connect_from(origin, machine_id, port))
            return self._register(machine_id, pid, privilege,
                                  ("listener", port), link).agent_id

        if mode == "connect_back":
            addr, port = str(transport[1]), int(transport[2])
            own_server = server is None
            if own_server:
                if origin is None:
                    raise Einval("connect_back needs origin or server")
                server = HostSocket(kernel, origin).bind(addr, port).listen()
            pid = kernel.spawn(machine_id, "agent",
                               ("dial", addr, str(port)),
                               privilege=privilege)
            conn = server.accept()
            if own_server:
                server.close()
            link = FrameLink(kernel, conn)
            return self._register(machine_id, pid, privilege,
                                  ("connect_back", addr, port),
                                  link).agent_id

        raise Einval(f"unknown transport {mode!r}")

    def _connect_from(self, origin: str, target: str, port: int) -> HostSocket:
        """Client socket from origin to whichever of target's addresses
        is reachable."""
        last = None
        for _, addr in self.kernel.scenario.machine(target).interfaces:
            try:
                return HostSocket(self.kernel, origin).connect(addr, port)
            except Exception as e:  # noqa: BLE001 - keep trying other addrs
                last = e
        raise last if last else Einval(f"{target} has no interfaces")

    def _install_from_exploit(self, machine_id: str, pid: int,
                              privilege: str, ctx, entry, nonce: int) -> None:
        """Deferred hook run by the exploit engine on an agent outcome."""
        kernel = self.kernel
        machine = kernel.machines.get(machine_id)
        if machine is None or machine.state != RUNNING:
            return  # the box died before the payload's effect landed

        if ctx.origin == "socket_recv":
            victim = machine.processes.get(pid)
            if victim is None:
                return
            found = None
            for fd, desc in victim.table.items():
                if (getattr(desc, "rx", None) is not None
                        and id(desc.rx) == ctx.stream_key[1]):
                    found = (fd, desc)
                    break
            if found is None:
                return  # connection already gone
            victim_fd, sock = found
            agent_pid = kernel.spawn(machine_id, "agent",
                                     ("fd", str(AGENT_FD)),
                                     privilege=privilege)
            # move the exploited connection: insert first so the
            # refcount never touches zero
            machine.processes[agent_pid].table.insert(sock, at=AGENT_FD)
            victim.table.revoke(victim_fd)
            self._register(machine_id, agent_pid, privilege,
                           ("reused_connection", AGENT_FD), None,
                           host_pid=pid, nonce=nonce, exploit_id=entry.id)
            return

        if ctx.origin == "stdin_write":
            agent_pid = kernel.spawn(machine_id, "agent", ("pipe",),
                                     privilege=privilege)
            link = FrameLink(kernel,
                             StdioTransport(kernel, machine_id, agent_pid))
            self._register(machine_id, agent_pid, privilege, ("stdio",),
                           link, nonce=nonce, exploit_id=entry.id)

    def agent_for_nonce(self, nonce: int) -> Agent | None:
        """The agent installed by the payload carrying `nonce`, if any."""
        for agent in self.agents.values():
            if agent.nonce == nonce:
                return agent
        return None

    def adopt_link(self, agent_id: str, transport) -> None:
        """Attach the client end (any send/recv/close transport). Used
        after a remote exploit, where the client keeps its side of the
        reused connection."""
        agent = self._agent(agent_id)
        agent.link = FrameLink(self.kernel, transport)

    # -- proxied execution ---------------------------------------------------

    def _link(self, agent: Agent) -> FrameLink:
        if agent.link is None:
            raise AgentLost(f"{agent.agent_id} has no control link")
        return agent.link

    def send_request(self, agent_id: str, req: SyscallRequest) -> int:
        """Fire a request without waiting; returns its correlation id."""
        agent = self._agent(agent_id)
        self._ensure_alive(agent)
        link = self._link(agent)
        corr = link.next_corr()
        link.send_frame(request_frame(corr, req.op, req.args))
        return corr

    def wait_response(self, agent_id: str, corr: int) -> SyscallResponse:
        agent = self._agent(agent_id)
        link = self._link(agent)
        try:
            frame = link.recv_frame(corr)
        except AgentLost:
            agent.alive = False
            raise AgentLost(agent.agent_id)
        if frame.frame_type == ERROR:
            return SyscallResponse(value=frame.body, error="EINVAL")
        ok, payload = frame.body
        if ok:
            return SyscallResponse(value=payload)
        code, detail = payload
        return SyscallResponse(value=detail, error=str(code))

    def execute_remote(self, agent_id: str,
                       req: SyscallRequest) -> SyscallResponse:
        return self.wait_response(agent_id, self.send_request(agent_id, req))

    def call(self, agent_id: str, req: SyscallRequest):
        """execute_remote, but errors come back typed and raised."""
        resp = self.execute_remote(agent_id, req)
        if resp.ok:
            return resp.value
        raise error_for_code(resp.error, resp.value)

    def agent_stdin_write(self, agent_id: str, data: bytes) -> int:
        """Write into the agent's stdin. The bytes are scanned on the
        way in, so this is the local attack vector."""
        agent = self._agent(agent_id)
        self._ensure_alive(agent)
        return self.kernel.write_stdin(agent.machine_id, agent.pid,
                                       bytes(data))

    # -- chained channels ------------------------------------------------------

    def open_chain(self, hops: list[str], dst: tuple[str, int], *,
                   origin_machine: str | None = None):
        """Byte channel to dst, relayed through `hops` in order. The
        connect is issued from the LAST hop's machine, so routing and
        firewalls apply from there. Empty hops: plain direct connect."""
        addr, port = str(dst[0]), int(dst[1])
        if not hops:
            if origin_machine is None:
                raise Einval("direct connect needs origin_machine")
            return HostSocket(self.kernel, origin_machine).connect(addr, port)
        for hop in hops:
            self._ensure_alive(self._agent(hop))
        last = self._agent(hops[-1])
        link = self._link(last)
        corr = link.next_corr()
        link.send_frame(chain_open_frame(corr, addr, port))
        frame = link.recv_frame(corr)
        ok, payload = frame.body
        if not ok:
            code, detail = payload
            raise error_for_code(str(code), detail)
        return ChannelStream(self, last.agent_id, int(payload))

    def chain_send(self, agent_id: str, fd: int, data: bytes) -> int:
        agent = self._agent(agent_id)
        self._ensure_alive(agent)
        link = self._link(agent)
        corr = link.next_corr()
        link.send_frame(chain_data_frame(corr, fd, bytes(data)))
        frame = link.recv_frame(corr)
        ok, payload = frame.body
        if not ok:
            code, detail = payload
            raise error_for_code(str(code), detail)
        return int(payload)

    def chain_recv(self, agent_id: str, fd: int, count: int = 65536) -> bytes:
        return self.call(agent_id, sys_recv(fd, int(count)))

    def chain_close(self, agent_id: str, fd: int) -> None:
        self.chain_send(agent_id, fd, b"")
