"""Network fabric: port tables, connection establishment, teardown.

Routing and firewall evaluation happen exactly once, at connect. After
that the two endpoints exchange bytes through shared queues and nothing
here is consulted again, so rule changes never disturb established
connections.
"""

from __future__ import annotations

import select
import socket as hostsocket

from ..errors import (
    ConnectionRefused,
    Eaddrinuse,
    Einval,
    FirewallDenied,
    Unreachable,
)
from ..scenario.model import FirewallRule, Scenario
from ..waiting import WouldBlock
from .routing import RoutePath, Topology, find_path
from .sockets import (
    BOUND,
    CONNECTED,
    CREATED,
    LISTENING,
    SocketBase,
    SocketDirect,
    SocketReal,
    StreamHalf,
)

WILDCARD = "0.0.0.0"
EPHEMERAL_BASE = 49152


class NetworkFabric:
    def __init__(self, scenario: Scenario, counters=None, emit=None,
                 now=None):
        self.scenario = scenario
        self.topology = Topology(scenario)
        self.counters = counters
        self.emit = emit            # emit(kind, machine, **details)
        self.now = now or (lambda: 0)
        # runtime firewall rules, seeded from the scenario but mutable
        self.device_rules: dict[str, tuple[FirewallRule, ...]] = {
            d.id: d.firewall_rules for d in scenario.devices
        }
        # machine -> (addr, port) -> listening socket
        self._ports: dict[str, dict[tuple[str, int], SocketDirect]] = {}
        self._ephemeral: dict[str, int] = {}
        self._down: set[str] = set()
        self._conduits: list[SocketDirect] = []  # client side of each pair
        # (addr, port) -> host (addr, port): outbound bridge endpoints
        self._bridges: dict[tuple[str, int], tuple[str, int]] = {}
        self._real: list[SocketReal] = []
        self.high_water_warnings: list[tuple[str, int]] = []

    # -- machine lifecycle ------------------------------------------------

    def machine_is_up(self, machine_id: str) -> bool:
        return machine_id not in self._down

    def mark_down(self, machine_id: str) -> None:
        """Crash/reset teardown: reset every connection touching the
        machine and drop its listeners."""
        self._down.add(machine_id)
        for client in self._conduits:
            server = client.peer
            if machine_id in (client.machine_id, server.machine_id):
                client.mark_reset()
                server.mark_reset()
        self._ports.pop(machine_id, None)

    def mark_up(self, machine_id: str) -> None:
        self._down.discard(machine_id)

    # -- socket ops ---------------------------------------------------------

    def make_socket(self, machine_id: str) -> SocketDirect:
        return SocketDirect(machine_id)

    def _machine_addrs(self, machine_id: str) -> list[str]:
        return self.scenario.machine(machine_id).addresses()

    def bind(self, sock: SocketBase, addr: str, port: int) -> None:
        if sock.state != CREATED:
            raise Einval(f"bind in state {sock.state}")
        if not (1 <= port <= 65535):
            raise Einval(f"bad port {port}")
        if addr != WILDCARD and addr not in self._machine_addrs(sock.machine_id):
            raise Einval(f"{addr} is not an address of {sock.machine_id}")
        table = self._ports.setdefault(sock.machine_id, {})
        for (baddr, bport) in table:
            if bport == port and (addr == WILDCARD or baddr == WILDCARD
                                  or baddr == addr):
                raise Eaddrinuse(f"{addr}:{port}")
        sock.local = (addr, port)
        sock.state = BOUND
        table[sock.local] = sock  # reserve; refuses connects until listening

    def listen(self, sock: SocketDirect, backlog: int = 16) -> None:
        if sock.state != BOUND:
            raise Einval(f"listen in state {sock.state}")
        sock.backlog = backlog
        sock.state = LISTENING

    def unregister(self, sock: SocketBase) -> None:
        """Remove a listener from the port table (socket being closed)."""
        if sock.local is not None:
            table = self._ports.get(sock.machine_id)
            if table is not None and table.get(sock.local) is sock:
                del table[sock.local]

    def _alloc_ephemeral(self, machine_id: str) -> int:
        port = self._ephemeral.get(machine_id, EPHEMERAL_BASE)
        self._ephemeral[machine_id] = port + 1
        return port

    def _check_firewalls(self, path: RoutePath, dst_addr: str, port: int) -> None:
        for device_id in path.devices:
            for rule in self.device_rules.get(device_id, ()):
                if rule.matches(path.src_addr, dst_addr, port):
                    if rule.action == "deny":
                        raise FirewallDenied(device_id, f"{dst_addr}:{port}")
                    break  # first match wins; allow falls through to next device

    def _find_listener(self, machine_id: str, addr: str, port: int):
        table = self._ports.get(machine_id, {})
        sock = table.get((addr, port)) or table.get((WILDCARD, port))
        if sock is None or sock.state != LISTENING:
            return None
        return sock

    def connect(self, sock: SocketBase, dst_addr: str, dst_port: int) -> SocketBase:
        """Establish a connection; returns the descriptor to use from now
        on (a SocketReal for bridge destinations, else `sock` itself)."""
        if sock.state not in (CREATED, BOUND):
            raise Einval(f"connect in state {sock.state}")
        machine = sock.machine_id

        def outcome(result: str, **extra):
            if self.emit is not None:
                self.emit("connect", machine, src=machine, dst=dst_addr,
                          port=dst_port, outcome=result, **extra)

        if (dst_addr, dst_port) in self._bridges:
            real = self._connect_bridge(sock, dst_addr, dst_port)
            outcome("connected", bridge=True)
            return real

        path = find_path(self.topology, machine, dst_addr)
        if path is None or not self.machine_is_up(path.dst_machine):
            outcome("Unreachable")
            raise Unreachable(dst_addr)
        try:
            self._check_firewalls(path, dst_addr, dst_port)
        except FirewallDenied:
            outcome("FirewallDenied")
            raise
        listener = self._find_listener(path.dst_machine, dst_addr, dst_port)
        if listener is None:
            outcome("ConnectionRefused")
            raise ConnectionRefused(f"{dst_addr}:{dst_port}")

        if sock.local is None:
            sock.local = (path.src_addr, self._alloc_ephemeral(machine))
        now = self.now()

        def warn(machine_id):
            return lambda n: self.high_water_warnings.append((machine_id, n))

        client_rx = StreamHalf(self.counters, on_high_water=warn(machine))
        server_rx = StreamHalf(self.counters,
                               on_high_water=warn(path.dst_machine))
        server = SocketDirect(path.dst_machine)
        assert isinstance(sock, SocketDirect)
        sock.attach(server, client_rx, server_rx, sock.local,
                    (dst_addr, dst_port), now)
        server.attach(sock, server_rx, client_rx, (dst_addr, dst_port),
                      sock.local, now)
        listener.accept_queue.append(server)
        listener.acceptable.wake()
        self._conduits.append(sock)
        if self.counters is not None:
            self.counters.connects += 1
        outcome("connected", dst_machine=path.dst_machine,
                hops=path.hops, via=list(path.devices))
        return sock

    def accept(self, sock: SocketDirect) -> SocketDirect:
        if sock.state != LISTENING:
            raise Einval(f"accept in state {sock.state}")
        if not sock.accept_queue:
            raise WouldBlock(sock.acceptable)
        return sock.accept_queue.pop(0)

    # -- introspection ----------------------------------------------------

    def listening_entries(self) -> list[tuple[str, str, int]]:
        """Global route view: every (machine, addr, port) listener."""
        out = []
        for machine_id, table in self._ports.items():
            for (addr, port), sock in table.items():
                if sock.state == LISTENING:
                    out.append((machine_id, addr, port))
        return sorted(out)

    def connections(self, machine_id: str | None = None) -> list:
        pcbs = []
        for client in self._conduits:
            for end in (client, client.peer):
                if end.pcb is None:
                    continue
                if machine_id is None or end.machine_id == machine_id:
                    pcbs.append(end.pcb)
        return pcbs

    # -- outbound host bridge ------------------------------------------------

    def add_bridge(self, sim_addr: str, sim_port: int,
                   host_addr: str, host_port: int) -> None:
        """connect() to sim_addr:sim_port now opens a real TCP connection
        to host_addr:host_port and returns a SocketReal."""
        self._bridges[(sim_addr, sim_port)] = (host_addr, host_port)

    def _connect_bridge(self, sock: SocketBase, dst_addr: str,
                        dst_port: int) -> SocketReal:
        host_addr, host_port = self._bridges[(dst_addr, dst_port)]
        raw = hostsocket.create_connection((host_addr, host_port), timeout=5)
        real = SocketReal(sock.machine_id, raw)
        self._real.append(real)
        if self.counters is not None:
            self.counters.connects += 1
        return real

    @property
    def has_real_waiters(self) -> bool:
        return any(s.readable.waiters or s.writable.waiters
                   for s in self._real)

    def poll_real(self, timeout: float = 0.0) -> int:
        """Wake threads parked on host sockets that became ready."""
        want_r = [s for s in self._real if s.readable.waiters]
        want_w = [s for s in self._real if s.writable.waiters]
        if not want_r and not want_w:
            return 0
        try:
            ready_r, ready_w, _ = select.select(want_r, want_w, [], timeout)
        except (OSError, ValueError):
            # a closed socket in the set: wake everyone so errors surface
            ready_r, ready_w = want_r, want_w
        for s in ready_r:
            s.readable.wake()
        for s in ready_w:
            s.writable.wake()
        return len(ready_r) + len(ready_w)
