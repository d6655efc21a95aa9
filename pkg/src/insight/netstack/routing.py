"""Connection-time routing over the scenario topology.

The graph alternates machine, network, and forwarding-device nodes.
Hubs and switches attach to a single network and are transparent: they
never appear in a path. Routing runs once per connect; established
connections never consult it again.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from ..scenario.model import Scenario


@dataclass(frozen=True)
class RoutePath:
    src_machine: str
    dst_machine: str
    src_addr: str            # egress interface address, used by firewalls
    networks: tuple[str, ...]
    devices: tuple[str, ...]  # forwarding devices traversed, in order

    @property
    def hops(self) -> int:
        return len(self.networks)


class Topology:
    """Bipartite-ish adjacency: ("m", id) / ("n", id) / ("d", id) nodes.

    Neighbor lists are sorted, which makes BFS (and therefore tie-breaks
    between equal-length routes) deterministic: the lexicographically
    first device id wins.
    """

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self._adj: dict[tuple, list[tuple]] = {}
        self._machine_addrs: dict[str, dict[str, str]] = {}

        def link(a, b):
            self._adj.setdefault(a, []).append(b)
            self._adj.setdefault(b, []).append(a)

        for m in scenario.machines:
            for net, addr in m.interfaces:
                link(("m", m.id), ("n", net))
                self._machine_addrs.setdefault(m.id, {})[net] = addr
        for d in scenario.devices:
            if not d.forwards:
                continue  # hubs/switches are transparent at this layer
            for net in d.attached_networks:
                link(("d", d.id), ("n", net))
        for node in self._adj:
            self._adj[node].sort()

    def neighbors(self, node: tuple) -> list[tuple]:
        return self._adj.get(node, [])

    def machine_addr_on(self, machine_id: str, network_id: str) -> str:
        return self._machine_addrs[machine_id][network_id]


def find_path(topology: Topology, src_machine: str, dst_addr: str) -> RoutePath | None:
    """Shortest path (fewest networks) from a machine to an address;
    None when unreachable. Deterministic for a fixed scenario."""
    scenario = topology.scenario
    dst = scenario.machine_by_address(dst_addr)
    if dst is None:
        return None
    if dst.id == src_machine:
        return RoutePath(src_machine=src_machine, dst_machine=dst.id,
                         src_addr=dst_addr, networks=(), devices=())

    start = ("m", src_machine)
    goal = ("m", dst.id)
    parent: dict[tuple, tuple] = {start: None}
    queue = deque([start])
    while queue:
        node = queue.popleft()
        if node == goal:
            break
        # only the source machine and forwarding devices bridge networks;
        # a multihomed host is not a router
        if node[0] == "m" and node != start:
            continue
        for nxt in topology.neighbors(node):
            if nxt not in parent:
                parent[nxt] = node
                queue.append(nxt)
    if goal not in parent:
        return None

    chain = []
    node = goal
    while node is not None:
        chain.append(node)
        node = parent[node]
    chain.reverse()

    networks = tuple(nid for kind, nid in chain if kind == "n")
    devices = tuple(nid for kind, nid in chain if kind == "d")
    src_addr = topology.machine_addr_on(src_machine, networks[0])
    return RoutePath(src_machine=src_machine, dst_machine=dst.id,
                     src_addr=src_addr, networks=networks, devices=devices)
