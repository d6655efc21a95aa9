"""Declarative scenario model: machines, networks, devices, templates.

Scenario objects are immutable after construction and safe to share
read-only across execution contexts.
"""

from __future__ import annotations

import ipaddress
from dataclasses import dataclass, field
from typing import Optional

PRIVILEGES = ("user", "root")
DEVICE_KINDS = ("hub", "switch", "router", "firewall")
RULE_ACTIONS = ("allow", "deny")
RULE_DIRECTIONS = ("in", "out", "any")


def _lower(s: Optional[str]) -> Optional[str]:
    return s.lower() if isinstance(s, str) else s


@dataclass(frozen=True)
class OsDescriptor:
    """OS identity; all fields lowercase-normalized, absent fields act as
    wildcards when this descriptor is used as a requirement."""

    name: str = ""
    arch: str = ""
    version: str = ""
    edition: str = ""
    servicepack: str = ""
    patches: frozenset[str] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "name", _lower(self.name) or "")
        object.__setattr__(self, "arch", _lower(self.arch) or "")
        object.__setattr__(self, "version", _lower(self.version) or "")
        object.__setattr__(self, "edition", _lower(self.edition) or "")
        object.__setattr__(self, "servicepack", _lower(self.servicepack) or "")
        object.__setattr__(
            self, "patches", frozenset(_lower(p) for p in self.patches)
        )

    def matches(self, target: "OsDescriptor") -> bool:
        """Partial match: my non-empty fields must equal the target's;
        my patches must be a subset of the target's."""
        for f in ("name", "arch", "version", "edition", "servicepack"):
            want = getattr(self, f)
            if want and want != getattr(target, f):
                return False
        return self.patches <= target.patches

    def summary(self) -> str:
        parts = [p for p in (self.name, self.version, self.edition,
                             f"sp{self.servicepack}" if self.servicepack else "",
                             self.arch) if p]
        return " ".join(parts) or "unknown"


@dataclass(frozen=True)
class ServiceSpec:
    program: str
    port: int
    vulnerable_ids: tuple[str, ...] = ()
    run_as: str = ""  # user name from MachineSpec.users; "" = unprivileged


@dataclass(frozen=True)
class MachineSpec:
    id: str
    os: OsDescriptor
    interfaces: tuple[tuple[str, str], ...] = ()  # (network_id, address)
    services: tuple[ServiceSpec, ...] = ()
    users: tuple[tuple[str, str], ...] = ()  # (name, privilege)
    template: str = ""

    def privilege_of(self, user: str) -> str:
        for name, priv in self.users:
            if name == user:
                return priv
        return "user"

    def addresses(self) -> list[str]:
        return [addr for _, addr in self.interfaces]


@dataclass(frozen=True)
class NetworkSpec:
    id: str
    cidr: str

    def hosts(self):
        return ipaddress.ip_network(self.cidr).hosts()

    def contains(self, addr: str) -> bool:
        return ipaddress.ip_address(addr) in ipaddress.ip_network(self.cidr)


@dataclass(frozen=True)
class FirewallRule:
    action: str  # allow | deny
    src_cidr: str = "0.0.0.0/0"
    dst_cidr: str = "0.0.0.0/0"
    dst_port_lo: int = 1
    dst_port_hi: int = 65535
    direction: str = "in"  # in | out | any

    def _oriented_match(self, src: str, dst: str, port: int) -> bool:
        return (
            ipaddress.ip_address(src) in ipaddress.ip_network(self.src_cidr)
            and ipaddress.ip_address(dst) in ipaddress.ip_network(self.dst_cidr)
            and self.dst_port_lo <= port <= self.dst_port_hi
        )

    def matches(self, src: str, dst: str, port: int) -> bool:
        """Stateless match of a connect attempt src -> dst:port.
        'in' matches the flow as written, 'out' the reverse orientation,
        'any' either."""
        if self.direction in ("in", "any") and self._oriented_match(src, dst, port):
            return True
        if self.direction in ("out", "any") and self._oriented_match(dst, src, port):
            return True
        return False


@dataclass(frozen=True)
class DeviceSpec:
    id: str
    kind: str  # hub | switch | router | firewall
    attached_networks: tuple[str, ...] = ()
    firewall_rules: tuple[FirewallRule, ...] = ()

    @property
    def forwards(self) -> bool:
        return self.kind in ("router", "firewall")


@dataclass(frozen=True)
class Scenario:
    name: str
    machines: tuple[MachineSpec, ...] = ()
    networks: tuple[NetworkSpec, ...] = ()
    devices: tuple[DeviceSpec, ...] = ()
    exploit_db_ref: str = ""
    templates: tuple[str, ...] = ()

    def machine(self, machine_id: str) -> MachineSpec:
        for m in self.machines:
            if m.id == machine_id:
                return m
        raise KeyError(machine_id)

    def network(self, network_id: str) -> NetworkSpec:
        for n in self.networks:
            if n.id == network_id:
                return n
        raise KeyError(network_id)

    def machine_by_address(self, addr: str) -> Optional[MachineSpec]:
        for m in self.machines:
            if addr in m.addresses():
                return m
        return None
