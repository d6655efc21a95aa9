"""Scenario invariant checks.

validate() returns an empty list iff all invariants hold; each error
carries the offending entity id and the rule violated.
"""

from __future__ import annotations

import ipaddress
from dataclasses import dataclass

from .model import PRIVILEGES, Scenario


@dataclass(frozen=True)
class ValidationError:
    entity: str
    rule: str
    message: str


def validate(s: Scenario) -> list[ValidationError]:
    errors: list[ValidationError] = []

    def err(entity, rule, message):
        errors.append(ValidationError(entity, rule, message))

    net_ids = set()
    for n in s.networks:
        if n.id in net_ids:
            err(n.id, "duplicate_network", f"network {n.id!r} declared twice")
        net_ids.add(n.id)
        try:
            ipaddress.ip_network(n.cidr)
        except ValueError:
            err(n.id, "bad_cidr", f"network {n.id!r} has invalid cidr {n.cidr!r}")

    declared_templates = set(s.templates)
    machine_ids = set()
    addrs_per_net: dict[str, set[str]] = {}
    for m in s.machines:
        if m.id in machine_ids:
            err(m.id, "duplicate_machine", f"machine {m.id!r} declared twice")
        machine_ids.add(m.id)

        if m.template and m.template not in declared_templates:
            err(m.id, "dangling_template",
                f"machine {m.id!r} uses undeclared template {m.template!r}")
        for net, addr in m.interfaces:
            if net not in net_ids:
                err(m.id, "dangling_network",
                    f"machine {m.id!r} references undeclared network {net!r}")
                continue
            seen = addrs_per_net.setdefault(net, set())
            if addr in seen:
                err(net, "duplicate_address",
                    f"address {addr} appears twice on network {net!r}")
            seen.add(addr)
            spec = next(n for n in s.networks if n.id == net)
            try:
                inside = spec.contains(addr)
            except ValueError:
                inside = False
            if not inside:
                err(m.id, "address_outside_network",
                    f"address {addr} is not inside {net!r} ({spec.cidr})")

        ports = set()
        user_names = {name for name, _ in m.users}
        for svc in m.services:
            if svc.port in ports:
                err(m.id, "duplicate_port",
                    f"machine {m.id!r} binds port {svc.port} twice")
            ports.add(svc.port)
            if svc.run_as and svc.run_as not in user_names:
                err(m.id, "dangling_user",
                    f"service {svc.program!r} runs as undeclared user {svc.run_as!r}")
        for name, priv in m.users:
            if priv not in PRIVILEGES:
                err(m.id, "bad_privilege",
                    f"user {name!r} has privilege {priv!r}, expected one of {PRIVILEGES}")

    device_ids = set()
    for d in s.devices:
        if d.id in device_ids:
            err(d.id, "duplicate_device", f"device {d.id!r} declared twice")
        device_ids.add(d.id)
        for net in d.attached_networks:
            if net not in net_ids:
                err(d.id, "dangling_network",
                    f"device {d.id!r} attaches undeclared network {net!r}")
        n_attached = len(d.attached_networks)
        if d.kind in ("hub", "switch") and n_attached != 1:
            err(d.id, "device_arity",
                f"{d.kind} {d.id!r} must attach exactly one network, has {n_attached}")
        if d.kind in ("router", "firewall") and n_attached < 2:
            err(d.id, "device_arity",
                f"{d.kind} {d.id!r} must attach at least two networks, has {n_attached}")
        if d.firewall_rules and not d.forwards:
            err(d.id, "rules_on_dumb_device",
                f"{d.kind} {d.id!r} cannot carry firewall rules")

    return errors
