"""Scenario file parser and renderer.

Line-oriented UTF-8 format, grammar documented in docs/scenario-format.md.
Top-level directives start at column 0; `machine` and `device` open blocks
whose body lines are indented. `parse_scenario(render_scenario(s)) == s`
for every valid Scenario.
"""

from __future__ import annotations

import shlex

from ..errors import DanglingReference, DuplicateAddress, ScenarioInvalid, ScenarioSyntaxError
from .model import (
    DEVICE_KINDS,
    PRIVILEGES,
    RULE_ACTIONS,
    RULE_DIRECTIONS,
    DeviceSpec,
    FirewallRule,
    MachineSpec,
    NetworkSpec,
    OsDescriptor,
    Scenario,
    ServiceSpec,
)


def _split(line: str, lineno: int) -> list[str]:
    try:
        return shlex.split(line, comments=True)
    except ValueError as exc:
        raise ScenarioSyntaxError(lineno, str(exc))


def _kv(tokens: list[str], lineno: int) -> dict[str, str]:
    out = {}
    for tok in tokens:
        if "=" not in tok:
            raise ScenarioSyntaxError(lineno, f"expected key=value, got {tok!r}")
        k, v = tok.split("=", 1)
        out[k] = v
    return out


def _int(value: str, lineno: int, what: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ScenarioSyntaxError(lineno, f"bad {what} {value!r}")


class _MachineDraft:
    def __init__(self, mid):
        self.id = mid
        self.os = OsDescriptor()
        self.interfaces = []
        self.services = []
        self.users = []
        self.template = ""


class _DeviceDraft:
    def __init__(self, did, kind):
        self.id = did
        self.kind = kind
        self.attached = []
        self.rules = []


def parse_scenario(text: bytes | str) -> Scenario:
    """Parse and fully validate one scenario document."""
    if isinstance(text, bytes):
        text = text.decode("utf-8")

    name = ""
    exploit_db_ref = ""
    templates: list[str] = []
    networks: list[NetworkSpec] = []
    machines: list[_MachineDraft] = []
    devices: list[_DeviceDraft] = []
    block = None  # current _MachineDraft or _DeviceDraft

    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        indented = raw[0] in (" ", "\t")
        tokens = _split(raw, lineno)
        if not tokens:
            continue
        head, rest = tokens[0], tokens[1:]

        if not indented:
            block = None
            if head == "scenario":
                if len(rest) != 1:
                    raise ScenarioSyntaxError(lineno, "scenario takes one name")
                name = rest[0]
            elif head == "exploitdb":
                if len(rest) != 1:
                    raise ScenarioSyntaxError(lineno, "exploitdb takes one path")
                exploit_db_ref = rest[0]
            elif head == "template":
                if len(rest) != 1:
                    raise ScenarioSyntaxError(lineno, "template takes one id")
                templates.append(rest[0])
            elif head == "network":
                if len(rest) != 2:
                    raise ScenarioSyntaxError(lineno, "network takes id and cidr")
                networks.append(NetworkSpec(id=rest[0], cidr=rest[1]))
            elif head == "machine":
                if len(rest) != 1:
                    raise ScenarioSyntaxError(lineno, "machine takes one id")
                block = _MachineDraft(rest[0])
                machines.append(block)
            elif head == "device":
                if len(rest) != 2 or rest[1] not in DEVICE_KINDS:
                    raise ScenarioSyntaxError(lineno, "device takes id and kind")
                block = _DeviceDraft(rest[0], rest[1])
                devices.append(block)
            else:
                raise ScenarioSyntaxError(lineno, f"unknown directive {head!r}")
            continue

        if block is None:
            raise ScenarioSyntaxError(lineno, "indented line outside machine/device block")

        if isinstance(block, _MachineDraft):
            _parse_machine_line(block, head, rest, lineno)
        else:
            _parse_device_line(block, head, rest, lineno)

    scenario = Scenario(
        name=name,
        machines=tuple(
            MachineSpec(
                id=m.id,
                os=m.os,
                interfaces=tuple(m.interfaces),
                services=tuple(m.services),
                users=tuple(m.users),
                template=m.template,
            )
            for m in machines
        ),
        networks=tuple(networks),
        devices=tuple(
            DeviceSpec(
                id=d.id,
                kind=d.kind,
                attached_networks=tuple(d.attached),
                firewall_rules=tuple(d.rules),
            )
            for d in devices
        ),
        exploit_db_ref=exploit_db_ref,
        templates=tuple(templates),
    )
    _reject_invalid(scenario)
    return scenario


def _parse_machine_line(m: _MachineDraft, head: str, rest: list[str], lineno: int):
    if head == "template":
        if len(rest) != 1:
            raise ScenarioSyntaxError(lineno, "template takes one id")
        m.template = rest[0]
    elif head == "os":
        kv = _kv(rest, lineno)
        patches = frozenset(p for p in kv.pop("patches", "").split("+") if p)
        allowed = {"name", "arch", "version", "edition", "servicepack"}
        bad = set(kv) - allowed
        if bad:
            raise ScenarioSyntaxError(lineno, f"unknown os field {sorted(bad)[0]!r}")
        m.os = OsDescriptor(patches=patches, **kv)
    elif head == "interface":
        if len(rest) != 2:
            raise ScenarioSyntaxError(lineno, "interface takes network and address")
        m.interfaces.append((rest[0], rest[1]))
    elif head == "service":
        if not rest:
            raise ScenarioSyntaxError(lineno, "service takes a program name")
        program, kv = rest[0], _kv(rest[1:], lineno)
        if "port" not in kv:
            raise ScenarioSyntaxError(lineno, "service requires port=")
        vulnerable = tuple(v for v in kv.get("vulnerable", "").split(",") if v)
        m.services.append(
            ServiceSpec(
                program=program,
                port=_int(kv["port"], lineno, "port"),
                vulnerable_ids=vulnerable,
                run_as=kv.get("run_as", ""),
            )
        )
    elif head == "user":
        if len(rest) != 2:
            raise ScenarioSyntaxError(lineno, "user takes name and privilege=")
        kv = _kv(rest[1:], lineno)
        priv = kv.get("privilege", "")
        if priv not in PRIVILEGES:
            raise ScenarioSyntaxError(lineno, f"privilege must be one of {PRIVILEGES}")
        m.users.append((rest[0], priv))
    else:
        raise ScenarioSyntaxError(lineno, f"unknown machine field {head!r}")


def _parse_device_line(d: _DeviceDraft, head: str, rest: list[str], lineno: int):
    if head == "attach":
        if not rest:
            raise ScenarioSyntaxError(lineno, "attach takes network ids")
        d.attached.extend(rest)
    elif head == "rule":
        if not rest or rest[0] not in RULE_ACTIONS:
            raise ScenarioSyntaxError(lineno, "rule starts with allow|deny")
        kv = _kv(rest[1:], lineno)
        ports = kv.get("ports", "1-65535")
        if "-" in ports:
            lo, hi = ports.split("-", 1)
        else:
            lo = hi = ports
        direction = kv.get("direction", "in")
        if direction not in RULE_DIRECTIONS:
            raise ScenarioSyntaxError(lineno, f"direction must be one of {RULE_DIRECTIONS}")
        d.rules.append(
            FirewallRule(
                action=rest[0],
                src_cidr=kv.get("src", "0.0.0.0/0"),
                dst_cidr=kv.get("dst", "0.0.0.0/0"),
                dst_port_lo=_int(lo, lineno, "port"),
                dst_port_hi=_int(hi, lineno, "port"),
                direction=direction,
            )
        )
    else:
        raise ScenarioSyntaxError(lineno, f"unknown device field {head!r}")


def _reject_invalid(scenario: Scenario) -> None:
    """Raise the most specific error for the first invariant violation."""
    from .validate import validate

    errors = validate(scenario)
    if not errors:
        return
    first = errors[0]
    if first.rule in ("dangling_network", "dangling_template", "dangling_user"):
        raise DanglingReference(first.entity, first.message)
    if first.rule == "duplicate_address":
        raise DuplicateAddress(first.entity, first.message)
    raise ScenarioInvalid(first.rule, first.entity, first.message)


def _q(token: str) -> str:
    if token == "" or any(c.isspace() for c in token) or '"' in token:
        return '"' + token.replace('"', '\\"') + '"'
    return token


def render_scenario(s: Scenario) -> str:
    """Canonical text for a Scenario; inverse of parse_scenario."""
    out = [f"scenario {_q(s.name)}"]
    if s.exploit_db_ref:
        out.append(f"exploitdb {_q(s.exploit_db_ref)}")
    if s.templates:
        out.append("")
        out.extend(f"template {_q(t)}" for t in s.templates)
    if s.networks:
        out.append("")
        out.extend(f"network {_q(n.id)} {n.cidr}" for n in s.networks)
    for m in s.machines:
        out.append("")
        out.append(f"machine {_q(m.id)}")
        if m.template:
            out.append(f"  template {_q(m.template)}")
        os_fields = []
        for f in ("name", "arch", "version", "edition", "servicepack"):
            v = getattr(m.os, f)
            if v:
                os_fields.append(f"{f}={_q(v)}")
        if m.os.patches:
            os_fields.append("patches=" + "+".join(sorted(m.os.patches)))
        if os_fields:
            out.append("  os " + " ".join(os_fields))
        for net, addr in m.interfaces:
            out.append(f"  interface {_q(net)} {addr}")
        for svc in m.services:
            line = f"  service {_q(svc.program)} port={svc.port}"
            if svc.vulnerable_ids:
                line += " vulnerable=" + ",".join(svc.vulnerable_ids)
            if svc.run_as:
                line += f" run_as={_q(svc.run_as)}"
            out.append(line)
        for uname, priv in m.users:
            out.append(f"  user {_q(uname)} privilege={priv}")
    for d in s.devices:
        out.append("")
        out.append(f"device {_q(d.id)} {d.kind}")
        if d.attached_networks:
            out.append("  attach " + " ".join(_q(n) for n in d.attached_networks))
        for r in d.firewall_rules:
            ports = (
                str(r.dst_port_lo)
                if r.dst_port_lo == r.dst_port_hi
                else f"{r.dst_port_lo}-{r.dst_port_hi}"
            )
            out.append(
                f"  rule {r.action} src={r.src_cidr} dst={r.dst_cidr}"
                f" ports={ports} direction={r.direction}"
            )
    return "\n".join(out) + "\n"
