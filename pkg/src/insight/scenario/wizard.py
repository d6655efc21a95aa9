"""Scenario wizard: deterministic LAN generators for training and benchmarks.

generate_lan / generate_lans are pure functions of (params, seed): the same
inputs render to byte-identical scenario files.
"""

from __future__ import annotations

import ipaddress
import random
from dataclasses import dataclass, field

from ..errors import AddressSpaceExhausted
from .model import MachineSpec, NetworkSpec, OsDescriptor, Scenario, ServiceSpec

OS_PRESETS = {
    "linux": OsDescriptor(name="linux", arch="i386", version="9.0"),
    "windows": OsDescriptor(
        name="windows", arch="i386", version="xp", edition="professional", servicepack="2"
    ),
}

TEMPLATE_FOR_OS = {"linux": "minimal-linux", "windows": "minimal-windows"}

ATTACKER_ID = "attacker"


@dataclass(frozen=True)
class LanParams:
    machine_count: int
    os_mix: dict[str, float] = field(default_factory=lambda: {"linux": 1.0})
    open_port: int = 80
    address_base: str = "10.0.1.0/24"


def _os_assignment(params: LanParams, rng: random.Random) -> list[str]:
    """Largest-remainder split of machine_count over os_mix, then a seeded
    shuffle; deterministic for a given (params, seed)."""
    total = sum(params.os_mix.values())
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"os_mix fractions sum to {total}, expected 1")
    names = sorted(params.os_mix)
    exact = {n: params.os_mix[n] * params.machine_count for n in names}
    counts = {n: int(exact[n]) for n in names}
    leftover = params.machine_count - sum(counts.values())
    by_remainder = sorted(names, key=lambda n: (counts[n] - exact[n], n))
    for n in by_remainder[:leftover]:
        counts[n] += 1
    assignment = [n for n in names for _ in range(counts[n])]
    rng.shuffle(assignment)
    return assignment


def _lan_machines(
    lan_id: str, cidr: str, params: LanParams, rng: random.Random, name_prefix: str
) -> list[MachineSpec]:
    hosts = list(ipaddress.ip_network(cidr).hosts())
    if params.machine_count > len(hosts):
        raise AddressSpaceExhausted(cidr, params.machine_count)
    assignment = _os_assignment(params, rng)
    machines = []
    for i, os_name in enumerate(assignment):
        machines.append(
            MachineSpec(
                id=f"{name_prefix}{i + 1:03d}",
                os=OS_PRESETS[os_name],
                interfaces=((lan_id, str(hosts[i])),),
                services=(
                    ServiceSpec(program="netsvc", port=params.open_port, run_as="svc"),
                ),
                users=(("svc", "user"),),
                template=TEMPLATE_FOR_OS[os_name],
            )
        )
    return machines


def _attacker(network_id: str, addr: str) -> MachineSpec:
    return MachineSpec(
        id=ATTACKER_ID,
        os=OS_PRESETS["linux"],
        interfaces=((network_id, addr),),
        services=(),
        users=(("operator", "root"),),
        template="minimal-linux",
    )


def generate_lan(params: LanParams, seed: int = 0) -> Scenario:
    """One LAN of identical listeners plus the attacker's foothold machine.

    The attacker takes the highest usable address; machines fill from the
    bottom, so machine_count may be at most the host count minus one.
    """
    if params.machine_count < 1:
        raise ValueError("machine_count must be >= 1")
    hosts = list(ipaddress.ip_network(params.address_base).hosts())
    if params.machine_count > len(hosts) - 1:
        raise AddressSpaceExhausted(params.address_base, params.machine_count)
    rng = random.Random(seed)
    machines = _lan_machines("lan1", params.address_base, params, rng, "host-")
    machines.append(_attacker("lan1", str(hosts[-1])))
    templates = tuple(sorted({m.template for m in machines}))
    return Scenario(
        name=f"lan-{params.machine_count}",
        machines=tuple(machines),
        networks=(NetworkSpec(id="lan1", cidr=params.address_base),),
        devices=(),
        templates=templates,
    )


def generate_lans(
    lan_count: int,
    per_lan: int = 250,
    open_port: int = 80,
    seed: int = 0,
    os_mix: dict[str, float] | None = None,
) -> Scenario:
    """lan_count /24 LANs of per_lan listeners, joined by one core router,
    with the attacker on a separate outside network."""
    if lan_count < 1:
        raise ValueError("lan_count must be >= 1")
    rng = random.Random(seed)
    os_mix = os_mix or {"linux": 1.0}
    networks = [NetworkSpec(id="outside", cidr="10.0.0.0/24")]
    machines = [_attacker("outside", "10.0.0.2")]
    for lan in range(1, lan_count + 1):
        cidr = f"10.0.{lan}.0/24"
        lan_id = f"lan{lan}"
        networks.append(NetworkSpec(id=lan_id, cidr=cidr))
        params = LanParams(
            machine_count=per_lan, os_mix=os_mix, open_port=open_port, address_base=cidr
        )
        machines.extend(_lan_machines(lan_id, cidr, params, rng, f"host-{lan}-"))
    from .model import DeviceSpec

    core = DeviceSpec(
        id="core", kind="router", attached_networks=tuple(n.id for n in networks)
    )
    templates = tuple(sorted({m.template for m in machines}))
    return Scenario(
        name=f"lans-{lan_count}x{per_lan}",
        machines=tuple(machines),
        networks=tuple(networks),
        devices=(core,),
        templates=templates,
    )
