from .model import (
    DeviceSpec,
    FirewallRule,
    MachineSpec,
    NetworkSpec,
    OsDescriptor,
    Scenario,
    ServiceSpec,
)
from .parse import parse_scenario, render_scenario
from .validate import ValidationError, validate
from .wizard import ATTACKER_ID, LanParams, generate_lan, generate_lans

__all__ = [
    "ATTACKER_ID",
    "DeviceSpec",
    "FirewallRule",
    "LanParams",
    "MachineSpec",
    "NetworkSpec",
    "OsDescriptor",
    "Scenario",
    "ServiceSpec",
    "ValidationError",
    "generate_lan",
    "generate_lans",
    "parse_scenario",
    "render_scenario",
    "validate",
]
