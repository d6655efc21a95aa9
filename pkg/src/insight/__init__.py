"""insight: attacker-centric network simulator.

Hosts large scenarios of virtual machines at syscall granularity,
resolves magic-string exploit payloads probabilistically, and lets an
operator pivot through syscall-proxy agents.
"""

__version__ = "0.1.0"
