"""Simulated network: sockets, connect-time routing, stateless firewalls."""

from .routing import RoutePath, Topology, find_path
from .sockets import (
    BOUND,
    CLOSED,
    CONNECTED,
    CREATED,
    LISTENING,
    SHUT_BOTH,
    SHUT_READ,
    SHUT_WRITE,
    Pcb,
    SocketBase,
    SocketDirect,
    SocketReal,
    StreamHalf,
)
from .stack import EPHEMERAL_BASE, WILDCARD, NetworkFabric

__all__ = [
    "BOUND", "CLOSED", "CONNECTED", "CREATED", "EPHEMERAL_BASE",
    "LISTENING", "NetworkFabric", "Pcb", "RoutePath", "SHUT_BOTH",
    "SHUT_READ", "SHUT_WRITE", "SocketBase", "SocketDirect", "SocketReal",
    "StreamHalf", "Topology", "WILDCARD", "find_path",
]
