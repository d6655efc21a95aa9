"""Socket descriptors: in-memory direct transport and host-socket bridge.

A connected pair of SocketDirect endpoints shares two byte queues; send
appends straight into the peer's receive queue, so data transfer after
connect touches no routing or device state. SocketReal exposes the same
state machine and byte-stream contract over a real host socket and backs
the outbound bridge.
"""

from __future__ import annotations

import socket as hostsocket
from dataclasses import dataclass, field

from ..errors import ConnectionReset, Ebadf, Einval, Enotconn
from ..vfs.descriptors import Descriptor
from ..waiting import WaitPoint, WouldBlock

CREATED = "created"
BOUND = "bound"
LISTENING = "listening"
CONNECTING = "connecting"
CONNECTED = "connected"
CLOSED = "closed"

SHUT_READ = "read"
SHUT_WRITE = "write"
SHUT_BOTH = "both"

# unbounded buffers; crossing this only records a warning
DEFAULT_HIGH_WATER = 1 << 20


@dataclass(frozen=True)
class Pcb:
    """Connection record, created at establishment and kept for
    netstat-style introspection only."""

    machine: str
    local: tuple[str, int]
    remote: tuple[str, int]
    created_at: int
    proto: str = "tcp"

    def as_dict(self) -> dict:
        return {
            "proto": self.proto,
            "machine": self.machine,
            "local": f"{self.local[0]}:{self.local[1]}",
            "remote": f"{self.remote[0]}:{self.remote[1]}",
            "created_at": self.created_at,
        }


class StreamHalf:
    """One direction of a connection: FIFO bytes plus EOF/reset flags."""

    def __init__(self, counters=None, high_water: int | None = DEFAULT_HIGH_WATER,
                 on_high_water=None):
        self.data = bytearray()
        self.eof = False     # writer shut down; drain then EOF
        self.reset = False   # peer gone; data dropped
        self.readable = WaitPoint()
        self.counters = counters
        self.high_water = high_water
        self.on_high_water = on_high_water
        self._warned = False

    def write(self, data: bytes) -> int:
        self.data += data
        if self.counters is not None:
            self.counters.bytes_copied += len(data)
        if (self.high_water is not None and not self._warned
                and len(self.data) > self.high_water):
            self._warned = True
            if self.on_high_water is not None:
                self.on_high_water(len(self.data))
        self.readable.wake()
        return len(data)

    def read(self, count: int) -> bytes:
        if self.reset:
            raise ConnectionReset()
        if self.data:
            out = bytes(self.data[:count])
            del self.data[:count]
            if self.counters is not None:
                self.counters.bytes_copied += len(out)
            return out
        if self.eof:
            return b""
        raise WouldBlock(self.readable)

    def close_write(self) -> None:
        self.eof = True
        self.readable.wake()

    def mark_reset(self) -> None:
        self.data.clear()
        self.reset = True
        self.eof = True
        self.readable.wake()


class SocketBase(Descriptor):
    """State machine shared by both transports."""

    kind = "socket"

    def __init__(self, machine_id: str):
        super().__init__()
        self.machine_id = machine_id
        self.state = CREATED
        self.local: tuple[str, int] | None = None
        self.remote: tuple[str, int] | None = None
        self.read_shut = False
        self.write_shut = False
        self.pcb: Pcb | None = None

    # generic descriptor ops map onto the stream ops
    def read(self, count: int) -> bytes:
        return self.recv(count)

    def write(self, data: bytes) -> int:
        return self.send(bytes(data))

    def recv(self, count: int) -> bytes:
        raise Enotconn()

    def send(self, data: bytes) -> int:
        raise Enotconn()

    def shutdown(self, how: str) -> None:
        if how not in (SHUT_READ, SHUT_WRITE, SHUT_BOTH):
            raise Einval(f"bad shutdown mode {how!r}")
        if self.state != CONNECTED:
            raise Enotconn()
        if how in (SHUT_READ, SHUT_BOTH):
            self.read_shut = True
        if how in (SHUT_WRITE, SHUT_BOTH):
            if not self.write_shut:
                self.write_shut = True
                self._shut_write_transport()

    def _shut_write_transport(self) -> None:
        raise NotImplementedError


class SocketDirect(SocketBase):
    """Shared-memory transport: tx IS the peer's receive queue."""

    def __init__(self, machine_id: str):
        super().__init__(machine_id)
        self.rx: StreamHalf | None = None
        self.tx: StreamHalf | None = None
        self.peer: SocketDirect | None = None
        self.accept_queue: list[SocketDirect] = []
        self.acceptable = WaitPoint()
        self.backlog = 0

    def attach(self, peer: "SocketDirect", rx: StreamHalf, tx: StreamHalf,
               local: tuple[str, int], remote: tuple[str, int],
               created_at: int) -> None:
        """Wire this endpoint to its peer; called by the fabric at
        connection establishment for both sides."""
        self.peer = peer
        self.rx = rx
        self.tx = tx
        self.local = local
        self.remote = remote
        self.state = CONNECTED
        self.pcb = Pcb(machine=self.machine_id, local=local, remote=remote,
                       created_at=created_at)

    def recv(self, count: int) -> bytes:
        if self.state != CONNECTED:
            raise Enotconn()
        if self.read_shut:
            return b""
        return self.rx.read(count)

    def send(self, data: bytes) -> int:
        if self.state != CONNECTED:
            raise Enotconn()
        if self.rx.reset or self.tx.reset:
            raise ConnectionReset()
        if self.write_shut:
            raise Ebadf("send after shutdown")
        return self.tx.write(data)

    def _shut_write_transport(self) -> None:
        self.tx.close_write()

    def mark_reset(self) -> None:
        if self.rx is not None:
            self.rx.mark_reset()
        if self.tx is not None:
            self.tx.mark_reset()

    def release(self) -> None:
        if self.state == CONNECTED and not self.write_shut:
            self.write_shut = True
            self.tx.close_write()
        if self.state == LISTENING:
            for pending in self.accept_queue:
                pending.mark_reset()
            self.accept_queue.clear()
            self.acceptable.wake()
        self.state = CLOSED


class SocketReal(SocketBase):
    """The same contract over a host TCP socket (outbound bridge)."""

    def __init__(self, machine_id: str, host_sock: hostsocket.socket):
        super().__init__(machine_id)
        host_sock.setblocking(False)
        self.host = host_sock
        self.readable = WaitPoint()
        self.writable = WaitPoint()
        self.state = CONNECTED

        def endpoint(getter):
            try:
                name = getter()
                if isinstance(name, tuple) and len(name) >= 2:
                    return (str(name[0]), int(name[1]))
            except OSError:
                pass
            return ("?", 0)  # unix socketpairs and the like

        self.local = endpoint(host_sock.getsockname)
        self.remote = endpoint(host_sock.getpeername)

    def fileno(self) -> int:
        return self.host.fileno()

    def recv(self, count: int) -> bytes:
        if self.state != CONNECTED:
            raise Enotconn()
        if self.read_shut:
            return b""
        try:
            return self.host.recv(count)
        except BlockingIOError:
            raise WouldBlock(self.readable)
        except (ConnectionResetError, BrokenPipeError, OSError):
            raise ConnectionReset()

    def send(self, data: bytes) -> int:
        if self.state != CONNECTED:
            raise Enotconn()
        if self.write_shut:
            raise Ebadf("send after shutdown")
        try:
            return self.host.send(data)
        except BlockingIOError:
            raise WouldBlock(self.writable)
        except (ConnectionResetError, BrokenPipeError, OSError):
            raise ConnectionReset()

    def _shut_write_transport(self) -> None:
        try:
            self.host.shutdown(hostsocket.SHUT_WR)
        except OSError:
            pass

    def release(self) -> None:
        try:
            self.host.close()
        except OSError:
            pass
        self.state = CLOSED
