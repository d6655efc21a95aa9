"""Attack-framework side of agent transports.

Host code here plays the syscall-client role: it drives in-sim sockets
and pipes directly, pumping the kernel whenever an operation would
block. Three byte-stream transports share one duck-typed interface
(send/recv/close), so a frame link works identically over a direct
socket, a process's stdio, or a channel relayed through another agent.
"""

from __future__ import annotations

from ..errors import AgentLost, Etimedout, SimError
from ..waiting import WouldBlock
from .frames import ERROR, RESPONSE, FrameBuffer, ProxyFrame, encode_frame

PUMP_ROUNDS = 50_000


def pump_call(kernel, fn, max_rounds: int = PUMP_ROUNDS):
    """Run fn(), stepping the simulation through WouldBlock until it
    completes. Raises Etimedout when the world goes idle and fn still
    cannot make progress (nothing left that could ever wake it)."""
    dead_rounds = 0
    for _ in range(max_rounds):
        try:
            return fn()
        except WouldBlock:
            trace = kernel.step()
            if kernel.fabric.has_real_waiters:
                kernel.fabric.poll_real(0.001)
                dead_rounds = 0
            elif trace:
                dead_rounds = 0
            elif kernel.has_timers:
                kernel.skip_to_next_timer()
                dead_rounds = 0
            else:
                dead_rounds += 1
                if dead_rounds > 2:
                    raise Etimedout("simulation idle, operation still blocked")
    raise Etimedout(f"no completion within {max_rounds} rounds")


class HostSocket:
    """An in-sim socket driven from outside the simulation, as if the
    attack framework were a process on `machine_id`."""

    def __init__(self, kernel, machine_id: str, sock=None):
        self.kernel = kernel
        self.machine_id = machine_id
        self.sock = sock or kernel.fabric.make_socket(machine_id)

    def connect(self, addr: str, port: int) -> "HostSocket":
        self.sock = self.kernel.fabric.connect(self.sock, addr, int(port))
        return self

    def bind(self, addr: str, port: int) -> "HostSocket":
        self.kernel.fabric.bind(self.sock, addr, int(port))
        return self

    def listen(self, backlog: int = 4) -> "HostSocket":
        self.kernel.fabric.listen(self.sock, backlog)
        return self

    def accept(self, max_rounds: int = PUMP_ROUNDS) -> "HostSocket":
        server = pump_call(self.kernel,
                           lambda: self.kernel.fabric.accept(self.sock),
                           max_rounds)
        return HostSocket(self.kernel, self.machine_id, server)

    def send(self, data: bytes, max_rounds: int = PUMP_ROUNDS) -> int:
        return pump_call(self.kernel, lambda: self.sock.send(bytes(data)),
                         max_rounds)

    def recv(self, count: int = 65536,
             max_rounds: int = PUMP_ROUNDS) -> bytes:
        return pump_call(self.kernel, lambda: self.sock.recv(count),
                         max_rounds)

    def close(self) -> None:
        self.kernel.fabric.unregister(self.sock)
        self.sock.release()


class StdioTransport:
    """Frames over a process's stdin/stdout pipes."""

    def __init__(self, kernel, machine_id: str, pid: int):
        self.kernel = kernel
        self.machine_id = machine_id
        self.pid = pid

    def send(self, data: bytes) -> int:
        return self.kernel.write_stdin(self.machine_id, self.pid, data)

    def recv(self, count: int = 65536,
             max_rounds: int = PUMP_ROUNDS) -> bytes:
        kernel = self.kernel

        def attempt():
            out = kernel.read_stdout(self.machine_id, self.pid, count)
            if out:
                return out
            machine = kernel.machines.get(self.machine_id)
            if (machine is None or machine.state != "running"
                    or self.pid not in machine.processes):
                return b""  # process gone: EOF
            raise WouldBlock(None)

        return pump_call(kernel, attempt, max_rounds)

    def close(self) -> None:
        try:
            self.kernel.close_stdin(self.machine_id, self.pid)
        except SimError:
            pass


class ChannelStream:
    """Byte stream to `dst` relayed through a terminal agent's fd.

    Writes travel as chain_data frames; reads are proxied recv syscalls.
    Duck-compatible with HostSocket, so a channel can carry anything a
    direct connection can, including another agent's frames."""

    def __init__(self, manager, agent_id: str, fd: int):
        self.manager = manager
        self.agent_id = agent_id
        self.fd = fd

    def send(self, data: bytes) -> int:
        return self.manager.chain_send(self.agent_id, self.fd, data)

    def recv(self, count: int = 65536) -> bytes:
        return self.manager.chain_recv(self.agent_id, self.fd, count)

    def close(self) -> None:
        try:
            self.manager.chain_close(self.agent_id, self.fd)
        except SimError:
            pass


class FrameLink:
    """Correlated request/response framing over any byte transport."""

    def __init__(self, kernel, transport):
        self.kernel = kernel
        self.transport = transport
        # resync: a reused exploit connection may still hold service output
        self.buffer = FrameBuffer(resync=True)
        self.inbox: dict[int, ProxyFrame] = {}
        self._next_corr = 1

    def next_corr(self) -> int:
        corr = self._next_corr
        self._next_corr += 1
        return corr

    def send_frame(self, frame: ProxyFrame) -> None:
        self.transport.send(encode_frame(frame))

    def recv_frame(self, corr: int) -> ProxyFrame:
        """Wait for the response to `corr`; other responses are parked
        in the inbox for their own waiters."""
        while corr not in self.inbox:
            try:
                data = self.transport.recv(65536)
            except (Etimedout, SimError) as e:
                raise AgentLost(str(e))
            if not data:
                raise AgentLost("control link closed")
            for frame in self.buffer.feed(data):
                if frame.frame_type in (RESPONSE, ERROR):
                    self.inbox[frame.correlation_id] = frame
        return self.inbox.pop(corr)

    def close(self) -> None:
        self.transport.close()
