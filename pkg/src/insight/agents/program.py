"""The agent: a thin syscall server running on a compromised machine.

One frame in, one frame out, strictly in order. Requests execute with
the agent process's own privilege; errors travel back as responses, so
the client sees the same contract as a local caller.

Control transport, by argv:
    agent pipe               frames over stdin/stdout
    agent fd <n>             frames over an inherited descriptor
    agent listen <port>      bind, accept one peer, frames over it
    agent dial <addr> <port> connect back, frames over that socket
"""

from __future__ import annotations

from ..errors import SimError
from ..kernel.programs import register_program
from ..kernel.syscalls import (
    SyscallRequest,
    sys_accept,
    sys_bind,
    sys_close,
    sys_connect,
    sys_exit,
    sys_listen,
    sys_read,
    sys_socket,
    sys_write,
)
from .frames import (
    CHAIN_DATA,
    CHAIN_OPEN,
    HEADER_LEN,
    MAGIC,
    REQUEST,
    ProxyFrame,
    decode_frame,
    encode_frame,
    err_response,
    error_frame,
    frame_length,
    ok_response,
)

READ_CHUNK = 4096


def _next_frame(fd: int, buf: bytearray):
    """Scan the control stream for the next complete frame.

    Anything that is not a frame gets skipped: the agent's stdin doubles
    as the local attack vector, so stray bytes (payloads, plain text)
    must not kill the serving loop. Returns None on EOF."""
    while True:
        start = buf.find(MAGIC)
        if start < 0:
            # keep a possible magic prefix at the tail
            del buf[:max(0, len(buf) - (len(MAGIC) - 1))]
        else:
            del buf[:start]
            if len(buf) >= HEADER_LEN:
                try:
                    total = frame_length(bytes(buf[:HEADER_LEN]))
                except SimError:
                    del buf[:1]  # absurd length field: not a real header
                    continue
                if len(buf) >= total:
                    raw = bytes(buf[:total])
                    try:
                        frame = decode_frame(raw)
                    except (SimError, ValueError):
                        del buf[:1]  # corrupt: resync from next byte
                        continue
                    del buf[:total]
                    return frame
        chunk = yield sys_read(fd, READ_CHUNK)
        if not chunk:
            return None  # clean EOF
        buf.extend(chunk)


def _handle_frame(frame: ProxyFrame):
    corr = frame.correlation_id
    if frame.frame_type == REQUEST:
        op, args = frame.body
        try:
            value = yield SyscallRequest(str(op), tuple(args))
        except SimError as e:
            return err_response(corr, e.code,
                                ", ".join(str(a) for a in e.args))
        return ok_response(corr, value)

    if frame.frame_type == CHAIN_OPEN:
        addr, port = frame.body
        fd = yield sys_socket()
        try:
            yield sys_connect(fd, str(addr), int(port))
        except SimError as e:
            yield sys_close(fd)
            return err_response(corr, e.code, str(e))
        return ok_response(corr, fd)

    if frame.frame_type == CHAIN_DATA:
        fd, data = frame.body
        try:
            if data:
                n = yield sys_write(fd, data)
                return ok_response(corr, n)
            yield sys_close(fd)
            return ok_response(corr, 0)
        except SimError as e:
            return err_response(corr, e.code, str(e))

    return error_frame(corr, f"unhandled frame type {frame.frame_type}")


@register_program("agent")
def agent_program(ctx):
    mode = ctx.argv[1] if len(ctx.argv) > 1 else "pipe"
    if mode == "pipe":
        rfd, wfd = 0, 1
    elif mode == "fd":
        rfd = wfd = int(ctx.argv[2]) if len(ctx.argv) > 2 else 3
    elif mode == "listen":
        lfd = yield sys_socket()
        yield sys_bind(lfd, "0.0.0.0", int(ctx.argv[2]))
        yield sys_listen(lfd, 1)
        conn, _, _ = yield sys_accept(lfd)
        rfd = wfd = conn
    elif mode == "dial":
        fd = yield sys_socket()
        yield sys_connect(fd, ctx.argv[2], int(ctx.argv[3]))
        rfd = wfd = fd
    else:
        yield sys_exit(2)

    buf = bytearray()
    try:
        while True:
            frame = yield from _next_frame(rfd, buf)
            if frame is None:
                break
            reply = yield from _handle_frame(frame)
            yield sys_write(wfd, encode_frame(reply))
    except SimError:
        pass  # link reset or descriptor confiscated
    yield sys_exit(0)
