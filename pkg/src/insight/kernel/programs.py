"""Program registry and the bundled native programs.

A program is a generator function taking a ProgramContext; it does all
its work by yielding syscall requests. Registered programs are the only
things spawn() will run.
"""

from __future__ import annotations

from ..errors import SimError, UnknownProgram
from .syscalls import (
    O_READ,
    sys_accept,
    sys_bind,
    sys_close,
    sys_exit,
    sys_getpid,
    sys_listen,
    sys_open,
    sys_read,
    sys_recv,
    sys_send,
    sys_socket,
    sys_write,
)

PROGRAMS: dict[str, callable] = {}


def register_program(name: str):
    def deco(fn):
        PROGRAMS[name] = fn
        return fn
    return deco


def lookup_program(name: str):
    fn = PROGRAMS.get(name)
    if fn is None:
        raise UnknownProgram(name)
    return fn


def program_names() -> list[str]:
    return sorted(PROGRAMS)


STDIN = 0
STDOUT = 1


@register_program("initd")
def initd(ctx):
    """Boot helper: reads the boot script, announces boot, exits.

    Every machine runs this once per boot, which is what makes the boot
    script the hottest block in the file cache.
    """
    try:
        fd = yield sys_open("/etc/initd", O_READ)
    except SimError:
        yield sys_exit(1)
        return
    content = b""
    while True:
        chunk = yield sys_read(fd, 4096)
        if not chunk:
            break
        content += chunk
    yield sys_close(fd)
    names = [ln.strip() for ln in content.decode("utf-8", "replace").splitlines()
             if ln.strip() and not ln.strip().startswith("#")]
    yield sys_write(STDOUT, f"boot: {len(names)} service(s) configured\n".encode())
    yield sys_exit(0)


@register_program("netsvc")
def netsvc(ctx):
    """The stock network listener: banner on first data, ack after.

    argv: [netsvc, port]. Reads each connection until EOF; replies once
    per chunk received, so multi-part payloads are read (and therefore
    scanned) in full.
    """
    port = int(ctx.argv[1]) if len(ctx.argv) > 1 else 80
    banner = (f"netsvc/1.0 on {ctx.env.get('hostname', '?')}"
              f" ({ctx.env.get('os', 'unknown')})\n").encode()
    lfd = yield sys_socket()
    yield sys_bind(lfd, "0.0.0.0", port)
    yield sys_listen(lfd, 16)
    while True:
        conn, peer_addr, peer_port = yield sys_accept(lfd)
        first = True
        try:
            while True:
                data = yield sys_recv(conn, 4096)
                if not data:
                    break
                yield sys_send(conn, banner if first else b"ok\n")
                first = False
            yield sys_close(conn)
        except SimError:
            # connection reset or descriptor confiscated; back to accept
            pass


@register_program("netstat")
def netstat(ctx):
    """Connection and listener table, like the real tool."""
    pid = yield sys_getpid()
    lines = [f"netstat (pid {pid})"]
    for addr, port in ctx.introspect("listeners"):
        lines.append(f"tcp LISTEN {addr}:{port}")
    for pcb in ctx.introspect("connections"):
        lines.append(f"tcp {pcb['local']} -> {pcb['remote']}")
    yield sys_write(STDOUT, ("\n".join(lines) + "\n").encode())
    yield sys_exit(0)


@register_program("ipconfig")
def ipconfig(ctx):
    """Interface listing from the machine's own point of view."""
    lines = []
    for net, addr in ctx.introspect("interfaces"):
        lines.append(f"{net}: {addr}")
    yield sys_write(STDOUT, ("\n".join(lines) + "\n").encode())
    yield sys_exit(0)


@register_program("cat")
def cat(ctx):
    """Write the named files to stdout; handy for tests and demos."""
    status = 0
    for path in ctx.argv[1:]:
        try:
            fd = yield sys_open(path, O_READ)
        except SimError as e:
            yield sys_write(STDOUT, f"cat: {path}: {e.code}\n".encode())
            status = 1
            continue
        while True:
            chunk = yield sys_read(fd, 4096)
            if not chunk:
                break
            yield sys_write(STDOUT, chunk)
        yield sys_close(fd)
    yield sys_exit(status)
