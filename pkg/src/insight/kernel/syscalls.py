"""The generic syscall ABI.

Programs are generator functions that yield SyscallRequest objects and
receive results back (errors are thrown into the generator as SimError).
The opcode set is closed: twenty generic calls, everything else ENOSYS.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..vfs.filesystem import O_CREATE, O_READ, O_TRUNC, O_WRITE  # re-export
from ..vfs.descriptors import SEEK_CUR, SEEK_END, SEEK_SET  # re-export

__all__ = [
    "SYSCALL_ARITY", "SyscallRequest", "SyscallResponse",
    "O_READ", "O_WRITE", "O_CREATE", "O_TRUNC",
    "SEEK_SET", "SEEK_CUR", "SEEK_END",
    "sys_open", "sys_close", "sys_read", "sys_write", "sys_dup",
    "sys_lseek", "sys_stat", "sys_socket", "sys_bind", "sys_listen",
    "sys_accept", "sys_connect", "sys_send", "sys_recv", "sys_shutdown",
    "sys_getpid", "sys_spawn", "sys_exit", "sys_sleep", "sys_time",
]

# opcode -> argument count
SYSCALL_ARITY = {
    "open": 2,
    "close": 1,
    "read": 2,
    "write": 2,
    "dup": 1,
    "lseek": 3,
    "stat": 1,
    "socket": 0,
    "bind": 3,
    "listen": 2,
    "accept": 1,
    "connect": 3,
    "send": 2,
    "recv": 2,
    "shutdown": 2,
    "getpid": 0,
    "spawn": 2,
    "exit": 1,
    "sleep": 1,
    "time": 0,
}


@dataclass(frozen=True)
class SyscallRequest:
    op: str
    args: tuple = ()

    def summary(self) -> dict:
        """Loggable form; byte payloads are reduced to lengths."""
        shown = []
        for a in self.args:
            if isinstance(a, (bytes, bytearray)):
                shown.append(f"<{len(a)} bytes>")
            else:
                shown.append(repr(a))
        return {"op": self.op, "args": shown}


@dataclass(frozen=True)
class SyscallResponse:
    value: object = None
    error: str = ""  # error code, empty on success

    @property
    def ok(self) -> bool:
        return not self.error


def _req(op):
    def make(*args):
        return SyscallRequest(op, args)
    make.__name__ = f"sys_{op}"
    make.__qualname__ = make.__name__
    return make


sys_close = _req("close")
sys_dup = _req("dup")
sys_stat = _req("stat")
sys_socket = _req("socket")
sys_bind = _req("bind")
sys_listen = _req("listen")
sys_accept = _req("accept")
sys_connect = _req("connect")
sys_send = _req("send")
sys_recv = _req("recv")
sys_shutdown = _req("shutdown")
sys_getpid = _req("getpid")
sys_exit = _req("exit")
sys_sleep = _req("sleep")
sys_time = _req("time")


def sys_open(path: str, flags: int = O_READ) -> SyscallRequest:
    return SyscallRequest("open", (path, flags))


def sys_read(fd: int, count: int) -> SyscallRequest:
    return SyscallRequest("read", (fd, count))


def sys_write(fd: int, data: bytes) -> SyscallRequest:
    return SyscallRequest("write", (fd, data))


def sys_lseek(fd: int, offset: int, whence: int = SEEK_SET) -> SyscallRequest:
    return SyscallRequest("lseek", (fd, offset, whence))


def sys_spawn(program: str, argv: tuple = ()) -> SyscallRequest:
    return SyscallRequest("spawn", (program, tuple(argv)))
