"""Descriptors: the kernel-side objects behind small integer fds.

Every open resource is a Descriptor subclass. Generic ops (read, write,
close, dup) exist for all kinds; kind-specific ops live on the subclass
and the syscall layer rejects them elsewhere (ENOTSOCK, EISDIR).

Refcounts track how many table slots point at a descriptor: dup and
inheritance increment, close decrements, and the payload is released at
zero.
"""

from __future__ import annotations

from ..errors import Ebadf, Eisdir
from ..waiting import WaitPoint, WouldBlock
from .filesystem import MachineFs

SEEK_SET = 0
SEEK_CUR = 1
SEEK_END = 2


class Descriptor:
    kind = "descriptor"

    def __init__(self):
        self.refcount = 0

    def read(self, count: int) -> bytes:
        raise Ebadf(f"{self.kind} not readable")

    def write(self, data: bytes) -> int:
        raise Ebadf(f"{self.kind} not writable")

    def release(self) -> None:
        """Refcount hit zero; free the payload."""

    def __repr__(self):
        return f"<{type(self).__name__} rc={self.refcount}>"


class FileHandle(Descriptor):
    """An open regular file: a position over MachineFs content."""

    kind = "file"

    def __init__(self, fs: MachineFs, path: str, readable: bool,
                 writable: bool, counters=None):
        super().__init__()
        self.fs = fs
        self.path = path
        self.readable = readable
        self.writable = writable
        self.offset = 0
        self.counters = counters

    def read(self, count: int) -> bytes:
        if not self.readable:
            raise Ebadf("file not open for reading")
        data = self.fs.read(self.path, self.offset, count)
        self.offset += len(data)
        if self.counters is not None:
            self.counters.bytes_copied += len(data)
        return data

    def write(self, data: bytes) -> int:
        if not self.writable:
            raise Ebadf("file not open for writing")
        n = self.fs.write(self.path, self.offset, bytes(data))
        self.offset += n
        if self.counters is not None:
            self.counters.bytes_copied += n
        return n

    def lseek(self, offset: int, whence: int) -> int:
        if whence == SEEK_SET:
            new = offset
        elif whence == SEEK_CUR:
            new = self.offset + offset
        elif whence == SEEK_END:
            new = self.fs.size(self.path) + offset
        else:
            raise Ebadf(f"bad whence {whence}")
        if new < 0:
            raise Ebadf("seek before start of file")
        self.offset = new
        return new

    def stat(self) -> tuple:
        return self.fs.stat(self.path).as_tuple()


class DirHandle(Descriptor):
    """An open directory; read() is refused, entries() lists it."""

    kind = "dir"

    def __init__(self, fs: MachineFs, path: str):
        super().__init__()
        self.fs = fs
        self.path = path

    def read(self, count: int) -> bytes:
        raise Eisdir(self.path)

    def entries(self) -> list[str]:
        return self.fs.listdir(self.path)

    def stat(self) -> tuple:
        return self.fs.stat(self.path).as_tuple()


class PipeBuffer:
    """Shared FIFO between pipe ends; also the stdin/stdout transport."""

    def __init__(self, counters=None):
        self.data = bytearray()
        self.readers = 0
        self.writers = 0
        self.readable = WaitPoint()
        self.counters = counters

    def write(self, data: bytes) -> int:
        if self.readers == 0:
            raise Ebadf("pipe has no readers")
        self.data += data
        if self.counters is not None:
            self.counters.bytes_copied += len(data)
        self.readable.wake()
        return len(data)

    def read(self, count: int) -> bytes:
        if not self.data:
            if self.writers == 0:
                return b""  # EOF
            raise WouldBlock(self.readable)
        out = bytes(self.data[:count])
        del self.data[:count]
        if self.counters is not None:
            self.counters.bytes_copied += len(out)
        return out


class PipeEnd(Descriptor):
    kind = "pipe"

    def __init__(self, buffer: PipeBuffer, role: str):
        super().__init__()
        assert role in ("read", "write")
        self.buffer = buffer
        self.role = role
        if role == "read":
            buffer.readers += 1
        else:
            buffer.writers += 1

    def read(self, count: int) -> bytes:
        if self.role != "read":
            raise Ebadf("write end of pipe")
        return self.buffer.read(count)

    def write(self, data: bytes) -> int:
        if self.role != "write":
            raise Ebadf("read end of pipe")
        return self.buffer.write(bytes(data))

    def release(self) -> None:
        if self.role == "read":
            self.buffer.readers -= 1
        else:
            self.buffer.writers -= 1
            if self.buffer.writers == 0:
                # readers must wake to observe EOF
                self.buffer.readable.wake()


def make_pipe(counters=None) -> tuple[PipeEnd, PipeEnd]:
    buf = PipeBuffer(counters)
    return PipeEnd(buf, "read"), PipeEnd(buf, "write")


class DescriptorTable:
    """Per-process fd -> Descriptor map; lowest free fd on insert."""

    def __init__(self):
        self._slots: dict[int, Descriptor] = {}

    def insert(self, desc: Descriptor, at: int | None = None) -> int:
        if at is None:
            fd = 0
            while fd in self._slots:
                fd += 1
        else:
            fd = at
            if fd in self._slots:
                self._drop(fd)
        self._slots[fd] = desc
        desc.refcount += 1
        return fd

    def get(self, fd: int) -> Descriptor:
        desc = self._slots.get(fd)
        if desc is None:
            raise Ebadf(fd)
        return desc

    def dup(self, fd: int) -> int:
        return self.insert(self.get(fd))

    def _drop(self, fd: int) -> None:
        desc = self._slots.pop(fd)
        desc.refcount -= 1
        if desc.refcount == 0:
            desc.release()

    def close(self, fd: int) -> None:
        if fd not in self._slots:
            raise Ebadf(fd)
        self._drop(fd)

    def close_all(self) -> None:
        for fd in list(self._slots):
            self._drop(fd)

    def revoke(self, fd: int) -> None:
        """Remove a slot without erroring if absent; used when a resource
        is confiscated out from under a process."""
        if fd in self._slots:
            self._drop(fd)

    def swap(self, old: Descriptor, new: Descriptor) -> int:
        """Point every slot holding `old` at `new` (connection upgrade);
        returns slots changed."""
        changed = 0
        for fd, desc in list(self._slots.items()):
            if desc is old:
                self._slots[fd] = new
                changed += 1
        if changed:
            new.refcount += changed
            old.refcount -= changed
            if old.refcount == 0:
                old.release()
        return changed

    def find(self, desc: Descriptor) -> int | None:
        for fd, d in self._slots.items():
            if d is desc:
                return fd
        return None

    def fds(self) -> list[int]:
        return sorted(self._slots)

    def items(self):
        return sorted(self._slots.items())

    def __contains__(self, fd: int) -> bool:
        return fd in self._slots

    def __len__(self) -> int:
        return len(self._slots)
