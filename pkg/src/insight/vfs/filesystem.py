"""One machine's view of its files: shared template under private overlay.

Reads resolve overlay first (whiteout means gone), then the template.
The first byte actually written to a template-backed file copies the
whole file into the overlay; opening for write alone copies nothing, so
a thousand machines can sit on one template without private storage.

All content reads go through the global block cache under a layer key:
("t", template_id) for template blocks shared across machines, ("m",
machine_id) for private blocks.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

from ..errors import Eacces, Einval, Eisdir, Enoent
from .cache import BLOCK_SIZE, FileCache
from .overlay import Overlay, OverlayFile
from .template import TemplateFs, _norm

# resolution provenance
PRIVATE = "private"
TEMPLATE = "template"
ABSENT = "absent"

O_READ = 0x1
O_WRITE = 0x2
O_CREATE = 0x4
O_TRUNC = 0x8


@dataclass(frozen=True)
class StatResult:
    kind: str  # "file" | "dir"
    size: int
    mode: int
    layer: str  # PRIVATE | TEMPLATE

    def as_tuple(self) -> tuple:
        return (self.kind, self.size, self.mode, self.layer)


class MachineFs:
    def __init__(self, machine_id: str, template: TemplateFs,
                 cache: FileCache, quota_bytes: int | None = None,
                 copy_hook=None):
        self.machine_id = machine_id
        self.template = template
        self.overlay = Overlay(machine_id, quota_bytes)
        self.cache = cache
        # called with (path, bytes_copied) whenever COW materializes a copy
        self.copy_hook = copy_hook
        self.private_copies = 0

    # -- layer keys -------------------------------------------------

    @property
    def _tlayer(self) -> tuple:
        return ("t", self.template.template_id)

    @property
    def _mlayer(self) -> tuple:
        return ("m", self.machine_id)

    # -- resolution --------------------------------------------------

    def resolve(self, path: str) -> str:
        """Which layer owns `path` right now: private, template, absent."""
        path = _norm(path)
        if self.overlay.has_file(path):
            return PRIVATE
        if self.overlay.is_whiteout(path):
            return ABSENT
        if self.template.has_file(path):
            return TEMPLATE
        return ABSENT

    def is_dir(self, path: str) -> bool:
        path = _norm(path)
        if self.template.is_dir(path) or path == "/":
            return True
        prefix = path + "/"
        return any(p.startswith(prefix) for p in self.overlay.files())

    def stat(self, path: str) -> StatResult:
        path = _norm(path)
        where = self.resolve(path)
        if where == PRIVATE:
            f = self.overlay.file(path)
            return StatResult("file", f.size, f.mode, PRIVATE)
        if where == TEMPLATE:
            f = self.template.lookup(path)
            return StatResult("file", f.size, f.mode, TEMPLATE)
        if self.is_dir(path):
            return StatResult("dir", 0, 0o755, TEMPLATE)
        raise Enoent(path)

    # -- permission checks --------------------------------------------

    @staticmethod
    def _can(mode: int, privilege: str, want_write: bool) -> bool:
        if privilege == "root":
            return True
        bit = 0o002 if want_write else 0o004
        return bool(mode & bit)

    def check_open(self, path: str, flags: int, privilege: str = "root") -> None:
        """Raise the error open() would produce; success means openable."""
        path = _norm(path)
        if self.is_dir(path) and (flags & O_WRITE):
            raise Eisdir(path)
        where = self.resolve(path)
        if where == ABSENT:
            if not (flags & O_CREATE):
                raise Enoent(path)
            return  # creation allowed regardless of old mode
        mode = self.stat(path).mode
        if (flags & O_WRITE) and not self._can(mode, privilege, True):
            raise Eacces(path)
        if (flags & O_READ) and not self._can(mode, privilege, False):
            raise Eacces(path)

    def open_prepare(self, path: str, flags: int, privilege: str = "root") -> str:
        """Validate an open and apply create/truncate effects.

        Returns the normalized path. Opening a template file for write
        does not copy it; the copy happens at the first written byte.
        """
        path = _norm(path)
        self.check_open(path, flags, privilege)
        where = self.resolve(path)
        if where == ABSENT and (flags & O_CREATE):
            self.overlay.create(path, 0o644)
        elif where != ABSENT and (flags & O_TRUNC) and (flags & O_WRITE):
            # truncate counts as a write: template files get an empty copy
            if where == TEMPLATE:
                f = self.template.lookup(path)
                self.overlay.create(path, f.mode)
            else:
                self.overlay.truncate(path)
            self.cache.invalidate(self._mlayer, path)
        return path

    # -- content access ------------------------------------------------

    def size(self, path: str) -> int:
        return self.stat(path).size

    def _read_block(self, path: str, where: str, index: int) -> bytes:
        if where == PRIVATE:
            layer = self._mlayer
            data = self.overlay.file(path).data

            def loader(i: int) -> bytes:
                return bytes(data[i * BLOCK_SIZE:(i + 1) * BLOCK_SIZE])
        else:
            layer = self._tlayer
            tf = self.template.lookup(path)

            def loader(i: int) -> bytes:
                return tf.read_all()[i * BLOCK_SIZE:(i + 1) * BLOCK_SIZE]
        return self.cache.fetch(layer, path, index, loader)

    def read(self, path: str, offset: int, count: int) -> bytes:
        if offset < 0 or count < 0:
            raise Einval("negative offset or count")
        path = _norm(path)
        if self.is_dir(path) and not self.template.has_file(path) \
                and not self.overlay.has_file(path):
            raise Eisdir(path)
        where = self.resolve(path)
        if where == ABSENT:
            raise Enoent(path)
        total = self.stat(path).size
        if offset >= total or count == 0:
            return b""
        end = min(offset + count, total)
        out = bytearray()
        for idx in range(offset // BLOCK_SIZE, (end - 1) // BLOCK_SIZE + 1):
            block = self._read_block(path, where, idx)
            lo = max(offset - idx * BLOCK_SIZE, 0)
            hi = min(end - idx * BLOCK_SIZE, len(block))
            out += block[lo:hi]
        return bytes(out)

    def read_all(self, path: str) -> bytes:
        return self.read(path, 0, self.stat(path).size)

    def write(self, path: str, offset: int, data: bytes) -> int:
        """Write bytes at offset, copying a template file on first byte.

        An empty write is a no-op and never triggers the copy.
        """
        if offset < 0:
            raise Einval("negative offset")
        path = _norm(path)
        if self.is_dir(path) and self.resolve(path) == ABSENT:
            raise Eisdir(path)
        where = self.resolve(path)
        if where == ABSENT:
            raise Enoent(path)
        if not data:
            return 0
        if where == TEMPLATE:
            tf = self.template.lookup(path)
            content = tf.read_all()
            self.overlay.create(path, tf.mode, content)
            self.private_copies += 1
            if self.copy_hook is not None:
                self.copy_hook(path, len(content))
        n = self.overlay.write(path, offset, data)
        self.cache.invalidate(self._mlayer, path, offset, offset + n)
        return n

    def unlink(self, path: str, privilege: str = "root") -> None:
        path = _norm(path)
        where = self.resolve(path)
        if where == ABSENT:
            raise Enoent(path)
        if self.is_dir(path) and where == ABSENT:
            raise Eisdir(path)
        if privilege != "root":
            mode = self.stat(path).mode
            if not self._can(mode, privilege, True):
                raise Eacces(path)
        if where == PRIVATE:
            self.overlay.remove(path)
            if self.template.has_file(path):
                self.overlay.whiteout(path)
        else:
            self.overlay.whiteout(path)
        self.cache.invalidate(self._mlayer, path)

    def listdir(self, path: str) -> list[str]:
        """Merged directory listing: template entries minus whiteouts,
        plus private entries."""
        path = _norm(path)
        names: set[str] = set()
        if self.template.is_dir(path):
            for name in self.template.listdir(path):
                full = path.rstrip("/") + "/" + name
                if self.template.has_file(full) and self.resolve(full) == ABSENT:
                    continue
                names.add(name)
        prefix = path.rstrip("/") + "/"
        for p in self.overlay.files():
            if p.startswith(prefix):
                names.add(p[len(prefix):].split("/", 1)[0])
        if not names and not self.is_dir(path):
            raise Enoent(path)
        return sorted(names)

    # -- whole-tree view (oracle + snapshot support) --------------------

    def tree(self) -> dict[str, bytes]:
        """Every visible file and its content; what an exhaustive reader
        would observe. Used to compare against a no-sharing reference."""
        out: dict[str, bytes] = {}
        for p in self.template.paths():
            if self.resolve(p) == TEMPLATE:
                out[p] = self.template.read_all(p)
        for p, f in self.overlay.files().items():
            out[p] = bytes(f.data)
        return out

    def snapshot(self) -> dict:
        return self.overlay.snapshot()

    def restore(self, snap: dict) -> None:
        self.overlay.restore(snap)
        self.cache.invalidate_layer(self._mlayer)
