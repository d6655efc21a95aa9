"""Per-machine private layer over a shared template."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import Enospc

# marks a template path deleted on this machine
WHITEOUT = object()


@dataclass
class OverlayFile:
    mode: int
    data: bytearray = field(default_factory=bytearray)

    @property
    def size(self) -> int:
        return len(self.data)


class Overlay:
    """Mutable files private to one machine, plus whiteouts.

    quota_bytes caps the sum of private file sizes; None means unlimited.
    """

    def __init__(self, machine_id: str, quota_bytes: int | None = None):
        self.machine_id = machine_id
        self.quota_bytes = quota_bytes
        # path -> OverlayFile | WHITEOUT
        self._entries: dict[str, object] = {}

    def entry(self, path: str):
        return self._entries.get(path)

    def has_file(self, path: str) -> bool:
        e = self._entries.get(path)
        return e is not None and e is not WHITEOUT

    def is_whiteout(self, path: str) -> bool:
        return self._entries.get(path) is WHITEOUT

    def file(self, path: str) -> OverlayFile:
        e = self._entries.get(path)
        if not isinstance(e, OverlayFile):
            raise KeyError(path)
        return e

    def used_bytes(self) -> int:
        return sum(e.size for e in self._entries.values()
                   if isinstance(e, OverlayFile))

    def _check_quota(self, grow_by: int) -> None:
        if self.quota_bytes is None or grow_by <= 0:
            return
        if self.used_bytes() + grow_by > self.quota_bytes:
            raise Enospc(self.machine_id)

    def create(self, path: str, mode: int, data: bytes = b"") -> OverlayFile:
        """Install a private file, replacing any whiteout; the entry this
        creates shadows a same-path template file from now on."""
        self._check_quota(len(data))
        f = OverlayFile(mode=mode, data=bytearray(data))
        self._entries[path] = f
        return f

    def write(self, path: str, offset: int, data: bytes) -> int:
        f = self.file(path)
        end = offset + len(data)
        self._check_quota(end - len(f.data))
        if end > len(f.data):
            f.data.extend(b"\x00" * (end - len(f.data)))
        f.data[offset:end] = data
        return len(data)

    def truncate(self, path: str, length: int = 0) -> None:
        f = self.file(path)
        del f.data[length:]

    def whiteout(self, path: str) -> None:
        self._entries[path] = WHITEOUT

    def remove(self, path: str) -> None:
        self._entries.pop(path, None)

    def files(self) -> dict[str, OverlayFile]:
        return {p: e for p, e in self._entries.items()
                if isinstance(e, OverlayFile)}

    def whiteouts(self) -> set[str]:
        return {p for p, e in self._entries.items() if e is WHITEOUT}

    def snapshot(self) -> dict:
        """Deep copy of the overlay state, for machine snapshots."""
        return {
            "files": {p: (e.mode, bytes(e.data))
                      for p, e in self._entries.items()
                      if isinstance(e, OverlayFile)},
            "whiteouts": sorted(self.whiteouts()),
        }

    def restore(self, snap: dict) -> None:
        self._entries = {}
        for p, (mode, data) in snap["files"].items():
            self._entries[p] = OverlayFile(mode=mode, data=bytearray(data))
        for p in snap["whiteouts"]:
            self._entries[p] = WHITEOUT
