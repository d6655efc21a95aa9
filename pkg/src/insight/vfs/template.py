"""Immutable filesystem templates.

A template is the read-only base layer a machine's filesystem starts
from. Any number of machines share one TemplateFs instance; nothing a
machine does can modify it (writes go to the machine's overlay instead).

Content can live in memory (the builtin minimal images) or on disk,
loaded from a manifest directory. Disk-backed files are read lazily so
the block cache actually earns its keep.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field
from typing import Callable

from ..errors import Enoent, TemplateMissing


def _norm(path: str) -> str:
    if not path.startswith("/"):
        raise ValueError(f"template paths are absolute, got {path!r}")
    parts = [p for p in path.split("/") if p]
    return "/" + "/".join(parts)


@dataclass(frozen=True)
class TemplateFile:
    mode: int
    size: int
    # returns the file's full content; called lazily for disk-backed files
    loader: Callable[[], bytes] = field(compare=False, repr=False, default=lambda: b"")

    def read_all(self) -> bytes:
        data = self.loader()
        if len(data) != self.size:
            raise IOError("template content changed underneath the simulation")
        return data


class TemplateFs:
    """Read-only file tree: path -> TemplateFile, directories implicit."""

    def __init__(self, template_id: str, files: dict[str, TemplateFile]):
        self.template_id = template_id
        self._files = {_norm(p): f for p, f in files.items()}
        self._dirs = {"/"}
        for p in self._files:
            d = os.path.dirname(p)
            while d not in self._dirs:
                self._dirs.add(d)
                d = os.path.dirname(d)

    def has_file(self, path: str) -> bool:
        return _norm(path) in self._files

    def is_dir(self, path: str) -> bool:
        return _norm(path) in self._dirs

    def lookup(self, path: str) -> TemplateFile:
        f = self._files.get(_norm(path))
        if f is None:
            raise Enoent(path)
        return f

    def read_all(self, path: str) -> bytes:
        return self.lookup(path).read_all()

    def listdir(self, path: str) -> list[str]:
        d = _norm(path)
        if d not in self._dirs:
            raise Enoent(path)
        prefix = d if d.endswith("/") else d + "/"
        names = set()
        for p in list(self._files) + sorted(self._dirs):
            if p != d and p.startswith(prefix):
                names.add(p[len(prefix):].split("/", 1)[0])
        return sorted(names)

    def paths(self) -> list[str]:
        return sorted(self._files)

    def content_hash(self) -> str:
        """Digest over every path, mode, and byte; used to prove that
        running simulations never mutate a shared template."""
        h = hashlib.sha256()
        for p in sorted(self._files):
            f = self._files[p]
            h.update(p.encode())
            h.update(f.mode.to_bytes(2, "big"))
            h.update(f.read_all())
        return h.hexdigest()


def _mem(content: bytes, mode: int = 0o644) -> TemplateFile:
    return TemplateFile(mode=mode, size=len(content), loader=lambda: content)


_LINUX_INITD = b"""# boot services, one program per line
netsvc
"""

_LINUX_PASSWD = b"""root:x:0:0:root:/root
svc:x:100:100:service account:/home/svc
"""

_LINUX_SHADOW = b"""root:$1$abcd$locked
svc:$1$efgh$locked
"""

_WINDOWS_INITD = b"""# boot services, one program per line
netsvc
"""

_MOTD = b"insight simulated host\n"


def builtin_templates() -> dict[str, TemplateFs]:
    linux = TemplateFs("minimal-linux", {
        "/etc/initd": _mem(_LINUX_INITD, 0o644),
        "/etc/passwd": _mem(_LINUX_PASSWD, 0o644),
        "/etc/shadow": _mem(_LINUX_SHADOW, 0o600),
        "/etc/motd": _mem(_MOTD, 0o644),
        "/bin/netsvc": _mem(b"#!program netsvc\n", 0o755),
        "/bin/netstat": _mem(b"#!program netstat\n", 0o755),
        "/tmp/.keep": _mem(b"", 0o666),
    })
    windows = TemplateFs("minimal-windows", {
        "/etc/initd": _mem(_WINDOWS_INITD, 0o644),
        "/etc/passwd": _mem(_LINUX_PASSWD, 0o644),
        "/etc/shadow": _mem(_LINUX_SHADOW, 0o600),
        "/windows/system32/config": _mem(b"[registry stub]\n", 0o600),
        "/bin/netsvc": _mem(b"#!program netsvc\n", 0o755),
        "/bin/ipconfig": _mem(b"#!program ipconfig\n", 0o755),
        "/tmp/.keep": _mem(b"", 0o666),
    })
    return {t.template_id: t for t in (linux, windows)}


def load_template_dir(template_id: str, root: str) -> TemplateFs:
    """Build a template from a directory tree on the host disk.

    File content is read on demand, not at load time; modes come from the
    host files' permission bits.
    """
    if not os.path.isdir(root):
        raise TemplateMissing(template_id)
    files: dict[str, TemplateFile] = {}
    for dirpath, _, names in os.walk(root):
        for name in names:
            host = os.path.join(dirpath, name)
            rel = "/" + os.path.relpath(host, root).replace(os.sep, "/")
            st = os.stat(host)
            files[rel] = TemplateFile(
                mode=st.st_mode & 0o777,
                size=st.st_size,
                loader=lambda h=host: open(h, "rb").read(),
            )
    return TemplateFs(template_id, files)


class TemplateRepository:
    """Resolves template ids to TemplateFs, builtins plus loaded dirs."""

    def __init__(self):
        self._templates = builtin_templates()

    def get(self, template_id: str) -> TemplateFs:
        t = self._templates.get(template_id)
        if t is None:
            raise TemplateMissing(template_id)
        return t

    def add(self, template: TemplateFs) -> None:
        self._templates[template.template_id] = template

    def load_dir(self, template_id: str, root: str) -> TemplateFs:
        t = load_template_dir(template_id, root)
        self.add(t)
        return t

    def ids(self) -> list[str]:
        return sorted(self._templates)
