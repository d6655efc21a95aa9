"""Virtual filesystem: shared templates, per-machine overlays, block cache."""

from .cache import BLOCK_SIZE, DEFAULT_CAPACITY, FileCache
from .descriptors import (
    SEEK_CUR,
    SEEK_END,
    SEEK_SET,
    Descriptor,
    DescriptorTable,
    DirHandle,
    FileHandle,
    PipeBuffer,
    PipeEnd,
    make_pipe,
)
from .filesystem import (
    ABSENT,
    O_CREATE,
    O_READ,
    O_TRUNC,
    O_WRITE,
    PRIVATE,
    TEMPLATE,
    MachineFs,
    StatResult,
)
from .overlay import Overlay, OverlayFile
from .template import (
    TemplateFile,
    TemplateFs,
    TemplateRepository,
    builtin_templates,
    load_template_dir,
)

__all__ = [
    "ABSENT", "BLOCK_SIZE", "DEFAULT_CAPACITY", "Descriptor",
    "DescriptorTable", "DirHandle", "FileCache", "FileHandle", "MachineFs",
    "O_CREATE", "O_READ", "O_TRUNC", "O_WRITE", "Overlay", "OverlayFile",
    "PRIVATE", "PipeBuffer", "PipeEnd", "SEEK_CUR", "SEEK_END", "SEEK_SET",
    "StatResult", "TEMPLATE", "TemplateFile", "TemplateFs",
    "TemplateRepository", "builtin_templates", "load_template_dir",
    "make_pipe",
]
