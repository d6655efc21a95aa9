"""Simulation kernel: machines, processes, scheduling, syscall dispatch."""

from .core import BOOT_ROUND_LIMIT, DISPATCH_CAP, Kernel, TapContext, boot
from .machine import (
    BLOCKED,
    CRASHED,
    FINISHED,
    Machine,
    Process,
    ProgramContext,
    RESETTING,
    RUNNABLE,
    RUNNING,
    Thread,
)
from .programs import (
    PROGRAMS,
    lookup_program,
    program_names,
    register_program,
)
from .syscalls import (
    O_CREATE,
    O_READ,
    O_TRUNC,
    O_WRITE,
    SEEK_CUR,
    SEEK_END,
    SEEK_SET,
    SYSCALL_ARITY,
    SyscallRequest,
    SyscallResponse,
    sys_accept,
    sys_bind,
    sys_close,
    sys_connect,
    sys_dup,
    sys_exit,
    sys_getpid,
    sys_listen,
    sys_lseek,
    sys_open,
    sys_read,
    sys_recv,
    sys_send,
    sys_shutdown,
    sys_sleep,
    sys_socket,
    sys_spawn,
    sys_stat,
    sys_time,
    sys_write,
)

__all__ = [
    "BLOCKED", "BOOT_ROUND_LIMIT", "CRASHED", "DISPATCH_CAP", "FINISHED",
    "Kernel", "Machine", "O_CREATE", "O_READ", "O_TRUNC", "O_WRITE",
    "PROGRAMS", "Process", "ProgramContext", "RESETTING", "RUNNABLE",
    "RUNNING", "SEEK_CUR", "SEEK_END", "SEEK_SET", "SYSCALL_ARITY",
    "SyscallRequest", "SyscallResponse", "TapContext", "Thread", "boot",
    "lookup_program", "program_names", "register_program",
    "sys_accept", "sys_bind", "sys_close", "sys_connect", "sys_dup",
    "sys_exit", "sys_getpid", "sys_listen", "sys_lseek", "sys_open",
    "sys_read", "sys_recv", "sys_send", "sys_shutdown", "sys_sleep",
    "sys_socket", "sys_spawn", "sys_stat", "sys_time", "sys_write",
]
