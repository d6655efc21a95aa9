"""Runtime machine/process/thread tree."""

from __future__ import annotations

from ..scenario.model import MachineSpec, ServiceSpec
from ..vfs.descriptors import DescriptorTable, PipeBuffer
from ..vfs.filesystem import MachineFs

RUNNING = "running"
CRASHED = "crashed"
RESETTING = "resetting"

RUNNABLE = "runnable"
BLOCKED = "blocked_on_syscall"
FINISHED = "finished"


class Thread:
    def __init__(self, tid: int, gen):
        self.tid = tid
        self.gen = gen
        self.state = RUNNABLE
        self.pending = None        # SyscallRequest awaiting completion
        self.woken = False         # waitpoint fired; retry pending syscall
        self.sleep_until = None    # due tick while parked in sleep
        self.exit_error = None

    def wake(self) -> None:
        self.woken = True

    @property
    def parked(self) -> bool:
        return self.state == BLOCKED and not self.woken


class ProgramContext:
    """What a program sees: its argv, a tiny env, and read-only views."""

    def __init__(self, argv: list[str], env: dict, pid: int, introspect):
        self.argv = argv
        self.env = env
        self.pid = pid
        self.introspect = introspect  # introspect(what) -> snapshot


class Process:
    def __init__(self, pid: int, machine_id: str, program: str,
                 argv: list[str], uid: str, privilege: str):
        self.pid = pid
        self.machine_id = machine_id
        self.program = program
        self.argv = argv
        self.uid = uid
        self.privilege = privilege
        self.threads: list[Thread] = []
        self.table = DescriptorTable()
        self.stdin_buf: PipeBuffer | None = None
        self.stdout_buf: PipeBuffer | None = None
        self.service: ServiceSpec | None = None  # set for boot services
        self.exit_code: int | None = None

    @property
    def alive(self) -> bool:
        return any(t.state != FINISHED for t in self.threads)


class Machine:
    def __init__(self, spec: MachineSpec, fs: MachineFs):
        self.id = spec.id
        self.spec = spec
        self.fs = fs
        self.state = RUNNING
        self.boot_count = 0
        self.processes: dict[int, Process] = {}
        self.reaped: dict[int, Process] = {}  # recent, for stdout pickup
        self._next_pid = 1

    def alloc_pid(self) -> int:
        pid = self._next_pid
        self._next_pid += 1
        return pid

    @property
    def descriptor_namespace(self) -> dict[int, DescriptorTable]:
        return {pid: p.table for pid, p in self.processes.items()}

    def remember_reaped(self, proc: Process, keep: int = 128) -> None:
        self.reaped[proc.pid] = proc
        while len(self.reaped) > keep:
            self.reaped.pop(next(iter(self.reaped)))
