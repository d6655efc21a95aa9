"""The simulation kernel: scheduling, syscall dispatch, machine lifecycle.

One Kernel owns every machine in a scenario. Scheduling is strictly
round-robin over machines, then processes, then threads; a visited
thread runs until it blocks, finishes, or exhausts its dispatch budget
(run-until-syscall with inline dispatch, so a thread whose syscalls all
complete immediately keeps running within its visit).

Everything is simulate-on-demand: parked threads are never resumed until
their waitpoint fires, so an idle network burns no cycles and copies no
bytes.
"""

from __future__ import annotations

import heapq

from ..counters import SimCounters
from ..errors import (
    Ebadf,
    Einval,
    Enosys,
    Enotsock,
    MachineDown,
    SimError,
)
from ..events import EventLog
from ..netstack.sockets import SocketBase, SocketDirect
from ..netstack.stack import NetworkFabric
from ..scenario.model import Scenario, ServiceSpec
from ..vfs.cache import FileCache
from ..vfs.descriptors import (
    DirHandle,
    FileHandle,
    PipeBuffer,
    PipeEnd,
)
from ..vfs.filesystem import MachineFs, O_READ, O_WRITE
from ..vfs.template import TemplateRepository
from ..waiting import WaitPoint, WouldBlock
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
from .programs import lookup_program
from .syscalls import SYSCALL_ARITY, SyscallRequest

DISPATCH_CAP = 10_000  # per thread per visit; bounds non-cooperative spinners
BOOT_ROUND_LIMIT = 10_000


class _Exit(Exception):
    def __init__(self, code):
        self.code = code


class TapContext:
    """Passed to the payload tap for every scanned chunk."""

    __slots__ = ("machine_id", "pid", "program", "service", "privilege",
                 "origin", "stream_key", "peer_machine")

    def __init__(self, machine_id, pid, program, service, privilege,
                 origin, stream_key, peer_machine=None):
        self.machine_id = machine_id
        self.pid = pid
        self.program = program
        self.service = service
        self.privilege = privilege
        self.origin = origin          # "socket_recv" | "stdin_write"
        self.stream_key = stream_key  # stable per stream direction
        self.peer_machine = peer_machine


class Kernel:
    def __init__(self, scenario: Scenario, *,
                 counters: SimCounters | None = None,
                 events: EventLog | None = None,
                 cache: FileCache | None = None,
                 templates: TemplateRepository | None = None,
                 log_syscalls: bool = False):
        self.scenario = scenario
        self.counters = counters or SimCounters()
        self.events = events or EventLog()
        self.cache = cache or FileCache()
        self.templates = templates or TemplateRepository()
        self.log_syscalls = log_syscalls
        self.sim_time = 0
        self.machines: dict[str, Machine] = {}
        self.fabric = NetworkFabric(
            scenario, counters=self.counters,
            emit=self._emit_net, now=lambda: self.sim_time)
        # exploit engine hook: tap(data, TapContext) for scanned chunks
        self.payload_tap = None
        # callbacks run after the current dispatch completes
        self._deferred: list = []
        self._sleepers: list = []   # heap of (due, seq, waitpoint)
        self._sleep_seq = 0
        self._booted = False
        for mspec in scenario.machines:
            self.machines[mspec.id] = Machine(mspec, self._make_fs(mspec))

    # -- construction -----------------------------------------------------

    def _make_fs(self, mspec) -> MachineFs:
        tid = mspec.template
        if not tid:
            tid = ("minimal-windows" if "windows" in mspec.os.name
                   else "minimal-linux")
        template = self.templates.get(tid)  # raises TemplateMissing
        return MachineFs(mspec.id, template, self.cache,
                         copy_hook=self.counters.note_copy)

    def _emit_net(self, kind, machine, **details):
        self.events.emit(self.sim_time, kind, machine, None, **details)

    # -- event helpers -----------------------------------------------------

    def emit(self, kind, machine, pid, **details):
        self.events.emit(self.sim_time, kind, machine, pid, **details)

    # -- boot ---------------------------------------------------------------

    def boot(self) -> "Kernel":
        """Start every machine's services and run until the network is
        idle (all listeners parked in accept)."""
        if self._booted:
            return self
        self._booted = True
        for machine in self.machines.values():
            self._boot_machine(machine)
        self.run_until_quiescent(BOOT_ROUND_LIMIT)
        return self

    def _boot_machine(self, machine: Machine) -> None:
        self.spawn(machine.id, "initd", uid="root")
        for svc in machine.spec.services:
            self._spawn_service(machine, svc)

    def _spawn_service(self, machine: Machine, svc: ServiceSpec) -> int:
        pid = self.spawn(machine.id, svc.program, argv=(str(svc.port),),
                         uid=svc.run_as)
        machine.processes[pid].service = svc
        return pid

    # -- process lifecycle ---------------------------------------------------

    def spawn(self, machine_id: str, program: str, argv: tuple = (),
              uid: str = "", privilege: str | None = None) -> int:
        machine = self._machine(machine_id)
        if machine.state != RUNNING:
            raise MachineDown(machine_id)
        fn = lookup_program(program)
        pid = machine.alloc_pid()
        if privilege is not None:
            pass  # explicit override (agent installs, child inheritance)
        elif uid == "root":
            privilege = "root"
        elif uid:
            privilege = machine.spec.privilege_of(uid)
        else:
            privilege = "user"
        proc = Process(pid, machine_id, program, [program, *map(str, argv)],
                       uid, privilege)
        proc.stdin_buf = PipeBuffer(self.counters)
        proc.stdout_buf = PipeBuffer(self.counters)
        proc.stdin_buf.writers += 1   # external writer keeps stdin open
        proc.stdout_buf.readers += 1  # external reader keeps stdout open
        proc.table.insert(PipeEnd(proc.stdin_buf, "read"), at=0)
        proc.table.insert(PipeEnd(proc.stdout_buf, "write"), at=1)
        ctx = ProgramContext(
            argv=proc.argv,
            env={"hostname": machine_id, "os": machine.spec.os.summary(),
                 "uid": uid or "nobody"},
            pid=pid,
            introspect=lambda what, m=machine_id: self.introspect(m, what),
        )
        gen = fn(ctx)
        if not hasattr(gen, "send"):
            raise Einval(f"program {program!r} is not a generator")
        proc.threads.append(Thread(1, gen))
        machine.processes[pid] = proc
        return pid

    def kill_process(self, machine_id: str, pid: int) -> None:
        machine = self._machine(machine_id)
        proc = machine.processes.get(pid)
        if proc is None:
            return
        self._reap(machine, proc)

    def restart_service(self, machine_id: str, pid: int) -> int | None:
        """Kill the process and, if it was a boot service, respawn it."""
        machine = self._machine(machine_id)
        proc = machine.processes.get(pid)
        svc = proc.service if proc else None
        self.kill_process(machine_id, pid)
        if svc is not None and machine.state == RUNNING:
            return self._spawn_service(machine, svc)
        return None

    def _reap(self, machine: Machine, proc: Process) -> None:
        for t in proc.threads:
            if t.state != FINISHED:
                t.state = FINISHED
                try:
                    t.gen.close()
                except Exception:
                    pass
        for _, desc in proc.table.items():
            if isinstance(desc, SocketBase):
                self.fabric.unregister(desc)
        proc.table.close_all()
        if proc.stdout_buf is not None:
            proc.stdout_buf.readable.wake()
        machine.processes.pop(proc.pid, None)
        machine.remember_reaped(proc)

    # -- machine lifecycle ----------------------------------------------------

    def set_machine_state(self, machine_id: str, transition: str) -> None:
        """transition: "crash" or "reset"."""
        machine = self._machine(machine_id)
        if transition == "crash":
            if machine.state == CRASHED:
                return  # idempotent
            self._teardown(machine)
            machine.state = CRASHED
            self.emit("machine_crash", machine_id, None, transition="crash")
        elif transition == "reset":
            self._teardown(machine)
            machine.state = RESETTING
            machine.boot_count += 1
            self.emit("machine_crash", machine_id, None, transition="reset",
                      boot_count=machine.boot_count)
            machine.state = RUNNING
            self.fabric.mark_up(machine_id)
            self._boot_machine(machine)
        else:
            raise Einval(f"bad transition {transition!r}")

    def _teardown(self, machine: Machine) -> None:
        for proc in list(machine.processes.values()):
            self._reap(machine, proc)
        self.fabric.mark_down(machine.id)

    # -- scheduling -----------------------------------------------------------

    def step(self) -> list[tuple[str, int, int, str]]:
        """One full round. Returns the visit trace:
        (machine, pid, tid, stop_reason) for every thread that ran."""
        self.sim_time += 1
        self._wake_sleepers()
        trace: list[tuple[str, int, int, str]] = []
        for machine in list(self.machines.values()):
            if machine.state != RUNNING:
                continue
            for pid in list(machine.processes):
                proc = machine.processes.get(pid)
                if proc is None:
                    continue
                for t in list(proc.threads):
                    reason = self._visit(machine, proc, t)
                    if reason is not None:
                        trace.append((machine.id, pid, t.tid, reason))
                    if machine.state != RUNNING:
                        break
                if machine.state != RUNNING:
                    break
        return trace

    def run_until_quiescent(self, max_rounds: int = BOOT_ROUND_LIMIT) -> int:
        """Step until a round visits nothing; returns rounds taken."""
        for i in range(max_rounds):
            if not self.step():
                return i + 1
        raise RuntimeError("simulation did not settle "
                           f"within {max_rounds} rounds")

    def pump_until(self, predicate, max_rounds: int = BOOT_ROUND_LIMIT) -> bool:
        """Step until predicate() is true; False if it never came true
        while any work remained."""
        for _ in range(max_rounds):
            if predicate():
                return True
            trace = self.step()
            if self.fabric.has_real_waiters:
                self.fabric.poll_real(0.001)
            elif not trace:
                if self.has_timers:
                    # everyone is waiting on a timer; skip the dead ticks
                    self.skip_to_next_timer()
                    continue
                return bool(predicate())
        return bool(predicate())

    def _wake_sleepers(self) -> None:
        while self._sleepers and self._sleepers[0][0] <= self.sim_time:
            _, _, wp = heapq.heappop(self._sleepers)
            wp.wake()

    @property
    def has_timers(self) -> bool:
        return bool(self._sleepers)

    def skip_to_next_timer(self) -> None:
        """Jump sim time to just before the earliest pending timer."""
        if self._sleepers:
            self.sim_time = max(self.sim_time, self._sleepers[0][0] - 1)

    @property
    def quiescent(self) -> bool:
        for machine in self.machines.values():
            if machine.state != RUNNING:
                continue
            for proc in machine.processes.values():
                for t in proc.threads:
                    if t.state == RUNNABLE or (t.state == BLOCKED and t.woken):
                        return False
        return True

    # -- the visit loop -----------------------------------------------------

    def _visit(self, machine: Machine, proc: Process, t: Thread) -> str | None:
        if t.state == FINISHED or (t.state == BLOCKED and not t.woken):
            return None
        budget = DISPATCH_CAP
        send_value = None
        throw_err = None

        if t.pending is not None:
            # blocked syscall whose waitpoint fired: retry it
            t.woken = False
            outcome, payload = self._dispatch(machine, proc, t, t.pending)
            if outcome == "blocked":
                self._park(t, payload)
                return "blocked"
            t.pending = None
            t.state = RUNNABLE
            if outcome == "exit":
                self._finish(machine, proc, t, code=payload)
                return "finished"
            if outcome == "error":
                throw_err = payload
            else:
                send_value = payload
            budget -= 1
            if not self._still_alive(machine, proc, t):
                return "killed"

        while True:
            try:
                if throw_err is not None:
                    err, throw_err = throw_err, None
                    req = t.gen.throw(err)
                else:
                    req = t.gen.send(send_value)
            except StopIteration:
                self._finish(machine, proc, t, code=0)
                return "finished"
            except SimError as e:
                t.exit_error = e
                self._finish(machine, proc, t, code=1)
                return "finished"

            if not isinstance(req, SyscallRequest):
                t.exit_error = Einval("program yielded a non-syscall")
                self._finish(machine, proc, t, code=1)
                return "finished"
            if budget <= 0:
                # out of budget: defer the fresh request to the next visit
                t.pending = req
                t.state = BLOCKED
                t.woken = True
                return "cap"
            outcome, payload = self._dispatch(machine, proc, t, req)
            budget -= 1
            if outcome == "blocked":
                t.pending = req
                self._park(t, payload)
                return "blocked"
            if outcome == "exit":
                self._finish(machine, proc, t, code=payload)
                return "finished"
            if outcome == "error":
                throw_err = payload
                send_value = None
            else:
                send_value = payload
            if not self._still_alive(machine, proc, t):
                return "killed"

    def _still_alive(self, machine: Machine, proc: Process, t: Thread) -> bool:
        return (machine.state == RUNNING
                and machine.processes.get(proc.pid) is proc
                and t.state != FINISHED)

    def _park(self, t: Thread, waitpoint: WaitPoint) -> None:
        t.state = BLOCKED
        t.woken = False
        waitpoint.add(t)

    def _finish(self, machine: Machine, proc: Process, t: Thread,
                code: int) -> None:
        t.state = FINISHED
        try:
            t.gen.close()
        except Exception:
            pass
        if not proc.alive:
            proc.exit_code = code
            self._reap(machine, proc)

    # -- dispatch -------------------------------------------------------------

    def _dispatch(self, machine: Machine, proc: Process, t: Thread,
                  req: SyscallRequest):
        """Returns (outcome, payload): value | error | blocked | exit."""
        try:
            arity = SYSCALL_ARITY.get(req.op)
            if arity is None:
                raise Enosys(req.op)
            if len(req.args) != arity:
                raise Einval(f"{req.op} takes {arity} args, got {len(req.args)}")
            value = self._handle(machine, proc, t, req.op, req.args)
        except WouldBlock as wb:
            return ("blocked", wb.waitpoint)
        except _Exit as ex:
            self.counters.dispatches += 1
            self._log_syscall(machine, proc, req, "exit")
            self._run_deferred()
            return ("exit", ex.code)
        except SimError as e:
            self.counters.dispatches += 1
            self._log_syscall(machine, proc, req, e.code)
            self._run_deferred()
            return ("error", e)
        self.counters.dispatches += 1
        self._log_syscall(machine, proc, req, "ok")
        self._run_deferred()
        return ("value", value)

    def _log_syscall(self, machine, proc, req, result) -> None:
        if self.log_syscalls:
            self.emit("syscall", machine.id, proc.pid,
                      **req.summary(), result=str(result))

    def defer(self, action) -> None:
        """Run `action()` right after the current dispatch completes."""
        self._deferred.append(action)

    def _run_deferred(self) -> None:
        while self._deferred:
            action = self._deferred.pop(0)
            action()

    # -- handlers ---------------------------------------------------------------

    def _handle(self, machine: Machine, proc: Process, t: Thread,
                op: str, args: tuple):
        fs = machine.fs
        table = proc.table
        if op == "open":
            path, flags = args
            if fs.is_dir(path) and not (flags & O_WRITE):
                desc = DirHandle(fs, path)
            else:
                real_path = fs.open_prepare(path, flags, proc.privilege)
                desc = FileHandle(fs, real_path, bool(flags & O_READ),
                                  bool(flags & O_WRITE), self.counters)
            return table.insert(desc)
        if op == "close":
            (fd,) = args
            desc = table.get(fd)
            if isinstance(desc, SocketBase):
                self.fabric.unregister(desc)
            table.close(fd)
            return 0
        if op == "read":
            fd, count = args
            desc = table.get(fd)
            data = desc.read(int(count))
            self._tap_read(machine, proc, desc, data)
            return data
        if op == "write":
            fd, data = args
            desc = table.get(fd)
            data = bytes(data)
            self._tap_write(machine, proc, desc, data)
            return desc.write(data)
        if op == "dup":
            (fd,) = args
            return table.dup(fd)
        if op == "lseek":
            fd, offset, whence = args
            desc = table.get(fd)
            if not isinstance(desc, FileHandle):
                raise Einval("lseek on non-file")
            return desc.lseek(int(offset), int(whence))
        if op == "stat":
            (path,) = args
            return fs.stat(path).as_tuple()
        if op == "socket":
            return table.insert(self.fabric.make_socket(machine.id))
        if op == "bind":
            fd, addr, port = args
            self.fabric.bind(self._sock(table, fd), str(addr), int(port))
            return 0
        if op == "listen":
            fd, backlog = args
            self.fabric.listen(self._sock(table, fd), int(backlog))
            return 0
        if op == "accept":
            (fd,) = args
            server = self.fabric.accept(self._sock(table, fd))
            newfd = table.insert(server)
            return (newfd, server.remote[0], server.remote[1])
        if op == "connect":
            fd, addr, port = args
            sock = self._sock(table, fd)
            result = self.fabric.connect(sock, str(addr), int(port))
            if result is not sock:
                self.fabric.unregister(sock)
                table.swap(sock, result)
            return 0
        if op == "send":
            fd, data = args
            return self._sock(table, fd).send(bytes(data))
        if op == "recv":
            fd, count = args
            sock = self._sock(table, fd)
            data = sock.recv(int(count))
            self._tap_read(machine, proc, sock, data)
            return data
        if op == "shutdown":
            fd, how = args
            self._sock(table, fd).shutdown(str(how))
            return 0
        if op == "getpid":
            return proc.pid
        if op == "spawn":
            program, argv = args
            return self.spawn(machine.id, str(program), tuple(argv),
                              uid=proc.uid, privilege=proc.privilege)
        if op == "exit":
            (code,) = args
            raise _Exit(int(code))
        if op == "sleep":
            (ticks,) = args
            return self._sleep(t, int(ticks))
        if op == "time":
            return self.sim_time
        raise Enosys(op)

    @staticmethod
    def _sock(table, fd) -> SocketBase:
        desc = table.get(fd)
        if not isinstance(desc, SocketBase):
            raise Enotsock(fd)
        return desc

    def _sleep(self, t: Thread, ticks: int):
        # the retry re-dispatches the same request, so the thread itself
        # remembers the due tick; without it every retry would re-arm
        if t.sleep_until is not None:
            if self.sim_time >= t.sleep_until:
                t.sleep_until = None
                return 0
            ticks = t.sleep_until - self.sim_time
        elif ticks <= 0:
            return 0
        else:
            t.sleep_until = self.sim_time + ticks
        wp = WaitPoint()
        self._sleep_seq += 1
        heapq.heappush(self._sleepers,
                       (self.sim_time + ticks, self._sleep_seq, wp))
        raise WouldBlock(wp)

    # -- payload taps ------------------------------------------------------------

    def _tap_read(self, machine: Machine, proc: Process, desc, data: bytes) -> None:
        """Socket data is scanned as the receiving process reads it."""
        if self.payload_tap is None or not data:
            return
        if isinstance(desc, SocketDirect):
            peer = desc.peer.machine_id if desc.peer is not None else None
            self.payload_tap(data, TapContext(
                machine.id, proc.pid, proc.program, proc.service,
                proc.privilege, "socket_recv", ("srx", id(desc.rx)), peer))

    def _tap_write(self, machine: Machine, proc: Process, desc, data: bytes) -> None:
        """Writes into another process's stdin are scanned against the
        receiving process (the local-attack path)."""
        if self.payload_tap is None or not data:
            return
        if not isinstance(desc, PipeEnd) or desc.role != "write":
            return
        target = self._stdin_owner(machine, desc.buffer)
        if target is None or target.pid == proc.pid:
            return
        self.payload_tap(data, TapContext(
            machine.id, target.pid, target.program, target.service,
            target.privilege, "stdin_write", ("stdin", id(desc.buffer)),
            peer_machine=machine.id))

    def _stdin_owner(self, machine: Machine, buffer: PipeBuffer) -> Process | None:
        for p in machine.processes.values():
            if p.stdin_buf is buffer:
                return p
        return None

    # -- external plumbing ----------------------------------------------------------

    def _machine(self, machine_id: str) -> Machine:
        m = self.machines.get(machine_id)
        if m is None:
            raise Einval(f"unknown machine {machine_id!r}")
        return m

    def process(self, machine_id: str, pid: int) -> Process | None:
        machine = self._machine(machine_id)
        return machine.processes.get(pid) or machine.reaped.get(pid)

    def write_stdin(self, machine_id: str, pid: int, data: bytes) -> int:
        """Host-side write into a process's stdin; scanned like any other
        cross-process stdin write."""
        machine = self._machine(machine_id)
        proc = machine.processes.get(pid)
        if proc is None or proc.stdin_buf is None:
            raise Ebadf(f"{machine_id}/{pid} has no stdin")
        if self.payload_tap is not None and data:
            self.payload_tap(bytes(data), TapContext(
                machine_id, pid, proc.program, proc.service, proc.privilege,
                "stdin_write", ("stdin", id(proc.stdin_buf)),
                peer_machine=None))
        n = proc.stdin_buf.write(bytes(data))
        # host-side write: no dispatch follows to drain deferred effects
        self._run_deferred()
        return n

    def close_stdin(self, machine_id: str, pid: int) -> None:
        """Drop the external writer; the process reads EOF from then on."""
        proc = self._machine(machine_id).processes.get(pid)
        if proc is None or proc.stdin_buf is None:
            return
        proc.stdin_buf.writers -= 1
        proc.stdin_buf.readable.wake()

    def read_stdout(self, machine_id: str, pid: int,
                    count: int = 1 << 20) -> bytes:
        proc = self.process(machine_id, pid)
        if proc is None or proc.stdout_buf is None:
            raise Ebadf(f"{machine_id}/{pid} has no stdout")
        buf = proc.stdout_buf
        out = bytes(buf.data[:count])
        del buf.data[:count]
        return out

    def run_to_completion(self, machine_id: str, program: str,
                          argv: tuple = (), uid: str = "root",
                          max_rounds: int = BOOT_ROUND_LIMIT) -> tuple[int | None, bytes]:
        """Spawn a program and pump until it exits; (exit_code, stdout)."""
        pid = self.spawn(machine_id, program, argv, uid)
        machine = self._machine(machine_id)
        self.pump_until(lambda: pid not in machine.processes, max_rounds)
        proc = self.process(machine_id, pid)
        out = self.read_stdout(machine_id, pid) if proc else b""
        return (proc.exit_code if proc else None), out

    def introspect(self, machine_id: str, what: str):
        """Read-only views for the bundled tools (their /proc)."""
        machine = self._machine(machine_id)
        if what == "interfaces":
            return list(machine.spec.interfaces)
        if what == "listeners":
            return [(addr, port) for mid, addr, port
                    in self.fabric.listening_entries() if mid == machine_id]
        if what == "connections":
            return [pcb.as_dict() for pcb in self.fabric.connections(machine_id)]
        raise Einval(f"unknown introspection {what!r}")

    # -- snapshots -------------------------------------------------------------------

    def running_services(self, machine_id: str) -> list[tuple[int, str, int]]:
        machine = self._machine(machine_id)
        return [(pid, p.service.program, p.service.port)
                for pid, p in machine.processes.items() if p.service]


def boot(scenario: Scenario, **kwargs) -> Kernel:
    """Build a kernel for the scenario and run it to its idle state."""
    return Kernel(scenario, **kwargs).boot()
