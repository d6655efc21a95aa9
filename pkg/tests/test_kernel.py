"""Kernel: boot, scheduling, dispatch, machine lifecycle."""

import pytest

from insight.counters import SimCounters
from insight.errors import (
    ConnectionReset,
    Ebadf,
    Enosys,
    MachineDown,
    SimError,
    Unreachable,
)
from insight.kernel import (
    Kernel,
    boot,
    register_program,
    sys_close,
    sys_connect,
    sys_dup,
    sys_exit,
    sys_getpid,
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
    O_READ,
    O_WRITE,
    O_CREATE,
    SEEK_SET,
)
from insight.kernel.syscalls import SyscallRequest
from insight.scenario import LanParams, generate_lan, parse_scenario

TWO_HOSTS = """\
scenario two
network lan1 10.0.1.0/24

machine attacker
    os name=linux
    interface lan1 10.0.1.2
    user operator privilege=root

machine web
    os name=linux
    interface lan1 10.0.1.10
    service netsvc port=80 run_as=svc
    user svc privilege=user
"""

THREE_SLEEPERS = """\
scenario sleepy
network lan1 10.0.1.0/24

machine m1
    os name=linux
    interface lan1 10.0.1.1

machine m2
    os name=linux
    interface lan1 10.0.1.2

machine m3
    os name=linux
    interface lan1 10.0.1.3
"""


@register_program("probe")
def probe(ctx):
    """connect, say hello, print the banner"""
    target, port = ctx.argv[1], int(ctx.argv[2])
    fd = yield sys_socket()
    yield sys_connect(fd, target, port)
    yield sys_send(fd, b"HELO\n")
    banner = yield sys_recv(fd, 4096)
    yield sys_write(1, banner)
    yield sys_shutdown(fd, "write")
    yield sys_close(fd)
    yield sys_exit(0)


@register_program("ticker")
def ticker(ctx):
    while True:
        yield sys_sleep(1)


@register_program("spinner")
def spinner(ctx):
    while True:
        yield sys_getpid()


@register_program("echo-stdin")
def echo_stdin(ctx):
    while True:
        data = yield sys_read(0, 4096)
        if not data:
            break
        yield sys_write(1, data)
    yield sys_exit(0)


@register_program("clockwatch")
def clockwatch(ctx):
    t0 = yield sys_time()
    yield sys_sleep(5)
    t1 = yield sys_time()
    yield sys_write(1, f"{t1 - t0}\n".encode())
    yield sys_exit(0)


@register_program("fd-games")
def fd_games(ctx):
    fd = yield sys_open("/tmp/out", O_WRITE | O_CREATE)
    yield sys_write(fd, b"hello world")
    yield sys_lseek(fd, 0, SEEK_SET)
    dupfd = yield sys_dup(fd)
    yield sys_close(fd)
    yield sys_write(dupfd, b"HELLO")  # still valid through the dup
    yield sys_close(dupfd)
    st = yield sys_stat("/tmp/out")
    yield sys_write(1, f"{st[0]} {st[1]}\n".encode())
    try:
        yield sys_read(99, 1)
    except SimError as e:
        yield sys_write(1, f"badfd:{e.code}\n".encode())
    try:
        yield SyscallRequest("mmap", ())
    except SimError as e:
        yield sys_write(1, f"nosys:{e.code}\n".encode())
    yield sys_exit(0)


class TestBoot:
    def test_empty_scenario(self):
        k = boot(parse_scenario("scenario empty\n"))
        assert k.step() == []
        assert k.machines == {}

    def test_two_hosts(self):
        k = boot(parse_scenario(TWO_HOSTS))
        assert set(k.machines) == {"attacker", "web"}
        assert k.fabric.listening_entries() == [("web", "0.0.0.0", 80)]
        assert k.quiescent

    def test_lan_boots_all_listeners(self):
        s = generate_lan(LanParams(machine_count=250), seed=4)
        k = boot(s)
        entries = k.fabric.listening_entries()
        assert len(entries) == 250
        assert all(port == 80 for _, _, port in entries)

    def test_two_services_one_machine(self):
        text = TWO_HOSTS.replace(
            "    service netsvc port=80 run_as=svc",
            "    service netsvc port=80 run_as=svc\n"
            "    service netsvc port=8080 run_as=svc")
        k = boot(parse_scenario(text))
        services = k.running_services("web")
        assert sorted(p for _, _, p in services) == [80, 8080]
        assert len({pid for pid, _, _ in services}) == 2

    def test_boot_script_read_shares_cache(self):
        s = generate_lan(LanParams(machine_count=100), seed=1)
        k = boot(s)
        # every machine's initd read the same template block
        assert k.cache.hits >= 99

    def test_missing_template(self):
        text = TWO_HOSTS.replace("machine web\n",
                                 "machine web\n    template ghost\n")
        text = "template ghost\n" + text
        from insight.errors import TemplateMissing
        with pytest.raises(TemplateMissing):
            boot(parse_scenario(text))


class TestScheduling:
    def test_round_robin_order_and_fairness(self):
        k = boot(parse_scenario(THREE_SLEEPERS))
        for m in ("m1", "m2", "m3"):
            k.spawn(m, "ticker")
        counts = {"m1": 0, "m2": 0, "m3": 0}
        first_round = None
        for _ in range(5):
            trace = k.step()
            order = [rec[0] for rec in trace]
            if first_round is None:
                first_round = order
            for mid in order:
                counts[mid] += 1
        assert first_round == ["m1", "m2", "m3"]
        assert counts == {"m1": 5, "m2": 5, "m3": 5}

    def test_crashed_machine_not_visited(self):
        k = boot(parse_scenario(THREE_SLEEPERS))
        for m in ("m1", "m2", "m3"):
            k.spawn(m, "ticker")
        k.set_machine_state("m2", "crash")
        trace = k.step()
        assert {rec[0] for rec in trace} == {"m1", "m3"}

    def test_dispatch_cap_stops_spinner(self):
        k = boot(parse_scenario(THREE_SLEEPERS))
        k.spawn("m1", "spinner")
        trace = k.step()
        reasons = [r for m, _, _, r in trace if m == "m1"]
        assert reasons == ["cap"]
        # it keeps running in later rounds rather than starving the world
        trace2 = k.step()
        assert [r for m, _, _, r in trace2 if m == "m1"] == ["cap"]

    def test_idle_network_copies_nothing(self):
        s = generate_lan(LanParams(machine_count=30), seed=2)
        counters = SimCounters()
        k = boot(s, counters=counters)
        baseline = counters.bytes_copied
        for _ in range(100):
            assert k.step() == []
        assert counters.bytes_copied == baseline
        assert counters.dispatches > 0  # boot did real work earlier


class TestDispatch:
    def test_cross_machine_probe(self):
        k = boot(parse_scenario(TWO_HOSTS))
        code, out = k.run_to_completion(
            "attacker", "probe", ("10.0.1.10", "80"), uid="operator")
        assert code == 0
        assert out.startswith(b"netsvc/1.0 on web")
        assert b"linux" in out

    def test_file_descriptor_ops(self):
        k = boot(parse_scenario(TWO_HOSTS))
        code, out = k.run_to_completion("web", "fd-games")
        assert code == 0
        lines = out.decode().splitlines()
        assert lines[0] == "file 11"  # "HELLO world": dup shares the offset
        assert lines[1] == "badfd:EBADF"
        assert lines[2] == "nosys:ENOSYS"

    def test_stdin_echo(self):
        k = boot(parse_scenario(TWO_HOSTS))
        pid = k.spawn("web", "echo-stdin")
        k.run_until_quiescent()  # parks on read(0)
        k.write_stdin("web", pid, b"knock knock\n")
        k.run_until_quiescent()
        assert k.read_stdout("web", pid) == b"knock knock\n"
        k.write_stdin("web", pid, b"again")
        k.run_until_quiescent()
        assert k.read_stdout("web", pid) == b"again"

    def test_sleep_advances_with_time(self):
        k = boot(parse_scenario(TWO_HOSTS))
        code, out = k.run_to_completion("web", "clockwatch")
        assert code == 0
        assert int(out.strip()) >= 5

    def test_netstat_tool(self):
        k = boot(parse_scenario(TWO_HOSTS))
        code, out = k.run_to_completion("web", "netstat")
        assert code == 0
        assert b"tcp LISTEN 0.0.0.0:80" in out

    def test_ipconfig_tool(self):
        k = boot(parse_scenario(TWO_HOSTS))
        code, out = k.run_to_completion("attacker", "ipconfig")
        assert code == 0
        assert b"lan1: 10.0.1.2" in out

    def test_cat_reads_template_file(self):
        k = boot(parse_scenario(TWO_HOSTS))
        code, out = k.run_to_completion("web", "cat", ("/etc/motd",))
        assert code == 0
        assert b"simulated host" in out

    def test_spawn_from_program(self):
        @register_program("parent")
        def parent(ctx):
            child = yield sys_spawn("ipconfig", ())
            yield sys_write(1, f"child={child}\n".encode())
            yield sys_exit(0)

        k = boot(parse_scenario(TWO_HOSTS))
        code, out = k.run_to_completion("web", "parent")
        assert code == 0
        assert out.startswith(b"child=")

    def test_spawn_on_crashed_machine(self):
        k = boot(parse_scenario(TWO_HOSTS))
        k.set_machine_state("web", "crash")
        with pytest.raises(MachineDown):
            k.spawn("web", "netstat")

    def test_syscall_event_logging(self):
        k = Kernel(parse_scenario(TWO_HOSTS), log_syscalls=True)
        k.boot()
        ops = [e.details["op"] for e in k.events.query(kind="syscall")]
        assert "open" in ops and "listen" in ops


class TestLifecycle:
    def test_crash_resets_connections(self):
        k = boot(parse_scenario(TWO_HOSTS))

        @register_program("holder")
        def holder(ctx):
            fd = yield sys_socket()
            yield sys_connect(fd, "10.0.1.10", 80)
            yield sys_send(fd, b"hi")
            yield sys_recv(fd, 100)         # banner
            try:
                while True:
                    yield sys_recv(fd, 100)  # parks here
            except SimError as e:
                yield sys_write(1, f"reset:{e.code}\n".encode())
            yield sys_exit(0)

        pid = k.spawn("attacker", "holder", uid="operator")
        k.run_until_quiescent()
        assert pid in k.machines["attacker"].processes
        k.set_machine_state("web", "crash")
        k.run_until_quiescent()
        out = k.read_stdout("attacker", pid)
        assert out == b"reset:ConnectionReset\n"

    def test_crash_then_connect_unreachable(self):
        k = boot(parse_scenario(TWO_HOSTS))
        k.set_machine_state("web", "crash")

        @register_program("try-connect")
        def try_connect(ctx):
            fd = yield sys_socket()
            try:
                yield sys_connect(fd, "10.0.1.10", 80)
                yield sys_write(1, b"connected\n")
            except SimError as e:
                yield sys_write(1, f"{e.code}\n".encode())
            yield sys_exit(0)

        code, out = k.run_to_completion("attacker", "try-connect",
                                        uid="operator")
        assert out == b"Unreachable\n"

    def test_crash_idempotent(self):
        k = boot(parse_scenario(TWO_HOSTS))
        k.set_machine_state("web", "crash")
        k.set_machine_state("web", "crash")
        crashes = k.events.query(kind="machine_crash")
        assert len(crashes) == 1

    def test_reset_restores_listener_and_bumps_boot_count(self):
        k = boot(parse_scenario(TWO_HOSTS))
        old_pids = set(k.machines["web"].processes)
        k.set_machine_state("web", "reset")
        k.run_until_quiescent()
        assert k.machines["web"].boot_count == 1
        assert k.fabric.listening_entries() == [("web", "0.0.0.0", 80)]
        assert set(k.machines["web"].processes).isdisjoint(old_pids)
        code, out = k.run_to_completion(
            "attacker", "probe", ("10.0.1.10", "80"), uid="operator")
        assert out.startswith(b"netsvc/1.0 on web")

    def test_machine_events_carry_transition(self):
        k = boot(parse_scenario(TWO_HOSTS))
        k.set_machine_state("web", "reset")
        ev = k.events.query(kind="machine_crash")[0]
        assert ev.details["transition"] == "reset"
        assert ev.machine == "web"
