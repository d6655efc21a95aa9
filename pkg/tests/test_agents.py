"""Agent protocol: frame codec, installs, proxied syscalls, chains."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from insight.agents import (
    AgentManager,
    FrameBuffer,
    HostSocket,
    ProxyFrame,
    chain_data_frame,
    chain_open_frame,
    decode_frame,
    encode_frame,
    err_response,
    error_frame,
    ok_response,
    request_frame,
)
from insight.errors import (
    AgentLost,
    BadMagic,
    ChecksumMismatch,
    ConnectionRefused,
    Eacces,
    Ebadf,
    Etimedout,
    FrameTooShort,
    MachineDown,
    Unreachable,
)
from insight.exploits import ExploitEngine, MagicPayload, parse_exploit_db
from insight.kernel import (
    boot,
    sys_getpid,
    sys_open,
    sys_read,
    sys_stat,
    sys_time,
    O_READ,
)
from insight.scenario import parse_scenario

PIVOT = """\
scenario pivot
network outer 10.0.1.0/24
network inner 10.0.2.0/24

machine attacker
    os name=linux
    interface outer 10.0.1.2
    user operator privilege=root

machine bastion
    os name=linux version=9.0
    interface outer 10.0.1.10
    interface inner 10.0.2.10
    service netsvc port=80 run_as=svc
    user svc privilege=user

machine vault
    os name=linux
    interface inner 10.0.2.20
    service netsvc port=80 run_as=svc
    user svc privilege=user
"""

AGENTS_DB = b"""<database>
  <exploit id="take-over">
    <requirement type="system"><os name="linux"/></requirement>
    <requirement type="application" name="netsvc"/>
    <requirement type="port" number="80"/>
    <results><agent chance="1.0"/></results>
  </exploit>
  <exploit id="root-claim">
    <requirement type="system"><os name="linux"/></requirement>
    <results><agent chance="1.0"/></results>
  </exploit>
  <exploit id="win-only">
    <requirement type="system"><os name="windows"/></requirement>
    <results><agent chance="1.0"/></results>
  </exploit>
</database>"""


def pivot(with_engine=False):
    k = boot(parse_scenario(PIVOT))
    engine = None
    if with_engine:
        engine = ExploitEngine(k, parse_exploit_db(AGENTS_DB), seed=1)
    mgr = AgentManager(k, engine)
    return k, mgr


# -- wire format -------------------------------------------------------------


class TestFrameCodec:
    def test_request_round_trip(self):
        f = request_frame(7, "read", (3, 100))
        assert decode_frame(encode_frame(f)) == f

    def test_every_builder_round_trips(self):
        frames = [
            request_frame(1, "open", ("/etc/motd", 1)),
            ok_response(2, b"data"),
            err_response(3, "EACCES", "/etc/shadow"),
            chain_open_frame(4, "10.0.2.20", 80),
            chain_data_frame(5, 6, b"\x00\xffpayload"),
            error_frame(6, "unhandled frame type"),
        ]
        for f in frames:
            assert decode_frame(encode_frame(f)) == f

    def test_truncated_frame(self):
        raw = encode_frame(request_frame(1, "getpid", ()))
        with pytest.raises(FrameTooShort):
            decode_frame(raw[:10])
        with pytest.raises(FrameTooShort):
            decode_frame(raw[:-1])

    def test_bad_magic(self):
        raw = bytearray(encode_frame(request_frame(1, "getpid", ())))
        raw[0] = ord("J")
        with pytest.raises(BadMagic):
            decode_frame(bytes(raw))

    def test_corrupt_body_fails_checksum(self):
        raw = bytearray(encode_frame(ok_response(9, "fine")))
        raw[-6] ^= 0x40  # inside the body
        with pytest.raises(ChecksumMismatch):
            decode_frame(bytes(raw))

    def test_unknown_frame_type_still_decodes(self):
        import zlib
        raw = bytearray(encode_frame(error_frame(1, "x")))
        raw[5] = 9  # not a known type code
        blob = bytes(raw[:-4])
        raw[-4:] = zlib.crc32(blob).to_bytes(4, "big")
        frame = decode_frame(bytes(raw))
        assert frame.frame_type == "unknown_9"
        assert frame.body == "x"

    def test_trailing_garbage_in_body_rejected(self):
        import zlib
        good = encode_frame(ok_response(1, None))
        # splice an extra byte into the body and refit length + crc
        body_len = int.from_bytes(good[12:16], "big")
        patched = bytearray(good[:16 + body_len]) + b"\x00"
        patched[12:16] = (body_len + 1).to_bytes(4, "big")
        patched += zlib.crc32(bytes(patched)).to_bytes(4, "big")
        with pytest.raises(ValueError):
            decode_frame(bytes(patched))

    marshal_values = st.recursive(
        st.none() | st.booleans()
        | st.integers(min_value=-(2 ** 200), max_value=2 ** 200)
        | st.text(max_size=30) | st.binary(max_size=30),
        lambda children: st.lists(children, max_size=4).map(tuple),
        max_leaves=12,
    )

    @settings(max_examples=300, deadline=None)
    @given(
        ftype=st.sampled_from(["request", "response", "chain_open",
                               "chain_data", "error"]),
        corr=st.integers(min_value=0, max_value=2 ** 32 - 1),
        body=marshal_values,
    )
    def test_round_trip_property(self, ftype, corr, body):
        f = ProxyFrame(ftype, corr, body)
        assert decode_frame(encode_frame(f)) == f

    def test_buffer_reassembles_any_chunking(self):
        frames = [request_frame(i, "getpid", ()) for i in range(3)]
        stream = b"".join(encode_frame(f) for f in frames)
        for size in (1, 2, 3, 5, 7, 16, 64, 1000):
            buf = FrameBuffer()
            got = []
            for i in range(0, len(stream), size):
                got.extend(buf.feed(stream[i:i + size]))
            assert got == frames
            assert buf.pending == 0

    def test_buffer_strict_rejects_garbage(self):
        buf = FrameBuffer()
        with pytest.raises(BadMagic):
            buf.feed(b"this is not a frame, sixteen bytes plus")

    def test_buffer_resync_skips_garbage(self):
        f1, f2 = request_frame(1, "getpid", ()), request_frame(2, "time", ())
        stream = (b"stale service output\n" + encode_frame(f1)
                  + b"IAGPnot really a frame" + encode_frame(f2))
        buf = FrameBuffer(resync=True)
        assert buf.feed(stream) == [f1, f2]


# -- install and execute -----------------------------------------------------


class TestInstallAndExecute:
    def test_stdio_agent_answers_getpid(self):
        _, mgr = pivot()
        aid = mgr.install_agent("bastion", "user")
        assert mgr.call(aid, sys_getpid()) == mgr.agents[aid].pid

    def test_install_on_crashed_machine(self):
        k, mgr = pivot()
        k.set_machine_state("bastion", "crash")
        with pytest.raises(MachineDown):
            mgr.install_agent("bastion", "user")

    def test_two_agents_independent(self):
        _, mgr = pivot()
        a = mgr.install_agent("bastion", "user")
        b = mgr.install_agent("bastion", "root")
        assert a != b
        assert mgr.agents[a].privilege == "user"
        assert mgr.agents[b].privilege == "root"
        assert mgr.call(a, sys_getpid()) != mgr.call(b, sys_getpid())

    def test_listener_transport(self):
        k, mgr = pivot()
        aid = mgr.install_agent("bastion", "user", ("listener", 9000),
                                origin="attacker")
        assert mgr.call(aid, sys_getpid()) == mgr.agents[aid].pid
        ev = k.events.query(kind="agent_installed")[-1]
        assert ev.details["transport"] == "listener"

    def test_connect_back_transport(self):
        _, mgr = pivot()
        aid = mgr.install_agent("bastion", "user",
                                ("connect_back", "10.0.1.2", 9001),
                                origin="attacker")
        assert mgr.call(aid, sys_getpid()) == mgr.agents[aid].pid

    def test_install_event_details(self):
        k, mgr = pivot()
        aid = mgr.install_agent("bastion", "root")
        ev = k.events.query(kind="agent_installed")[0]
        assert ev.machine == "bastion"
        assert ev.details["agent_id"] == aid
        assert ev.details["privilege"] == "root"
        assert ev.details["transport"] == "stdio"

    def test_privilege_gates_protected_file(self):
        _, mgr = pivot()
        user = mgr.install_agent("bastion", "user")
        root = mgr.install_agent("bastion", "root")
        denied = mgr.execute_remote(user, sys_open("/etc/shadow", O_READ))
        assert not denied.ok and denied.error == "EACCES"
        opened = mgr.execute_remote(root, sys_open("/etc/shadow", O_READ))
        assert opened.ok and isinstance(opened.value, int)

    def test_call_raises_typed_errors(self):
        _, mgr = pivot()
        aid = mgr.install_agent("bastion", "user")
        with pytest.raises(Eacces):
            mgr.call(aid, sys_open("/etc/shadow", O_READ))

    def test_remote_file_read_matches_direct(self):
        k, mgr = pivot()
        aid = mgr.install_agent("bastion", "root")
        fd = mgr.call(aid, sys_open("/etc/motd", O_READ))
        data = mgr.call(aid, sys_read(fd, 4096))
        direct = k.machines["bastion"].fs.read_all("/etc/motd")
        assert data == direct

    def test_remote_stat_matches_direct(self):
        k, mgr = pivot()
        aid = mgr.install_agent("bastion", "user")
        remote = mgr.call(aid, sys_stat("/etc/passwd"))
        direct = k.machines["bastion"].fs.stat("/etc/passwd").as_tuple()
        assert tuple(remote) == tuple(direct)

    def test_interleaved_requests_correlate(self):
        _, mgr = pivot()
        aid = mgr.install_agent("bastion", "user")
        c1 = mgr.send_request(aid, sys_getpid())
        c2 = mgr.send_request(aid, sys_time())
        # wait out of order; responses land by correlation id
        r2 = mgr.wait_response(aid, c2)
        r1 = mgr.wait_response(aid, c1)
        assert r1.ok and r1.value == mgr.agents[aid].pid
        assert r2.ok and isinstance(r2.value, int)


# -- liveness ----------------------------------------------------------------


class TestLiveness:
    def test_crash_latches_agent_lost(self):
        k, mgr = pivot()
        aid = mgr.install_agent("bastion", "user")
        k.set_machine_state("bastion", "crash")
        with pytest.raises(AgentLost):
            mgr.execute_remote(aid, sys_getpid())
        # a reboot does not resurrect it
        k.set_machine_state("bastion", "reset")
        with pytest.raises(AgentLost):
            mgr.execute_remote(aid, sys_getpid())

    def test_reset_alone_also_kills(self):
        k, mgr = pivot()
        aid = mgr.install_agent("bastion", "user")
        k.set_machine_state("bastion", "reset")
        with pytest.raises(AgentLost):
            mgr.execute_remote(aid, sys_getpid())

    def test_killed_agent_process_is_lost(self):
        k, mgr = pivot()
        aid = mgr.install_agent("bastion", "user")
        k.kill_process("bastion", mgr.agents[aid].pid)
        with pytest.raises(AgentLost):
            mgr.execute_remote(aid, sys_getpid())

    def test_stdio_agent_survives_service_crash(self):
        k, mgr = pivot()
        aid = mgr.install_agent("bastion", "user")
        (svc_pid,) = [pid for pid, _, _ in k.running_services("bastion")]
        k.kill_process("bastion", svc_pid)
        assert mgr.call(aid, sys_getpid()) == mgr.agents[aid].pid

    def test_unknown_agent_id(self):
        _, mgr = pivot()
        with pytest.raises(AgentLost):
            mgr.execute_remote("agent-99", sys_getpid())


# -- exploit-driven installs ---------------------------------------------------


class TestExploitInstalls:
    def exploit_bastion(self, nonce=7):
        k, mgr = pivot(with_engine=True)
        sock = HostSocket(k, "attacker").connect("10.0.1.10", 80)
        sock.send(MagicPayload("take-over", nonce=nonce).encode())
        k.run_until_quiescent()
        return k, mgr, sock

    def test_remote_exploit_reuses_connection(self):
        k, mgr, sock = self.exploit_bastion()
        agent = mgr.agent_for_nonce(7)
        assert agent is not None
        assert agent.transport == ("reused_connection", 3)
        assert agent.privilege == "user"  # netsvc runs as svc
        mgr.adopt_link(agent.agent_id, sock)
        assert mgr.call(agent.agent_id, sys_getpid()) == agent.pid

    def test_exploited_service_keeps_serving(self):
        k, mgr, _ = self.exploit_bastion()
        # the service lost one descriptor, not its listener
        assert [prog for _, prog, _ in k.running_services("bastion")] \
            == ["netsvc"]
        probe = HostSocket(k, "attacker").connect("10.0.1.10", 80)
        probe.send(b"HELO\n")
        assert probe.recv().startswith(b"netsvc/1.0 on bastion")

    def test_reused_agent_dies_with_victim_process(self):
        k, mgr, sock = self.exploit_bastion()
        agent = mgr.agent_for_nonce(7)
        mgr.adopt_link(agent.agent_id, sock)
        assert mgr.call(agent.agent_id, sys_getpid()) == agent.pid
        k.kill_process("bastion", agent.host_pid)
        with pytest.raises(AgentLost):
            mgr.execute_remote(agent.agent_id, sys_getpid())

    def test_local_escalation_installs_root_agent(self):
        k, mgr = pivot(with_engine=True)
        low = mgr.install_agent("bastion", "user")
        payload = MagicPayload("root-claim", nonce=42).encode()
        mgr.agent_stdin_write(low, payload)
        elevated = mgr.agent_for_nonce(42)
        assert elevated is not None
        assert elevated.privilege == "root"
        fd = mgr.call(elevated.agent_id, sys_open("/etc/shadow", O_READ))
        assert isinstance(fd, int)
        # the old agent skipped the payload bytes and still serves
        assert mgr.call(low, sys_getpid()) == mgr.agents[low].pid

    def test_local_payload_wrong_os_no_agent(self):
        k, mgr = pivot(with_engine=True)
        low = mgr.install_agent("bastion", "user")
        mgr.agent_stdin_write(low, MagicPayload("win-only", nonce=9).encode())
        res = k.events.query(kind="exploit_result")[-1]
        assert res.details["result"] == "requirements_unmet"
        assert mgr.agent_for_nonce(9) is None
        assert mgr.call(low, sys_getpid()) == mgr.agents[low].pid

    def test_plain_text_stdin_is_inert(self):
        k, mgr = pivot(with_engine=True)
        aid = mgr.install_agent("bastion", "user")
        n = mgr.agent_stdin_write(aid, b"hello there")
        assert n == 11
        assert k.events.query(kind="exploit_attempt") == []
        assert mgr.call(aid, sys_getpid()) == mgr.agents[aid].pid


# -- chains --------------------------------------------------------------------


class TestChains:
    def test_inner_network_is_unreachable_directly(self):
        k, mgr = pivot()
        with pytest.raises(Unreachable):
            mgr.open_chain([], ("10.0.2.20", 80), origin_machine="attacker")

    def test_empty_hops_is_direct_connect(self):
        _, mgr = pivot()
        ch = mgr.open_chain([], ("10.0.1.10", 80), origin_machine="attacker")
        ch.send(b"HELO\n")
        assert ch.recv().startswith(b"netsvc/1.0 on bastion")
        ch.close()

    def test_chain_reaches_inner_network(self):
        _, mgr = pivot()
        aid = mgr.install_agent("bastion", "user", ("listener", 9000),
                                origin="attacker")
        ch = mgr.open_chain([aid], ("10.0.2.20", 80))
        ch.send(b"HELO\n")
        assert ch.recv().startswith(b"netsvc/1.0 on vault")
        ch.close()

    def test_chain_to_closed_port_refused(self):
        _, mgr = pivot()
        aid = mgr.install_agent("bastion", "user", ("listener", 9000),
                                origin="attacker")
        with pytest.raises(ConnectionRefused):
            mgr.open_chain([aid], ("10.0.2.20", 4444))

    def test_chain_send_after_close(self):
        _, mgr = pivot()
        aid = mgr.install_agent("bastion", "user", ("listener", 9000),
                                origin="attacker")
        ch = mgr.open_chain([aid], ("10.0.2.20", 80))
        ch.close()
        with pytest.raises(Ebadf):
            ch.send(b"more")

    def test_two_hop_chain_executes_syscalls(self):
        _, mgr = pivot()
        first = mgr.install_agent("bastion", "user", ("listener", 9000),
                                  origin="attacker")
        second = mgr.install_agent("vault", "user", ("listener", 7000))
        relay = mgr.open_chain([first], ("10.0.2.20", 7000))
        mgr.adopt_link(second, relay)
        # frames to the vault agent ride inside chain_data via bastion
        assert mgr.call(second, sys_getpid()) == mgr.agents[second].pid
        fd = mgr.call(second, sys_open("/etc/motd", O_READ))
        assert mgr.call(second, sys_read(fd, 4096)) \
            == b"insight simulated host\n"

    def test_chain_dies_with_hop(self):
        k, mgr = pivot()
        aid = mgr.install_agent("bastion", "user", ("listener", 9000),
                                origin="attacker")
        ch = mgr.open_chain([aid], ("10.0.2.20", 80))
        k.set_machine_state("bastion", "crash")
        with pytest.raises((AgentLost, Ebadf)):
            ch.send(b"HELO\n")

    def test_relayed_payload_attacks_target_not_hop(self):
        # the chain_data frame carries the raw payload through the hop's
        # control socket; the hop must forward it untouched, not fall to it
        k, mgr = pivot(with_engine=True)
        hop = mgr.install_agent("bastion", "user", ("listener", 9000),
                                origin="attacker")
        ch = mgr.open_chain([hop], ("10.0.2.20", 80))
        ch.send(MagicPayload("take-over", nonce=5).encode())
        k.run_until_quiescent()
        assert [rec.machine for rec in k.events.query(kind="exploit_attempt")] \
            == ["vault"]
        landed = mgr.agent_for_nonce(5)
        assert landed is not None and landed.machine_id == "vault"
        # hop agent unharmed, still answering on its own link
        assert mgr.call(hop, sys_getpid()) == mgr.agents[hop].pid
        # the attack connection is the chain tail: adopt it and use it
        mgr.adopt_link(landed.agent_id, ch)
        assert mgr.call(landed.agent_id, sys_getpid()) == landed.pid


# -- host socket plumbing --------------------------------------------------------


class TestHostSocket:
    def test_banner_exchange(self):
        k, _ = pivot()
        sock = HostSocket(k, "attacker").connect("10.0.1.10", 80)
        sock.send(b"HELO\n")
        assert sock.recv().startswith(b"netsvc/1.0 on bastion")
        sock.close()

    def test_recv_on_silent_peer_times_out(self):
        k, _ = pivot()
        sock = HostSocket(k, "attacker").connect("10.0.1.10", 80)
        # netsvc only speaks when spoken to; the world goes idle
        with pytest.raises(Etimedout):
            sock.recv()
