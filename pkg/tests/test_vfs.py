"""Filesystem layer: templates, overlays, copy-on-write, block cache."""

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from insight.counters import SimCounters
from insight.errors import Eacces, Ebadf, Enoent, Enospc, SimError
from insight.vfs import (
    BLOCK_SIZE,
    DescriptorTable,
    FileCache,
    FileHandle,
    MachineFs,
    O_CREATE,
    O_READ,
    O_TRUNC,
    O_WRITE,
    PRIVATE,
    TEMPLATE,
    ABSENT,
    TemplateFs,
    TemplateFile,
    builtin_templates,
    make_pipe,
)
from insight.waiting import WouldBlock


def mem_template(tid, files):
    built = {}
    for path, spec in files.items():
        content, mode = spec if isinstance(spec, tuple) else (spec, 0o644)
        built[path] = TemplateFile(mode=mode, size=len(content),
                                   loader=lambda c=content: c)
    return TemplateFs(tid, built)


@pytest.fixture
def template():
    return mem_template("base", {
        "/etc/initd": b"netsvc\n",
        "/etc/passwd": b"root:x:0\n",
        "/etc/shadow": (b"root:secret\n", 0o600),
        "/var/log/boot": b"ok\n",
        "/big": bytes(range(256)) * 64,  # 16 KiB, 4 blocks
    })


@pytest.fixture
def cache():
    return FileCache(capacity=1 << 20)


@pytest.fixture
def fs(template, cache):
    return MachineFs("m1", template, cache)


class TestResolution:
    def test_template_files_visible(self, fs):
        assert fs.resolve("/etc/initd") == TEMPLATE
        assert fs.read_all("/etc/initd") == b"netsvc\n"

    def test_absent(self, fs):
        assert fs.resolve("/nope") == ABSENT
        with pytest.raises(Enoent):
            fs.read("/nope", 0, 1)

    def test_private_shadows_template(self, fs):
        fs.write("/etc/initd", 0, b"x")
        assert fs.resolve("/etc/initd") == PRIVATE

    def test_whiteout_hides_template(self, fs):
        fs.unlink("/etc/initd")
        assert fs.resolve("/etc/initd") == ABSENT
        with pytest.raises(Enoent):
            fs.stat("/etc/initd")
        # other machines' view (the template itself) is untouched
        assert fs.template.read_all("/etc/initd") == b"netsvc\n"

    def test_recreate_after_whiteout(self, fs):
        fs.unlink("/etc/initd")
        fs.open_prepare("/etc/initd", O_WRITE | O_CREATE)
        fs.write("/etc/initd", 0, b"new\n")
        assert fs.read_all("/etc/initd") == b"new\n"
        assert fs.resolve("/etc/initd") == PRIVATE

    def test_listdir_merges_layers(self, fs):
        fs.open_prepare("/etc/hosts", O_WRITE | O_CREATE)
        fs.unlink("/etc/passwd")
        assert fs.listdir("/etc") == ["hosts", "initd", "shadow"]

    def test_listdir_missing_dir(self, fs):
        with pytest.raises(Enoent):
            fs.listdir("/no/such/dir")


class TestCopyOnWrite:
    def test_read_never_copies(self, fs):
        for _ in range(10):
            fs.read_all("/etc/passwd")
        assert fs.private_copies == 0
        assert fs.overlay.used_bytes() == 0

    def test_open_for_write_does_not_copy(self, fs):
        fs.open_prepare("/etc/initd", O_WRITE)
        assert fs.private_copies == 0
        assert fs.resolve("/etc/initd") == TEMPLATE

    def test_empty_write_does_not_copy(self, fs):
        assert fs.write("/etc/initd", 0, b"") == 0
        assert fs.private_copies == 0

    def test_first_byte_copies_whole_file(self, fs):
        fs.write("/big", 1, b"Z")
        assert fs.private_copies == 1
        content = fs.read_all("/big")
        expected = bytearray(bytes(range(256)) * 64)
        expected[1] = ord("Z")
        assert content == bytes(expected)

    def test_second_write_no_new_copy(self, fs):
        fs.write("/etc/initd", 0, b"a")
        fs.write("/etc/initd", 5, b"b")
        assert fs.private_copies == 1

    def test_write_past_end_zero_fills(self, fs):
        fs.open_prepare("/f", O_WRITE | O_CREATE)
        fs.write("/f", 4, b"tail")
        assert fs.read_all("/f") == b"\x00\x00\x00\x00tail"

    def test_copy_hook_reports_bytes(self, template, cache):
        counters = SimCounters()
        fs = MachineFs("m1", template, cache, copy_hook=counters.note_copy)
        fs.write("/big", 0, b"x")
        assert counters.private_copies == 1
        assert counters.private_copy_bytes == 16384

    def test_template_shared_by_many_machines_stays_pristine(self, template, cache):
        before = template.content_hash()
        machines = [MachineFs(f"m{i}", template, cache) for i in range(50)]
        for i, m in enumerate(machines):
            m.write("/etc/initd", 0, f"host{i}\n".encode())
            m.unlink("/var/log/boot")
        assert template.content_hash() == before
        for i, m in enumerate(machines):
            assert m.read_all("/etc/initd").startswith(f"host{i}".encode())


# Reference model: every machine gets a full private copy of the template
# up front. COW must be observationally identical to this.
class FullCopyFs:
    def __init__(self, template):
        self.files = {p: bytearray(template.read_all(p))
                      for p in template.paths()}
        self.modes = {p: template.lookup(p).mode for p in template.paths()}

    def write(self, path, offset, data):
        if path not in self.files:
            raise KeyError(path)
        if not data:
            return
        buf = self.files[path]
        end = offset + len(data)
        if end > len(buf):
            buf.extend(b"\x00" * (end - len(buf)))
        buf[offset:end] = data

    def create(self, path):
        self.files.setdefault(path, bytearray())
        self.modes.setdefault(path, 0o644)

    def unlink(self, path):
        del self.files[path]

    def tree(self):
        return {p: bytes(b) for p, b in self.files.items()}


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(
    st.sampled_from(["write", "create_write", "unlink"]),
    st.integers(0, 3),            # which machine
    st.integers(0, 4),            # which path
    st.integers(0, 5000),         # offset
    st.binary(min_size=0, max_size=200),
), max_size=25))
def test_cow_matches_full_copy_reference(ops):
    template = mem_template("base", {
        "/a": b"alpha" * 100,
        "/b": b"beta" * 2000,
        "/c": (b"gamma", 0o600),
        "/d/e": b"delta",
    })
    paths = ["/a", "/b", "/c", "/d/e", "/new"]
    cache = FileCache(capacity=1 << 18)
    cow = [MachineFs(f"m{i}", template, cache) for i in range(4)]
    ref = [FullCopyFs(template) for _ in range(4)]
    for op, mi, pi, offset, data in ops:
        path = paths[pi]
        if op == "write":
            try:
                cow[mi].write(path, offset, data)
                wrote = True
            except Enoent:
                wrote = False
            if wrote:
                ref[mi].write(path, offset, data)
            else:
                assert path not in ref[mi].files
        elif op == "create_write":
            cow[mi].open_prepare(path, O_WRITE | O_CREATE)
            cow[mi].write(path, offset, data)
            ref[mi].create(path)
            ref[mi].write(path, offset, data)
        else:
            try:
                cow[mi].unlink(path)
                removed = True
            except Enoent:
                removed = False
            if removed:
                ref[mi].unlink(path)
            else:
                assert path not in ref[mi].files
    for m_cow, m_ref in zip(cow, ref):
        assert m_cow.tree() == m_ref.tree()


class TestPermissions:
    def test_mode_bits_enforced_for_users(self, fs):
        with pytest.raises(Eacces):
            fs.check_open("/etc/shadow", O_READ, privilege="user")
        fs.check_open("/etc/shadow", O_READ, privilege="root")

    def test_write_on_read_only_mode(self, template, cache):
        fs = MachineFs("m1", template, cache)
        with pytest.raises(Eacces):
            fs.check_open("/etc/passwd", O_WRITE, privilege="user")

    def test_root_bypasses_modes(self, fs):
        fs.check_open("/etc/shadow", O_READ | O_WRITE, privilege="root")

    def test_unlink_permission(self, fs):
        with pytest.raises(Eacces):
            fs.unlink("/etc/shadow", privilege="user")


class TestQuota:
    def test_enospc_on_quota(self, template, cache):
        fs = MachineFs("m1", template, cache, quota_bytes=100)
        fs.open_prepare("/f", O_WRITE | O_CREATE)
        fs.write("/f", 0, b"x" * 100)
        with pytest.raises(Enospc):
            fs.write("/f", 100, b"y")

    def test_quota_counts_cow_copies(self, template, cache):
        fs = MachineFs("m1", template, cache, quota_bytes=100)
        with pytest.raises(Enospc):
            fs.write("/big", 0, b"x")  # whole 16 KiB copy exceeds quota


class TestCache:
    def test_shared_template_block_hits_across_machines(self, template):
        cache = FileCache()
        machines = [MachineFs(f"m{i}", template, cache) for i in range(300)]
        for m in machines:
            assert m.read_all("/etc/initd") == b"netsvc\n"
        assert cache.misses == 1
        assert cache.hits == 299

    def test_private_copies_cache_separately(self, template):
        cache = FileCache()
        a = MachineFs("a", template, cache)
        b = MachineFs("b", template, cache)
        a.write("/etc/initd", 0, b"A")
        b.write("/etc/initd", 0, b"B")
        assert a.read_all("/etc/initd")[:1] == b"A"
        assert b.read_all("/etc/initd")[:1] == b"B"
        # re-reads hit each machine's own blocks
        h = cache.hits
        assert a.read_all("/etc/initd")[:1] == b"A"
        assert b.read_all("/etc/initd")[:1] == b"B"
        assert cache.hits == h + 2

    def test_write_invalidates_only_touched_blocks(self, template):
        cache = FileCache()
        fs = MachineFs("m1", template, cache)
        fs.write("/big", 0, b"!")  # private copy
        fs.read_all("/big")        # populate 4 private blocks
        fs.write("/big", 0, b"?")  # dirty block 0 only
        misses = cache.misses
        fs.read_all("/big")
        assert cache.misses == misses + 1

    def test_lru_eviction_under_capacity(self):
        template = mem_template("t", {
            f"/f{i}": bytes([i]) * BLOCK_SIZE for i in range(10)
        })
        cache = FileCache(capacity=4 * BLOCK_SIZE)
        fs = MachineFs("m", template, cache)
        for i in range(10):
            fs.read_all(f"/f{i}")
        assert len(cache) <= 4
        assert cache.used_bytes <= 4 * BLOCK_SIZE
        assert cache.evictions == 6
        # most recent survive, oldest evicted
        fs.read_all("/f9")
        assert cache.hits >= 1

    def test_disabled_cache_same_bytes(self, template):
        on = MachineFs("m1", template, FileCache(enabled=True))
        off = MachineFs("m2", template, FileCache(enabled=False))
        for path in template.paths():
            assert on.read_all(path) == off.read_all(path)
        on.write("/a" if on.template.has_file("/a") else "/etc/initd", 0, b"zz")
        off.write("/a" if off.template.has_file("/a") else "/etc/initd", 0, b"zz")
        assert on.read_all("/etc/initd") == off.read_all("/etc/initd")
        assert off.cache.hits == 0

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 20000),
                              st.integers(0, 9000)), max_size=30),
           st.integers(2, 6))
    def test_cache_transparency_random_reads(self, reads, cap_blocks):
        content = bytes(random.Random(7).randbytes(20000))
        template = mem_template("t", {"/data": content})
        cached = MachineFs("m", template, FileCache(capacity=cap_blocks * BLOCK_SIZE))
        raw = MachineFs("m", template, FileCache(enabled=False))
        for _, offset, count in reads:
            assert cached.read("/data", offset, count) == raw.read("/data", offset, count)


class TestDescriptors:
    def test_lowest_free_fd(self, fs):
        table = DescriptorTable()
        fds = [table.insert(FileHandle(fs, "/etc/initd", True, False))
               for _ in range(3)]
        assert fds == [0, 1, 2]
        table.close(1)
        assert table.insert(FileHandle(fs, "/etc/initd", True, False)) == 1

    def test_dup_shares_offset(self, fs):
        table = DescriptorTable()
        fd = table.insert(FileHandle(fs, "/etc/initd", True, False))
        fd2 = table.dup(fd)
        assert table.get(fd) is table.get(fd2)
        table.get(fd).read(3)
        assert table.get(fd2).read(10) == b"svc\n"

    def test_refcount_release_at_zero(self, fs):
        table = DescriptorTable()
        r, w = make_pipe()
        rfd = table.insert(r)
        wfd = table.insert(w)
        wfd2 = table.dup(wfd)
        table.close(wfd)
        # one write end still open: reads would block, not EOF
        with pytest.raises(WouldBlock):
            table.get(rfd).read(1)
        table.close(wfd2)
        assert table.get(rfd).read(1) == b""  # EOF now

    def test_close_bad_fd(self):
        table = DescriptorTable()
        with pytest.raises(Ebadf):
            table.close(42)

    def test_file_offset_advances(self, fs):
        h = FileHandle(fs, "/etc/initd", True, False)
        assert h.read(3) == b"net"
        assert h.read(100) == b"svc\n"
        assert h.read(10) == b""

    def test_pipe_fifo_and_eof(self):
        r, w = make_pipe()
        w.write(b"ab")
        w.write(b"cd")
        assert r.read(3) == b"abc"
        with pytest.raises(Ebadf):
            r.write(b"x")
        w.refcount = 1
        table = DescriptorTable()
        # simulate last close via release
        w.release()
        assert r.read(10) == b"d"
        assert r.read(10) == b""


class TestBuiltinTemplates:
    def test_images_present(self):
        t = builtin_templates()
        assert set(t) == {"minimal-linux", "minimal-windows"}
        linux = t["minimal-linux"]
        assert b"netsvc" in linux.read_all("/etc/initd")
        assert linux.lookup("/etc/passwd").mode == 0o644
        assert linux.lookup("/etc/shadow").mode == 0o600

    def test_shadow_unreadable_by_user(self):
        fs = MachineFs("m", builtin_templates()["minimal-linux"], FileCache())
        with pytest.raises(Eacces):
            fs.check_open("/etc/shadow", O_READ, privilege="user")
