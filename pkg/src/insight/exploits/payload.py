"""Magic-string payload framing and stream scanning.

A payload stands in for a real exploit's shellcode. Wire format
(docs/wire-formats.md, all integers big-endian):

    marker   8 bytes  ASCII "INSIGHT1"
    3 fields, each: u16 length + UTF-8 bytes
        1. exploit id
        2. assumed target, "key=value" pairs joined by single spaces,
           keys sorted, empty fields omitted ("" for a blank descriptor)
        3. nonce, decimal
    checksum 1 byte   sum of every preceding frame byte, mod 256

Total frame length is capped at MAX_FRAME so scanners keep a bounded
window. Anything that fails a structural check or the checksum is
ordinary traffic, not an error.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..scenario.model import OsDescriptor

MARKER = b"INSIGHT1"
MAX_FRAME = 1024

_OS_FIELDS = ("arch", "edition", "name", "servicepack", "version")


def serialize_os(d: OsDescriptor) -> str:
    pairs = [f"{k}={getattr(d, k)}" for k in _OS_FIELDS if getattr(d, k)]
    if d.patches:
        pairs.append("patches=" + ",".join(sorted(d.patches)))
    return " ".join(pairs)


def parse_os(text: str) -> OsDescriptor:
    kwargs: dict = {}
    for token in text.split():
        key, _, value = token.partition("=")
        if key == "patches":
            kwargs["patches"] = frozenset(v for v in value.split(",") if v)
        elif key in _OS_FIELDS:
            kwargs[key] = value
        else:
            raise ValueError(f"unknown field {key!r}")
    return OsDescriptor(**kwargs)


@dataclass(frozen=True)
class MagicPayload:
    exploit_id: str
    assumed_target: OsDescriptor = OsDescriptor()
    nonce: int = 0

    def encode(self) -> bytes:
        frame = bytearray(MARKER)
        for text in (self.exploit_id, serialize_os(self.assumed_target),
                     str(self.nonce)):
            raw = text.encode("utf-8")
            frame += len(raw).to_bytes(2, "big")
            frame += raw
        if len(frame) + 1 > MAX_FRAME:
            raise ValueError("payload too large to frame")
        frame.append(sum(frame) % 256)
        return bytes(frame)


def encode_payload(exploit_id: str, assumed_target: OsDescriptor = OsDescriptor(),
                   nonce: int = 0) -> bytes:
    return MagicPayload(exploit_id, assumed_target, nonce).encode()


# try_parse verdicts
OK = "ok"
PARTIAL = "partial"  # valid prefix, frame not complete yet
BAD = "bad"


def try_parse(buf, pos: int):
    """Attempt to read one frame at buf[pos:].
    Returns (OK, payload, end) | (PARTIAL, None, pos) | (BAD, None, pos)."""
    avail = len(buf) - pos
    if avail < len(MARKER):
        if bytes(buf[pos:]) == MARKER[:avail]:
            return (PARTIAL, None, pos)
        return (BAD, None, pos)
    if bytes(buf[pos:pos + 8]) != MARKER:
        return (BAD, None, pos)

    cursor = pos + 8
    fields = []
    for _ in range(3):
        if len(buf) - cursor < 2:
            return (PARTIAL, None, pos)
        flen = int.from_bytes(buf[cursor:cursor + 2], "big")
        cursor += 2
        if (cursor - pos) + flen + 1 > MAX_FRAME:
            return (BAD, None, pos)
        if len(buf) - cursor < flen:
            return (PARTIAL, None, pos)
        try:
            fields.append(bytes(buf[cursor:cursor + flen]).decode("utf-8"))
        except UnicodeDecodeError:
            return (BAD, None, pos)
        cursor += flen
    if len(buf) - cursor < 1:
        return (PARTIAL, None, pos)
    if buf[cursor] != sum(buf[pos:cursor]) % 256:
        return (BAD, None, pos)
    cursor += 1

    exploit_id, target_text, nonce_text = fields
    if not exploit_id:
        return (BAD, None, pos)
    try:
        target = parse_os(target_text)
        nonce = int(nonce_text)
    except ValueError:
        return (BAD, None, pos)
    return (OK, MagicPayload(exploit_id, target, nonce), cursor)


class StreamScanner:
    """Per-stream detector; survives arbitrary chunking of the stream.

    Keeps at most MAX_FRAME buffered bytes: a frame that cannot complete
    within the cap is structurally invalid, so older bytes can never
    become interesting again.
    """

    def __init__(self):
        self._buf = bytearray()
        self.detections = 0

    def feed(self, chunk: bytes) -> list[MagicPayload]:
        if not chunk:
            return []
        self._buf += chunk
        found = []
        pos = 0
        while True:
            start = self._buf.find(MARKER[:1], pos)
            if start < 0:
                self._buf.clear()
                return found
            verdict, payload, end = try_parse(self._buf, start)
            if verdict == OK:
                found.append(payload)
                self.detections += 1
                pos = end
            elif verdict == PARTIAL:
                # wait for more bytes; drop everything before the candidate
                del self._buf[:start]
                return found
            else:
                pos = start + 1
