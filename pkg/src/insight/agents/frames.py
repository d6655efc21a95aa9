"""Agent proxy wire protocol.

Every frame (docs/wire-formats.md, integers big-endian):

    0   4  magic "IAGP"
    4   1  version (1)
    5   1  frame type
    6   2  reserved, zero
    8   4  correlation id
    12  4  body length
    16  N  body (tagged values, below)
    16+N 4 CRC32 over header + body

Body values use a small recursive tagged encoding:

    0x00 none                    0x04 str    u32 len + UTF-8
    0x01 true                    0x05 bytes  u32 len + raw
    0x02 false                   0x06 tuple  u32 count + items
    0x03 int   u8 len + signed big-endian

Frame bodies by type:

    request     (op, args)
    response    (True, value) or (False, (code, detail))
    chain_open  (addr, port)
    chain_data  (fd, data); empty data asks the peer to close fd
    error       message
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

from ..errors import BadMagic, ChecksumMismatch, FrameTooShort

MAGIC = b"IAGP"
VERSION = 1
HEADER_LEN = 16
MAX_BODY = 1 << 20

REQUEST = "request"
RESPONSE = "response"
CHAIN_OPEN = "chain_open"
CHAIN_DATA = "chain_data"
ERROR = "error"

_TYPE_CODES = {REQUEST: 1, RESPONSE: 2, CHAIN_OPEN: 3, CHAIN_DATA: 4, ERROR: 5}
_TYPE_NAMES = {v: k for k, v in _TYPE_CODES.items()}


@dataclass(frozen=True)
class ProxyFrame:
    frame_type: str
    correlation_id: int
    body: object


def _encode_value(value, out: bytearray) -> None:
    if value is None:
        out.append(0x00)
    elif value is True:
        out.append(0x01)
    elif value is False:
        out.append(0x02)
    elif isinstance(value, int):
        raw = value.to_bytes((value.bit_length() + 8) // 8 or 1,
                             "big", signed=True)
        out.append(0x03)
        out.append(len(raw))
        out += raw
    elif isinstance(value, str):
        raw = value.encode("utf-8")
        out.append(0x04)
        out += len(raw).to_bytes(4, "big")
        out += raw
    elif isinstance(value, (bytes, bytearray)):
        out.append(0x05)
        out += len(value).to_bytes(4, "big")
        out += bytes(value)
    elif isinstance(value, (tuple, list)):
        out.append(0x06)
        out += len(value).to_bytes(4, "big")
        for item in value:
            _encode_value(item, out)
    else:
        raise TypeError(f"cannot marshal {type(value).__name__}")


def _decode_value(buf: bytes, pos: int):
    tag = buf[pos]
    pos += 1
    if tag == 0x00:
        return None, pos
    if tag == 0x01:
        return True, pos
    if tag == 0x02:
        return False, pos
    if tag == 0x03:
        n = buf[pos]
        pos += 1
        return int.from_bytes(buf[pos:pos + n], "big", signed=True), pos + n
    if tag == 0x04:
        n = int.from_bytes(buf[pos:pos + 4], "big")
        pos += 4
        return buf[pos:pos + n].decode("utf-8"), pos + n
    if tag == 0x05:
        n = int.from_bytes(buf[pos:pos + 4], "big")
        pos += 4
        return bytes(buf[pos:pos + n]), pos + n
    if tag == 0x06:
        n = int.from_bytes(buf[pos:pos + 4], "big")
        pos += 4
        items = []
        for _ in range(n):
            item, pos = _decode_value(buf, pos)
            items.append(item)
        return tuple(items), pos
    raise ValueError(f"bad value tag 0x{tag:02x}")


def encode_frame(frame: ProxyFrame) -> bytes:
    body = bytearray()
    _encode_value(frame.body, body)
    if len(body) > MAX_BODY:
        raise ValueError("frame body too large")
    header = bytearray(MAGIC)
    header.append(VERSION)
    header.append(_TYPE_CODES[frame.frame_type])
    header += b"\x00\x00"
    header += (frame.correlation_id & 0xFFFFFFFF).to_bytes(4, "big")
    header += len(body).to_bytes(4, "big")
    blob = bytes(header) + bytes(body)
    return blob + zlib.crc32(blob).to_bytes(4, "big")


def frame_length(header: bytes) -> int:
    """Total frame size given at least the 16 header bytes."""
    if len(header) < HEADER_LEN:
        raise FrameTooShort(len(header))
    if header[:4] != MAGIC:
        raise BadMagic(header[:4].hex())
    body_len = int.from_bytes(header[12:16], "big")
    if body_len > MAX_BODY:
        raise BadMagic(f"body length {body_len}")
    return HEADER_LEN + body_len + 4


def decode_frame(data: bytes) -> ProxyFrame:
    """Decode one complete frame; extra trailing bytes are rejected by
    length, never silently ignored."""
    total = frame_length(data[:HEADER_LEN])
    if len(data) < total:
        raise FrameTooShort(f"{len(data)} < {total}")
    data = data[:total]
    if zlib.crc32(data[:-4]) != int.from_bytes(data[-4:], "big"):
        raise ChecksumMismatch()
    ftype = _TYPE_NAMES.get(data[5], f"unknown_{data[5]}")
    corr = int.from_bytes(data[8:12], "big")
    body, end = _decode_value(data, HEADER_LEN)
    if end != total - 4:
        raise ValueError("frame body has trailing garbage")
    return ProxyFrame(ftype, corr, body)


class FrameBuffer:
    """Reassembles frames from an arbitrarily-chunked byte stream.

    Strict by default: anything that is not a frame raises. With
    resync=True garbage is skipped to the next magic instead, for
    streams that carried other traffic before the frames began (a
    reused exploit connection still holding service output)."""

    def __init__(self, resync: bool = False):
        self._buf = bytearray()
        self._resync = resync

    def feed(self, data: bytes) -> list[ProxyFrame]:
        self._buf += data
        frames = []
        while True:
            if self._resync:
                start = self._buf.find(MAGIC)
                if start < 0:
                    del self._buf[:max(0, len(self._buf) - (len(MAGIC) - 1))]
                    break
                del self._buf[:start]
            if len(self._buf) < HEADER_LEN:
                break
            try:
                total = frame_length(bytes(self._buf[:HEADER_LEN]))
            except BadMagic:
                if not self._resync:
                    raise
                del self._buf[:1]
                continue
            if len(self._buf) < total:
                break
            try:
                frames.append(decode_frame(bytes(self._buf[:total])))
            except (ChecksumMismatch, ValueError):
                if not self._resync:
                    raise
                del self._buf[:1]
                continue
            del self._buf[:total]
        return frames

    @property
    def pending(self) -> int:
        return len(self._buf)


# body builders, so call sites stay readable

def request_frame(corr: int, op: str, args: tuple) -> ProxyFrame:
    return ProxyFrame(REQUEST, corr, (op, tuple(args)))

def ok_response(corr: int, value) -> ProxyFrame:
    return ProxyFrame(RESPONSE, corr, (True, value))

def err_response(corr: int, code: str, detail: str = "") -> ProxyFrame:
    return ProxyFrame(RESPONSE, corr, (False, (code, detail)))

def chain_open_frame(corr: int, addr: str, port: int) -> ProxyFrame:
    return ProxyFrame(CHAIN_OPEN, corr, (addr, port))

def chain_data_frame(corr: int, fd: int, data: bytes) -> ProxyFrame:
    return ProxyFrame(CHAIN_DATA, corr, (fd, bytes(data)))

def error_frame(corr: int, message: str) -> ProxyFrame:
    return ProxyFrame(ERROR, corr, message)
