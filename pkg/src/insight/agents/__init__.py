"""Syscall-proxy agents: wire protocol, in-sim server, client links."""

from .frames import (
    CHAIN_DATA,
    CHAIN_OPEN,
    ERROR,
    HEADER_LEN,
    MAGIC,
    MAX_BODY,
    REQUEST,
    RESPONSE,
    FrameBuffer,
    ProxyFrame,
    chain_data_frame,
    chain_open_frame,
    decode_frame,
    encode_frame,
    err_response,
    error_frame,
    frame_length,
    ok_response,
    request_frame,
)
from .link import ChannelStream, FrameLink, HostSocket, StdioTransport, pump_call
from .manager import AGENT_FD, Agent, AgentManager
from . import program  # registers the "agent" program

__all__ = [
    "MAGIC", "HEADER_LEN", "MAX_BODY",
    "REQUEST", "RESPONSE", "CHAIN_OPEN", "CHAIN_DATA", "ERROR",
    "ProxyFrame", "FrameBuffer",
    "encode_frame", "decode_frame", "frame_length",
    "request_frame", "ok_response", "err_response",
    "chain_open_frame", "chain_data_frame", "error_frame",
    "HostSocket", "StdioTransport", "ChannelStream", "FrameLink",
    "pump_call",
    "Agent", "AgentManager", "AGENT_FD",
    "program",
]
