from .database import (
    AGENT,
    CRASH_APP,
    CRASH_OS,
    RESET_APP,
    RESET_OS,
    ExploitDatabase,
    ExploitEntry,
    OutcomeRow,
    Requirement,
    load_exploit_db,
    parse_exploit_db,
)
from .engine import (
    AGENT_INSTALLED,
    NO_EFFECT,
    REQUIREMENTS_UNMET,
    ExploitEngine,
    Outcome,
    draw_outcome,
    requirements_met,
    resolution_rng,
    resolve_outcome,
)
from .payload import (
    MAX_FRAME,
    MARKER,
    MagicPayload,
    StreamScanner,
    encode_payload,
    parse_os,
    serialize_os,
    try_parse,
)

__all__ = [
    "AGENT",
    "AGENT_INSTALLED",
    "CRASH_APP",
    "CRASH_OS",
    "ExploitDatabase",
    "ExploitEngine",
    "ExploitEntry",
    "MAX_FRAME",
    "MARKER",
    "MagicPayload",
    "NO_EFFECT",
    "Outcome",
    "OutcomeRow",
    "REQUIREMENTS_UNMET",
    "RESET_APP",
    "RESET_OS",
    "Requirement",
    "StreamScanner",
    "draw_outcome",
    "encode_payload",
    "load_exploit_db",
    "parse_exploit_db",
    "parse_os",
    "requirements_met",
    "resolution_rng",
    "resolve_outcome",
    "serialize_os",
    "try_parse",
]
