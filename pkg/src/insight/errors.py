"""Simulator exception hierarchy.

Syscall handlers raise SimError subclasses; the kernel dispatch point turns
them into error responses (the `code` attribute is the wire-visible name).
Control-plane errors (scenario parsing, snapshots, agents) reuse the same
base so callers can catch one family.
"""


class SimError(Exception):
    """Base error; `code` is the stable, wire-visible identifier."""

    code = "EERR"

    def __init__(self, *args):
        super().__init__(*args)

    def __str__(self):
        detail = ", ".join(str(a) for a in self.args)
        return f"{self.code}({detail})" if detail else self.code


def _err(name, code=None, base=SimError):
    return type(name, (base,), {"code": code or name})


# errno-style syscall errors
Enosys = _err("Enosys", "ENOSYS")
Ebadf = _err("Ebadf", "EBADF")
Enoent = _err("Enoent", "ENOENT")
Eacces = _err("Eacces", "EACCES")
Einval = _err("Einval", "EINVAL")
Enospc = _err("Enospc", "ENOSPC")
Eisdir = _err("Eisdir", "EISDIR")
Enotsock = _err("Enotsock", "ENOTSOCK")
Enotconn = _err("Enotconn", "ENOTCONN")
Eaddrinuse = _err("Eaddrinuse", "EADDRINUSE")
Etimedout = _err("Etimedout", "ETIMEDOUT")

# network outcomes
Unreachable = _err("Unreachable")
ConnectionRefused = _err("ConnectionRefused")
ConnectionReset = _err("ConnectionReset")
FirewallDenied = _err("FirewallDenied")

# kernel / machine lifecycle
MachineDown = _err("MachineDown")
UnknownProgram = _err("UnknownProgram")
TemplateMissing = _err("TemplateMissing")
SnapshotWhileBusy = _err("SnapshotWhileBusy")

# scenario definition
ScenarioSyntaxError = _err("ScenarioSyntaxError", "SyntaxError")
ScenarioInvalid = _err("ScenarioInvalid")
DanglingReference = _err("DanglingReference")
DuplicateAddress = _err("DuplicateAddress")
AddressSpaceExhausted = _err("AddressSpaceExhausted")

# exploits database
SchemaError = _err("SchemaError")
DuplicateExploitId = _err("DuplicateExploitId")
UnknownExploit = _err("UnknownExploit")

# agent proxy protocol
AgentLost = _err("AgentLost")
FrameTooShort = _err("FrameTooShort")
BadMagic = _err("BadMagic")
ChecksumMismatch = _err("ChecksumMismatch")

ERRORS_BY_CODE = {
    cls.code: cls
    for cls in list(globals().values())
    if isinstance(cls, type) and issubclass(cls, SimError) and cls is not SimError
}


def error_for_code(code: str, *args) -> SimError:
    """Rebuild a SimError from its wire code (unknown codes get the base)."""
    cls = ERRORS_BY_CODE.get(code)
    if cls is None:
        err = SimError(*args)
        err.code = code
        return err
    return cls(*args)
