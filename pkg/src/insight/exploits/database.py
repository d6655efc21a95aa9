"""Exploits database: XML catalog of exploit ids, target requirements,
and ordered outcome probabilities.

Schema (docs/exploits-db.md):

    <database>
      <exploit id="sample exploit">
        <requirement type="system">
          <os arch="i386" name="windows" />
          <win>XP</win>
          <edition>professional</edition>
          <servicepack>2</servicepack>
        </requirement>
        <results>
          <agent chance="0.83" />
          <crash chance="0.05" what="os" />
          <reset chance="0.00" what="os" />
          <crash chance="0.00" what="application" />
          <reset chance="0.00" what="application" />
        </results>
      </exploit>
    </database>

`<requirement type="application" name=.../>` and
`<requirement type="port" number=.../>` are accepted as extensions.
Result rows keep document order; that order is the draw order.
"""

from __future__ import annotations

import xml.etree.ElementTree as ET
from dataclasses import dataclass, field

from ..errors import DuplicateExploitId, SchemaError, UnknownExploit
from ..scenario.model import OsDescriptor

# canonical result kinds; anything else is accepted as an opaque,
# event-only outcome (IDS alarms and the like)
AGENT = "agent"
CRASH_OS = "crash_os"
RESET_OS = "reset_os"
CRASH_APP = "crash_app"
RESET_APP = "reset_app"


@dataclass(frozen=True)
class Requirement:
    kind: str  # system | application | port
    system: OsDescriptor | None = None
    application: str = ""
    port: int = 0


@dataclass(frozen=True)
class OutcomeRow:
    kind: str
    chance: float


@dataclass(frozen=True)
class ExploitEntry:
    id: str
    requirements: tuple[Requirement, ...] = ()
    outcomes: tuple[OutcomeRow, ...] = ()


@dataclass
class ExploitDatabase:
    entries: dict[str, ExploitEntry] = field(default_factory=dict)

    def get(self, exploit_id: str) -> ExploitEntry:
        entry = self.entries.get(exploit_id)
        if entry is None:
            raise UnknownExploit(exploit_id)
        return entry

    def __contains__(self, exploit_id: str) -> bool:
        return exploit_id in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries.values())

    def ids(self) -> list[str]:
        return list(self.entries)


def _chance(elem: ET.Element, where: str) -> float:
    raw = elem.get("chance")
    if raw is None:
        raise SchemaError(where, "missing chance attribute")
    try:
        value = float(raw)
    except ValueError:
        raise SchemaError(where, f"bad chance {raw!r}")
    if not 0.0 <= value <= 1.0:
        raise SchemaError(where, f"chance {raw!r} outside [0,1]")
    return value


def _system_requirement(req: ET.Element, where: str) -> Requirement:
    fields = {"name": "", "arch": "", "version": "", "edition": "",
              "servicepack": ""}
    patches: list[str] = []
    for child in req:
        if child.tag == "os":
            for attr in fields:
                if child.get(attr):
                    fields[attr] = child.get(attr)
        elif child.tag in ("win", "version"):
            # <win>XP</win> is the product version, spelled historically
            fields["version"] = (child.text or "").strip()
        elif child.tag in ("edition", "servicepack"):
            fields[child.tag] = (child.text or "").strip()
        elif child.tag == "patch":
            patches.append((child.text or "").strip())
        else:
            raise SchemaError(where, f"unknown system condition <{child.tag}>")
    return Requirement(
        kind="system",
        system=OsDescriptor(patches=frozenset(p for p in patches if p),
                            **fields),
    )


def _requirement(req: ET.Element, where: str) -> Requirement:
    rkind = req.get("type")
    if rkind == "system":
        return _system_requirement(req, where)
    if rkind == "application":
        name = req.get("name", "")
        if not name:
            raise SchemaError(where, "application requirement needs name")
        return Requirement(kind="application", application=name)
    if rkind == "port":
        raw = req.get("number", "")
        try:
            port = int(raw)
        except ValueError:
            port = -1
        if not 1 <= port <= 65535:
            raise SchemaError(where, f"bad port number {raw!r}")
        return Requirement(kind="port", port=port)
    raise SchemaError(where, f"unknown requirement type {rkind!r}")


def _result_row(elem: ET.Element, where: str) -> OutcomeRow:
    chance = _chance(elem, where)
    if elem.tag in ("crash", "reset"):
        what = elem.get("what")
        if what == "os":
            kind = CRASH_OS if elem.tag == "crash" else RESET_OS
        elif what == "application":
            kind = CRASH_APP if elem.tag == "crash" else RESET_APP
        else:
            raise SchemaError(where, f"bad what {what!r}")
        return OutcomeRow(kind, chance)
    if elem.tag == "agent":
        return OutcomeRow(AGENT, chance)
    # opaque extension result (ids_alarm, log_write, ...): event-only
    return OutcomeRow(elem.tag, chance)


def parse_exploit_db(xml: bytes | str) -> ExploitDatabase:
    """Parse the catalog; chances land as decimals in document order."""
    try:
        root = ET.fromstring(xml)
    except ET.ParseError as exc:
        raise SchemaError("document", str(exc))
    if root.tag != "database":
        raise SchemaError("document", f"root is <{root.tag}>, not <database>")

    db = ExploitDatabase()
    for i, node in enumerate(root):
        if node.tag != "exploit":
            raise SchemaError(f"database[{i}]", f"unexpected <{node.tag}>")
        eid = node.get("id")
        if not eid:
            raise SchemaError(f"database[{i}]", "exploit without id")
        where = f"exploit[{eid}]"
        if eid in db.entries:
            raise DuplicateExploitId(eid)
        requirements = []
        outcomes = None
        for child in node:
            if child.tag == "requirement":
                requirements.append(_requirement(child, where))
            elif child.tag == "results":
                if outcomes is not None:
                    raise SchemaError(where, "multiple <results> blocks")
                outcomes = tuple(_result_row(r, where) for r in child)
            else:
                raise SchemaError(where, f"unexpected <{child.tag}>")
        db.entries[eid] = ExploitEntry(
            id=eid,
            requirements=tuple(requirements),
            outcomes=outcomes or (),
        )
    return db


def load_exploit_db(path: str) -> ExploitDatabase:
    with open(path, "rb") as fh:
        return parse_exploit_db(fh.read())
