"""LDIF content records for backup, restore and on-disk snapshots.

Export is canonical so that the same directory always produces the same
bytes:

* ``version: 1`` header, then one record per entry, parents first;
* within a record the ``dn`` line, the ``objectClass`` values, then the other
  attributes sorted by name and value;
* binary attributes are written as ``name;binary:: <base64>``, other values
  are base64-encoded only when they are not SAFE-STRINGs;
* lines longer than 76 characters are folded, continuation lines start with
  a single space; LF line ends.
"""

from __future__ import annotations

import base64
import binascii
import re
from dataclasses import dataclass
from typing import Iterable

from .directory import Clock, Directory
from .dn import DistinguishedName, Value, attr_key, parse_dn
from .entry import Entry, is_binary_attribute
from .errors import (
    AlreadyExists,
    BadVersion,
    DnError,
    MalformedLine,
    NoSuchParent,
    OrphanEntry,
    SchemaViolation,
)
from .schema import SchemaRegistry

LINE_WIDTH = 76

_ATTR_LINE = re.compile(r"([A-Za-z][A-Za-z0-9\-]*(?:;[A-Za-z0-9\-]+)*|\d+(?:\.\d+)+)(:[:<]?)[ ]*(.*)")


def is_safe_string(value: str | bytes) -> bool:
    """RFC 2849 SAFE-STRING: ASCII without NUL/LF/CR, no leading space, colon or '<'."""
    if isinstance(value, bytes):
        try:
            value = value.decode("ascii")
        except UnicodeDecodeError:
            return False
    if not value:
        return True
    if value[0] in " :<":
        return False
    return all(0 < ord(c) < 0x80 and c not in "\r\n" for c in value)


@dataclass(frozen=True)
class LdifRecord:
    dn: str
    lines: tuple[tuple[str, Value, bool], ...]  # (name, value, base64_flag)

    @classmethod
    def from_entry(cls, entry: Entry) -> LdifRecord:
        lines = []
        for value in entry.get("objectClass", []):
            lines.append(_attr_line("objectClass", value))
        rest = [(n, v) for n, vals in entry.items() if attr_key(n) != "objectclass" for v in vals]
        rest.sort(key=lambda nv: (attr_key(nv[0]), _value_bytes(nv[1])))
        for name, value in rest:
            lines.append(_attr_line(name, value))
        return cls(str(entry.dn), tuple(lines))

    def render(self) -> list[str]:
        out = [_render_line("dn", self.dn, not is_safe_string(self.dn))]
        for name, value, b64 in self.lines:
            out.append(_render_line(name, value, b64))
        return out


def _value_bytes(value: Value) -> bytes:
    return value if isinstance(value, bytes) else value.encode("utf-8")


def _attr_line(name: str, value: Value) -> tuple[str, Value, bool]:
    if is_binary_attribute(name):
        return f"{name};binary", value, True
    return name, value, isinstance(value, bytes) or not is_safe_string(value)


def _render_line(name: str, value: Value, b64: bool) -> str:
    if b64:
        return f"{name}:: {base64.b64encode(_value_bytes(value)).decode('ascii')}"
    return f"{name}: {value}"


def fold(line: str, width: int = LINE_WIDTH) -> list[str]:
    if len(line) <= width:
        return [line]
    out = [line[:width]]
    rest = line[width:]
    while rest:
        out.append(" " + rest[: width - 1])
        rest = rest[width - 1 :]
    return out


def export_ldif(source: Directory | Iterable[Entry]) -> bytes:
    entries = source.entries() if isinstance(source, Directory) else sorted(source, key=lambda e: e.dn.sort_key)
    lines = ["version: 1"]
    for entry in entries:
        lines.append("")
        for logical in LdifRecord.from_entry(entry).render():
            lines.extend(fold(logical))
    return ("\n".join(lines) + "\n").encode("ascii")


# -- import ----------------------------------------------------------------------

def _logical_lines(text: str) -> list[tuple[int, str]]:
    """Unfold continuations and drop comments; blank lines kept as ``""``."""
    out: list[tuple[int, str]] = []
    in_comment = False
    for number, raw in enumerate(text.split("\n"), start=1):
        line = raw[:-1] if raw.endswith("\r") else raw
        if line.startswith(" "):
            if in_comment:
                continue
            if not out or out[-1][1] == "":
                raise MalformedLine("continuation line without a line to continue", number)
            out[-1] = (out[-1][0], out[-1][1] + line[1:])
            continue
        in_comment = line.startswith("#")
        if in_comment:
            continue
        out.append((number, line))
    return out


def _records(lines: list[tuple[int, str]]) -> list[list[tuple[int, str]]]:
    records, current = [], []
    for number, line in lines:
        if line == "":
            if current:
                records.append(current)
                current = []
        else:
            current.append((number, line))
    if current:
        records.append(current)
    return records


def _parse_attr(number: int, line: str) -> tuple[str, Value | bytes, bool]:
    m = _ATTR_LINE.fullmatch(line)
    if m is None:
        raise MalformedLine(f"not an attribute line: {line!r}", number)
    name, sep, value = m.groups()
    if sep == ":<":
        raise MalformedLine("URL-valued attributes are not supported", number)
    if sep == "::":
        try:
            return name, base64.b64decode(value, validate=True), True
        except (binascii.Error, ValueError):
            raise MalformedLine(f"bad base64 value for {name}", number) from None
    return name, value, False


def _typed_value(name: str, raw: Value) -> Value:
    binary = is_binary_attribute(name) or "binary" in name.lower().split(";")[1:]
    if binary:
        return raw if isinstance(raw, bytes) else raw.encode("utf-8")
    if isinstance(raw, bytes):
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError:
            return raw
    return raw


def parse_ldif(data: bytes | str) -> list[tuple[int, Entry]]:
    """Parse LDIF content records into ``(line number, entry)`` pairs."""
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    records = _records(_logical_lines(text))
    if records and records[0][0][1].lower().startswith("version:"):
        number, line = records[0][0]
        if line.split(":", 1)[1].strip() != "1":
            raise BadVersion(f"unsupported LDIF version {line!r}", number)
        records[0] = records[0][1:]
        if not records[0]:
            records.pop(0)

    out = []
    for record in records:
        number, first = record[0]
        name, raw, _ = _parse_attr(number, first)
        if name.lower() != "dn":
            raise MalformedLine("record does not start with a dn line", number)
        dn_text = raw.decode("utf-8") if isinstance(raw, bytes) else raw
        try:
            dn = parse_dn(dn_text)
        except DnError as exc:
            raise MalformedLine(f"bad DN {dn_text!r}: {exc}", number) from None
        entry = Entry(dn)
        for lineno, line in record[1:]:
            name, raw, _ = _parse_attr(lineno, line)
            key = name.lower()
            if key == "changetype":
                raise MalformedLine("change records are not supported", lineno)
            if key == "dn":
                raise MalformedLine("second dn line in record", lineno)
            entry.set(name, entry.get(name, []) + [_typed_value(name, raw)])
        out.append((number, entry))
    return out


def import_ldif(
    data: bytes | str,
    *,
    suffixes: Iterable[DistinguishedName | str] | None = None,
    acl=(),
    schema: SchemaRegistry | None = None,
    clock: Clock | None = None,
) -> Directory:
    """Rebuild a directory from LDIF, schema-checking every entry.

    Without explicit ``suffixes`` every record that has no ancestor in the
    file is taken as a suffix.  A record whose parent is missing is an
    :class:`~dirplan.errors.OrphanEntry`.
    """
    parsed = parse_ldif(data)
    if suffixes is None:
        dns = [e.dn for _, e in parsed]
        roots = [d for d in dns if not any(o != d and d.is_within(o) for o in dns)]
    else:
        roots = list(suffixes)
    directory = Directory(suffixes=roots, acl=acl, schema=schema, clock=clock)
    for number, entry in parsed:
        try:
            directory.load([entry])
        except NoSuchParent:
            raise OrphanEntry(f"parent of {entry.dn} is missing", number) from None
        except AlreadyExists:
            raise MalformedLine(f"duplicate entry {entry.dn}", number) from None
        except SchemaViolation as exc:
            raise SchemaViolation(f"line {number}: {exc}", exc.violations, line=number) from None
    return directory
