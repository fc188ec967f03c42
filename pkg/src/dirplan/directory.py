"""Embedded directory information tree.

Stands in for an LDAP server: entries live in memory, every add/modify/
delete/search is checked against the ACL and the schema, and every call
(successful or not) lands in an append-only operation log.
"""

from __future__ import annotations

import enum
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Callable, Iterable, Sequence

from .dn import DistinguishedName, Value, as_dn, attr_key
from .entry import Entry, is_binary_attribute, match_key
from .errors import (
    AlreadyExists,
    AttributeOrValueExists,
    BadFilter,
    Denied,
    DirectoryError,
    NoSuchAttribute,
    NoSuchEntry,
    NoSuchParent,
    NotLeaf,
    SchemaViolation,
)
from .schema import DEFAULT_SCHEMA, SchemaRegistry

ANONYMOUS = "anonymous"
ANY = "any"

Clock = Callable[[], datetime]


def system_clock() -> datetime:
    return datetime.now(timezone.utc).replace(microsecond=0)


class Permission(enum.Enum):
    ADD_ENTRY = "add_entry"
    DELETE_ENTRY = "delete_entry"
    MODIFY_ATTR = "modify_attr"
    READ = "read"


class Scope(enum.Enum):
    BASE = "base"
    ONE = "one"
    SUB = "sub"


class ModOp(enum.Enum):
    ADD_VALUES = "add_values"
    DELETE_VALUES = "delete_values"
    REPLACE_VALUES = "replace_values"


class OpKind(enum.Enum):
    ADD = "add"
    MODIFY = "modify"
    DELETE = "delete"
    SEARCH = "search"


# -- access control -------------------------------------------------------------

@dataclass(frozen=True)
class AclRule:
    principal: str
    permission: Permission
    attribute_scope: frozenset[str] | str
    subtree: DistinguishedName

    def __post_init__(self):
        object.__setattr__(self, "permission", Permission(self.permission))
        object.__setattr__(self, "subtree", as_dn(self.subtree))
        scope = self.attribute_scope
        if isinstance(scope, str):
            if scope.lower() != ANY:
                raise ValueError(f"attribute scope must be a set or {ANY!r}")
            scope = ANY
        else:
            scope = frozenset(attr_key(a) for a in scope)
        object.__setattr__(self, "attribute_scope", scope)

    def applies(self, principal: str, permission: Permission, dn: DistinguishedName) -> bool:
        return self.principal == principal and self.permission is permission and dn.is_within(self.subtree)

    def covers(self, attribute: str) -> bool:
        return self.attribute_scope == ANY or attr_key(attribute) in self.attribute_scope


def check_acl(
    rules: Iterable[AclRule],
    principal: str,
    kind: Permission | str,
    dn: DistinguishedName | str,
    attributes: Iterable[str] = (),
) -> bool:
    """Deny unless matching rules cover every attribute touched.

    With no attributes (deletes, reads) one applicable rule is enough.
    """
    kind = Permission(kind)
    dn = as_dn(dn)
    applicable = [r for r in rules if r.applies(principal, kind, dn)]
    if not applicable:
        return False
    return all(any(r.covers(a) for r in applicable) for a in attributes)


# -- filters ---------------------------------------------------------------------

@dataclass(frozen=True)
class Presence:
    attribute: str

    def matches(self, entry: Entry) -> bool:
        return self.attribute in entry


@dataclass(frozen=True)
class Equality:
    attribute: str
    value: Value

    def matches(self, entry: Entry) -> bool:
        value = self.value
        if is_binary_attribute(self.attribute) and isinstance(value, str):
            value = value.encode("utf-8")
        want = match_key(self.attribute, value)
        return any(match_key(self.attribute, v) == want for v in entry.get(self.attribute, []))


@dataclass(frozen=True)
class And:
    parts: tuple

    def matches(self, entry: Entry) -> bool:
        return all(p.matches(entry) for p in self.parts)


Filter = Presence | Equality | And


def parse_filter(text: str) -> Filter:
    """Parse the supported subset: ``(a=v)``, ``(a=*)`` and ``(&(..)(..))``.

    A bare ``a=v`` without parentheses is accepted too, as LDAP URLs often
    carry one.  Values may use ``\\XX`` hex escapes.
    """
    text = text.strip()
    if not text:
        raise BadFilter("empty filter")
    if not text.startswith("("):
        text = f"({text})"
    node, pos = _parse_filter(text, 0)
    if pos != len(text):
        raise BadFilter(f"trailing characters in filter {text!r}")
    return node


def _parse_filter(text: str, pos: int) -> tuple[Filter, int]:
    if pos >= len(text) or text[pos] != "(":
        raise BadFilter(f"expected '(' at position {pos} of {text!r}")
    pos += 1
    if pos < len(text) and text[pos] == "&":
        pos += 1
        parts = []
        while pos < len(text) and text[pos] == "(":
            part, pos = _parse_filter(text, pos)
            parts.append(part)
        if not parts:
            raise BadFilter("'&' needs at least one operand")
        if pos >= len(text) or text[pos] != ")":
            raise BadFilter(f"unterminated '&' in {text!r}")
        return And(tuple(parts)), pos + 1
    if pos < len(text) and text[pos] in "|!":
        raise BadFilter(f"operator {text[pos]!r} is not supported")
    end = text.find(")", pos)
    if end < 0:
        raise BadFilter(f"unterminated item in {text!r}")
    item = text[pos:end]
    if "(" in item:
        raise BadFilter(f"unexpected '(' in {item!r}")
    attr, eq, raw = item.partition("=")
    attr = attr.strip()
    if not eq or not attr or attr[-1] in "~<>:":
        raise BadFilter(f"unsupported filter item {item!r}")
    if raw == "*":
        return Presence(attr), end + 1
    if "*" in raw:
        raise BadFilter("substring filters are not supported")
    return Equality(attr, _unescape_filter_value(raw)), end + 1


def _unescape_filter_value(raw: str) -> Value:
    if "\\" not in raw:
        return raw
    out = bytearray()
    i = 0
    while i < len(raw):
        if raw[i] == "\\":
            pair = raw[i + 1 : i + 3]
            if len(pair) != 2 or any(c not in "0123456789abcdefABCDEF" for c in pair):
                raise BadFilter(f"bad escape in filter value {raw!r}")
            out.append(int(pair, 16))
            i += 3
        else:
            out.extend(raw[i].encode("utf-8"))
            i += 1
    try:
        return out.decode("utf-8")
    except UnicodeDecodeError:
        return bytes(out)


# -- the tree ------------------------------------------------------------------------

@dataclass(frozen=True)
class OperationRecord:
    sequence_number: int
    principal: str
    kind: OpKind
    target_dn: str
    attributes_touched: tuple[str, ...]
    outcome: str  # ok | denied | schema_violation | not_found | other_error
    timestamp: datetime
    changes: tuple[tuple[str, str], ...] = ()  # (mod op, attribute) for modifies

    def to_json(self) -> dict:
        return {
            "seq": self.sequence_number,
            "principal": self.principal,
            "kind": self.kind.value,
            "dn": self.target_dn,
            "attributes": list(self.attributes_touched),
            "outcome": self.outcome,
            "timestamp": self.timestamp.isoformat(),
            "changes": [list(c) for c in self.changes],
        }

    @classmethod
    def from_json(cls, data: dict) -> OperationRecord:
        return cls(
            data["seq"],
            data["principal"],
            OpKind(data["kind"]),
            data["dn"],
            tuple(data["attributes"]),
            data["outcome"],
            datetime.fromisoformat(data["timestamp"]),
            tuple(tuple(c) for c in data.get("changes", ())),
        )


FaultHook = Callable[[OpKind, DistinguishedName], None]


class Directory:
    """In-memory DIT with schema enforcement, ACLs and an operation log.

    ``suffixes`` are the DNs that may be added without a parent.  All
    mutations run under one lock and append their log record before the
    lock is released, so readers never see a change without its record.

    ``fault_hook`` is called right before a write is applied; raising
    :class:`~dirplan.errors.DirectoryUnavailable` from it simulates a server
    failure.
    """

    def __init__(
        self,
        suffixes: Iterable[DistinguishedName | str] = (),
        acl: Iterable[AclRule] = (),
        schema: SchemaRegistry | None = None,
        clock: Clock | None = None,
    ):
        self.suffixes = [as_dn(s) for s in suffixes]
        self.acl: list[AclRule] = list(acl)
        self.schema = schema or DEFAULT_SCHEMA
        self.clock = clock or system_clock
        self.fault_hook: FaultHook | None = None
        self._entries: dict[DistinguishedName, Entry] = {}
        self._log: list[OperationRecord] = []
        self._lock = threading.RLock()

    # -- reads that bypass ACL and log (snapshot/audit use) --

    def __len__(self):
        return len(self._entries)

    def __contains__(self, dn) -> bool:
        return as_dn(dn) in self._entries

    def get(self, dn: DistinguishedName | str) -> Entry | None:
        with self._lock:
            entry = self._entries.get(as_dn(dn))
            return entry.copy() if entry else None

    def entries(self) -> list[Entry]:
        """Read-consistent copy of every entry, parents before children."""
        with self._lock:
            return [e.copy() for e in sorted(self._entries.values(), key=lambda e: e.dn.sort_key)]

    def children(self, dn: DistinguishedName | str) -> list[Entry]:
        dn = as_dn(dn)
        with self._lock:
            return [e.copy() for d, e in self._entries.items() if d.parent == dn]

    def operation_log(self) -> tuple[OperationRecord, ...]:
        with self._lock:
            return tuple(self._log)

    def restore_log(self, records: Sequence[OperationRecord]) -> None:
        """Seed the log of a freshly loaded directory (snapshot restore)."""
        with self._lock:
            if self._log:
                raise ValueError("operation log is not empty")
            self._log.extend(records)

    def check_acl(self, principal: str, kind: Permission | str, dn, attributes: Iterable[str] = ()) -> bool:
        return check_acl(self.acl, principal, kind, dn, attributes)

    def check_schema(self, entry: Entry):
        return self.schema.check(entry)

    # -- logging helpers --

    def _record(self, principal, kind, dn, attributes, outcome, changes=()):
        seq = self._log[-1].sequence_number + 1 if self._log else 1
        self._log.append(
            OperationRecord(seq, principal, kind, str(dn), tuple(attributes), outcome, self.clock(), tuple(changes))
        )

    def _run(self, principal, kind, dn, attributes, action, changes=()):
        with self._lock:
            try:
                result = action()
            except DirectoryError as exc:
                self._record(principal, kind, dn, attributes, exc.outcome, changes)
                raise
            self._record(principal, kind, dn, attributes, "ok", changes)
            return result

    def _fault(self, kind: OpKind, dn: DistinguishedName):
        if self.fault_hook is not None:
            self.fault_hook(kind, dn)

    def _validate(self, entry: Entry):
        violations = self.schema.check(entry)
        if violations:
            raise SchemaViolation(f"{entry.dn}: " + "; ".join(map(str, violations)), violations)

    def _parent_ok(self, dn: DistinguishedName) -> bool:
        return dn in self.suffixes or (dn.parent is not None and dn.parent in self._entries)

    # -- LDAP-style operations --

    def add_entry(self, principal: str, entry: Entry) -> None:
        entry = entry.copy()
        dn = entry.dn

        def action():
            if not self.check_acl(principal, Permission.ADD_ENTRY, dn, entry.names()):
                raise Denied(f"{principal} may not add {dn}")
            if dn in self._entries:
                raise AlreadyExists(f"{dn} already exists")
            if not self._parent_ok(dn):
                raise NoSuchParent(f"parent of {dn} does not exist")
            self._validate(entry)
            self._fault(OpKind.ADD, dn)
            self._entries[dn] = entry

        self._run(principal, OpKind.ADD, dn, entry.names(), action)

    def modify_entry(self, principal: str, dn, changes: Sequence[tuple]) -> None:
        """Apply ``(op, attribute, values)`` changes all-or-nothing."""
        dn = as_dn(dn)
        changes = [(ModOp(op), attr, list(values)) for op, attr, values in changes]
        touched = list(dict.fromkeys(attr for _, attr, _ in changes))

        def action():
            if not self.check_acl(principal, Permission.MODIFY_ATTR, dn, touched):
                raise Denied(f"{principal} may not modify {touched} on {dn}")
            current = self._entries.get(dn)
            if current is None:
                raise NoSuchEntry(f"{dn} does not exist")
            new = current.copy()
            for op, attr, values in changes:
                _apply_change(new, op, attr, values)
            self._validate(new)
            self._fault(OpKind.MODIFY, dn)
            self._entries[dn] = new

        self._run(principal, OpKind.MODIFY, dn, touched, action, [(op.value, attr) for op, attr, _ in changes])

    def delete_entry(self, principal: str, dn) -> None:
        dn = as_dn(dn)

        def action():
            if not self.check_acl(principal, Permission.DELETE_ENTRY, dn):
                raise Denied(f"{principal} may not delete {dn}")
            if dn not in self._entries:
                raise NoSuchEntry(f"{dn} does not exist")
            if any(d.parent == dn for d in self._entries):
                raise NotLeaf(f"{dn} has subordinate entries")
            self._fault(OpKind.DELETE, dn)
            del self._entries[dn]

        self._run(principal, OpKind.DELETE, dn, (), action)

    def search(
        self,
        base_dn,
        scope: Scope | str = Scope.SUB,
        filter: Filter | str = "(objectClass=*)",
        principal: str = ANONYMOUS,
    ) -> list[Entry]:
        """Entries under ``base_dn`` matching ``filter`` that ``principal`` may read.

        Results come back parents-first in a deterministic order.
        """
        base = as_dn(base_dn)

        def action():
            flt = parse_filter(filter) if isinstance(filter, str) else filter
            try:
                sc = Scope(scope)
            except ValueError:
                raise BadFilter(f"unknown search scope {scope!r}") from None
            if base not in self._entries:
                raise NoSuchEntry(f"search base {base} does not exist")
            self._fault(OpKind.SEARCH, base)
            found = []
            for dn, entry in self._entries.items():
                if sc is Scope.BASE:
                    inside = dn == base
                elif sc is Scope.ONE:
                    inside = dn.parent == base
                else:
                    inside = dn.is_within(base)
                if inside and flt.matches(entry) and self.check_acl(principal, Permission.READ, dn):
                    found.append(entry.copy())
            found.sort(key=lambda e: e.dn.sort_key)
            return found

        return self._run(principal, OpKind.SEARCH, base, (), action)

    # -- bulk load (LDIF restore) --

    def load(self, entries: Iterable[Entry]) -> None:
        """Insert entries without ACL checks or logging; schema and tree still enforced."""
        with self._lock:
            for entry in entries:
                if entry.dn in self._entries:
                    raise AlreadyExists(f"{entry.dn} already exists")
                if not self._parent_ok(entry.dn):
                    raise NoSuchParent(f"parent of {entry.dn} does not exist")
                self._validate(entry)
                self._entries[entry.dn] = entry.copy()


def _apply_change(entry: Entry, op: ModOp, attr: str, values: list[Value]) -> None:
    existing = entry.get(attr, [])
    if op is ModOp.REPLACE_VALUES:
        entry.set(attr, _dedupe(attr, values))
    elif op is ModOp.ADD_VALUES:
        keys = {match_key(attr, v) for v in existing}
        for v in values:
            if match_key(attr, v) in keys:
                raise AttributeOrValueExists(f"{attr} already holds {v!r}")
            keys.add(match_key(attr, v))
        entry.set(attr, existing + list(values))
    else:
        if not existing:
            raise NoSuchAttribute(f"{entry.dn} has no attribute {attr}")
        if not values:
            entry.remove(attr)
            return
        remaining = list(existing)
        for v in values:
            key = match_key(attr, v)
            hits = [x for x in remaining if match_key(attr, x) == key]
            if not hits:
                raise NoSuchAttribute(f"{attr} has no value {v!r}")
            remaining.remove(hits[0])
        entry.set(attr, remaining)


def _dedupe(attr: str, values: list[Value]) -> list[Value]:
    seen, out = set(), []
    for v in values:
        k = match_key(attr, v)
        if k not in seen:
            seen.add(k)
            out.append(v)
    return out
