"""Distinguished names: parsing, canonical formatting and matching keys.

A :class:`DistinguishedName` stores its RDNs leaf-first, the way they are
written (``CN=Alice,O=Org,C=DE`` has ``CN=Alice`` at index 0).  Equality and
hashing use the normalized form, so ``cn=ALICE, o=Org , c=de`` and
``CN=Alice,O=Org,C=DE`` are the same key in a dict.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Union

from .errors import EmptyRdn, MalformedDn, UnterminatedEscape

Value = Union[str, bytes]

# long attribute names folded onto the short forms used in DNs
_ALIASES = {
    "commonname": "cn",
    "surname": "sn",
    "countryname": "c",
    "organizationname": "o",
    "organizationalunitname": "ou",
    "domaincomponent": "dc",
    "localityname": "l",
    "stateorprovincename": "st",
    "userid": "uid",
}

_TYPE_RE = re.compile(r"[A-Za-z][A-Za-z0-9-]*(;[A-Za-z0-9-]+)*|\d+(\.\d+)+")
_SPECIALS = ',+="\\<>;'
_HEX = "0123456789abcdefABCDEF"


def attr_key(name: str) -> str:
    """Matching key for an attribute type: lowercased, ``;binary`` dropped."""
    base = name.strip().lower()
    options = base.split(";")
    base = options[0]
    return _ALIASES.get(base, base)


def strip_binary_option(name: str) -> str:
    parts = name.split(";")
    return ";".join([parts[0]] + [p for p in parts[1:] if p.lower() != "binary"])


def normalize_value(value: Value) -> Value:
    """caseIgnoreMatch key for strings; bytes compare exactly."""
    if isinstance(value, bytes):
        return value
    return " ".join(value.split()).casefold()


@dataclass(frozen=True, eq=False)
class Rdn:
    pairs: tuple[tuple[str, Value], ...]

    def __post_init__(self):
        pairs = tuple((str(t), v) for t, v in self.pairs)
        object.__setattr__(self, "pairs", pairs)
        if not pairs:
            raise EmptyRdn("an RDN needs at least one attribute=value pair")
        keys = [attr_key(t) for t, _ in pairs]
        if len(set(keys)) != len(keys):
            raise MalformedDn(f"repeated attribute type in RDN {keys}")

    @classmethod
    def of(cls, *pairs: tuple[str, Value], **kw: Value) -> Rdn:
        return cls(tuple(pairs) + tuple(kw.items()))

    @cached_property
    def key(self) -> tuple[tuple[str, Value], ...]:
        return tuple(sorted(((attr_key(t), normalize_value(v)) for t, v in self.pairs), key=_pair_sort))

    def get(self, attr: str) -> Value | None:
        k = attr_key(attr)
        for t, v in self.pairs:
            if attr_key(t) == k:
                return v
        return None

    def __eq__(self, other):
        if not isinstance(other, Rdn):
            return NotImplemented
        return self.key == other.key

    def __hash__(self):
        return hash(self.key)

    def __str__(self):
        return "+".join(f"{t}={escape_value(v)}" for t, v in self.pairs)

    def __repr__(self):
        return f"Rdn({str(self)!r})"


def _pair_sort(pair):
    t, v = pair
    return (t, isinstance(v, bytes), v if isinstance(v, bytes) else v.encode("utf-8"))


@dataclass(frozen=True, eq=False)
class DistinguishedName:
    rdns: tuple[Rdn, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "rdns", tuple(self.rdns))

    @classmethod
    def parse(cls, text: str) -> DistinguishedName:
        return parse_dn(text)

    @cached_property
    def key(self) -> tuple:
        return tuple(r.key for r in self.rdns)

    @property
    def sort_key(self) -> tuple:
        """Root-first key, so a parent always sorts before its children."""
        return tuple(_rdn_sort_text(r) for r in reversed(self.rdns))

    @property
    def rdn(self) -> Rdn:
        return self.rdns[0]

    @property
    def parent(self) -> DistinguishedName | None:
        if not self.rdns:
            return None
        return DistinguishedName(self.rdns[1:])

    def child(self, rdn: Rdn | str) -> DistinguishedName:
        if isinstance(rdn, str):
            rdn = parse_dn(rdn).rdns
            return DistinguishedName(tuple(rdn) + self.rdns)
        return DistinguishedName((rdn,) + self.rdns)

    def is_within(self, base: DistinguishedName) -> bool:
        """True when self equals ``base`` or sits anywhere beneath it."""
        n = len(base.rdns)
        if n > len(self.rdns):
            return False
        return n == 0 or self.key[-n:] == base.key

    def __len__(self):
        return len(self.rdns)

    def __eq__(self, other):
        if not isinstance(other, DistinguishedName):
            return NotImplemented
        return self.key == other.key

    def __hash__(self):
        return hash(self.key)

    def __str__(self):
        return format_dn(self)

    def __repr__(self):
        return f"DistinguishedName({format_dn(self)!r})"


def _rdn_sort_text(rdn: Rdn) -> str:
    return "+".join(f"{t}={escape_value(v)}" for t, v in rdn.key)


def as_dn(value: DistinguishedName | str) -> DistinguishedName:
    if isinstance(value, DistinguishedName):
        return value
    return parse_dn(value)


def escape_value(value: Value) -> str:
    if isinstance(value, bytes):
        return "#" + value.hex()
    out = []
    for i, ch in enumerate(value):
        if ch in _SPECIALS:
            out.append("\\" + ch)
        elif ch == "\x00":
            out.append("\\00")
        elif ch == " " and (i == 0 or i == len(value) - 1):
            out.append("\\ ")
        elif ch == "#" and i == 0:
            out.append("\\#")
        else:
            out.append(ch)
    return "".join(out)


def format_dn(dn: DistinguishedName) -> str:
    """Canonical string form: no spaces around separators, specials escaped."""
    return ",".join(str(r) for r in dn.rdns)


def normalize_dn(dn: DistinguishedName | str) -> DistinguishedName:
    dn = as_dn(dn)
    return DistinguishedName(tuple(Rdn(r.key) for r in dn.rdns))


def parse_dn(text: str) -> DistinguishedName:
    """Parse the string form of a DN.

    Commas separate RDNs and ``+`` separates the pairs of a multi-valued RDN.
    A backslash escapes the next special character or introduces a two-digit
    hex byte; a value starting with ``#`` is hex-encoded BER and parsed to
    bytes.  Unescaped blanks around types and values are ignored.
    """
    rdns: list[Rdn] = []
    pairs: list[tuple[str, Value]] = []
    i, n = 0, len(text)
    while True:
        # attribute type
        j = text.find("=", i)
        stop = _next_separator(text, i)
        if j < 0 or (stop is not None and stop < j):
            chunk = text[i : stop if stop is not None else n]
            if not chunk.strip():
                raise EmptyRdn(f"empty RDN at position {i} of {text!r}")
            raise MalformedDn(f"missing '=' in {chunk.strip()!r}")
        attr = text[i:j].strip()
        if not attr:
            raise MalformedDn(f"empty attribute type at position {i}")
        if not _TYPE_RE.fullmatch(attr):
            raise MalformedDn(f"bad attribute type {attr!r}")
        value, i = _parse_value(text, j + 1)
        pairs.append((attr, value))
        if i >= n:
            rdns.append(Rdn(tuple(pairs)))
            break
        sep = text[i]
        i += 1
        if sep == ",":
            rdns.append(Rdn(tuple(pairs)))
            pairs = []
        if i >= n or not text[i:].strip():
            raise EmptyRdn(f"nothing after {sep!r} at end of {text!r}")
    return DistinguishedName(tuple(rdns))


def _next_separator(text: str, i: int) -> int | None:
    while i < len(text):
        ch = text[i]
        if ch == "\\":
            i += 2
            continue
        if ch in ",+":
            return i
        i += 1
    return None


def _parse_value(text: str, i: int) -> tuple[Value, int]:
    n = len(text)
    while i < n and text[i] == " ":
        i += 1
    if i < n and text[i] == "#":
        j = i + 1
        while j < n and text[j] not in ",+":
            j += 1
        hexpart = text[i + 1 : j].strip()
        if not hexpart or len(hexpart) % 2 or any(c not in _HEX for c in hexpart):
            raise MalformedDn(f"bad hex value {text[i:j]!r}")
        return bytes.fromhex(hexpart), j
    buf = bytearray()
    keep = 0  # length of buf up to the last char that must not be trimmed
    while i < n:
        ch = text[i]
        if ch in ",+":
            break
        if ch == "\\":
            if i + 1 >= n:
                raise UnterminatedEscape(f"backslash at end of {text!r}")
            nxt = text[i + 1]
            if nxt in _HEX:
                if i + 2 >= n or text[i + 2] not in _HEX:
                    raise UnterminatedEscape(f"incomplete hex escape in {text!r}")
                buf.append(int(text[i + 1 : i + 3], 16))
                i += 3
            else:
                buf.extend(nxt.encode("utf-8"))
                i += 2
            keep = len(buf)
            continue
        buf.extend(ch.encode("utf-8"))
        if ch != " ":
            keep = len(buf)
        i += 1
    try:
        value = bytes(buf[:keep]).decode("utf-8")
    except UnicodeDecodeError:
        raise MalformedDn("escaped bytes are not valid UTF-8") from None
    return value, i


def dn_from_pairs(pairs: Iterable[tuple[str, Value]]) -> DistinguishedName:
    """Build a single-valued DN from leaf-first ``(type, value)`` pairs."""
    return DistinguishedName(tuple(Rdn(((t, v),)) for t, v in pairs))
