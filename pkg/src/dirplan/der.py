"""Minimal DER (X.690) reader and writer.

Only definite, minimal-length encodings are accepted.  That is enough to pull
apart X.509 certificates and CRLs and to synthesize test fixtures; it is not
a general ASN.1 toolkit.

    >>> node = read_tlv(bytes.fromhex("3003020105"))
    >>> node.tag_number, node.constructed, node.content.hex()
    (16, True, '020105')
    >>> write_tlv(node.tag_class, node.tag_number, node.constructed, node.content).hex()
    '3003020105'
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from datetime import datetime, timezone

from .errors import (
    EmptyOid,
    IndefiniteLength,
    MalformedOid,
    MalformedTag,
    MalformedTime,
    MalformedValue,
    NonCanonicalLength,
    Truncated,
    TruncatedArc,
)

MAX_TAG_NUMBER = 2**31 - 1


class TagClass(enum.IntEnum):
    UNIVERSAL = 0
    APPLICATION = 1
    CONTEXT = 2
    PRIVATE = 3


# universal tag numbers used in PKI structures
BOOLEAN = 1
INTEGER = 2
BIT_STRING = 3
OCTET_STRING = 4
NULL = 5
OBJECT_IDENTIFIER = 6
ENUMERATED = 10
UTF8_STRING = 12
SEQUENCE = 16
SET = 17
NUMERIC_STRING = 18
PRINTABLE_STRING = 19
TELETEX_STRING = 20
IA5_STRING = 22
UTC_TIME = 23
GENERALIZED_TIME = 24
VISIBLE_STRING = 26
UNIVERSAL_STRING = 28
BMP_STRING = 30

_STRING_CODECS = {
    UTF8_STRING: "utf-8",
    NUMERIC_STRING: "ascii",
    PRINTABLE_STRING: "ascii",
    TELETEX_STRING: "latin-1",
    IA5_STRING: "ascii",
    VISIBLE_STRING: "ascii",
    UNIVERSAL_STRING: "utf-32-be",
    BMP_STRING: "utf-16-be",
}
STRING_TAGS = frozenset(_STRING_CODECS)


@dataclass(frozen=True)
class TlvNode:
    """One decoded tag-length-value triple.

    ``offset`` is where the node started in the buffer it was read from.
    """

    tag_class: TagClass
    tag_number: int
    constructed: bool
    content: bytes
    header_length: int
    total_length: int
    offset: int = 0

    def __post_init__(self):
        if self.total_length != self.header_length + len(self.content):
            raise ValueError("total_length must equal header_length + len(content)")

    @property
    def end(self) -> int:
        return self.offset + self.total_length

    def is_universal(self, number: int) -> bool:
        return self.tag_class is TagClass.UNIVERSAL and self.tag_number == number

    def is_context(self, number: int) -> bool:
        return self.tag_class is TagClass.CONTEXT and self.tag_number == number

    def encode(self) -> bytes:
        return write_tlv(self.tag_class, self.tag_number, self.constructed, self.content)

    def children(self) -> list[TlvNode]:
        """Decode the content of a constructed node as consecutive TLVs.

        Child offsets are positions in the buffer this node was read from.
        """
        if not self.constructed:
            raise MalformedValue("primitive node has no children")
        base = self.offset + self.header_length
        return [
            TlvNode(n.tag_class, n.tag_number, n.constructed, n.content, n.header_length, n.total_length, base + n.offset)
            for n in read_all(self.content)
        ]

    def __repr__(self):
        return (
            f"TlvNode({self.tag_class.name}:{self.tag_number}"
            f"{' cons' if self.constructed else ''}, {len(self.content)} bytes)"
        )


def _read_tag(data: bytes, offset: int) -> tuple[TagClass, int, bool, int]:
    if offset >= len(data):
        raise Truncated(f"no tag byte at offset {offset}")
    first = data[offset]
    tag_class = TagClass(first >> 6)
    constructed = bool(first & 0x20)
    number = first & 0x1F
    pos = offset + 1
    if number != 0x1F:
        return tag_class, number, constructed, pos
    # high-tag-number form
    number = 0
    start = pos
    while True:
        if pos >= len(data):
            raise Truncated("tag number runs past end of buffer")
        b = data[pos]
        if pos == start and b == 0x80:
            raise MalformedTag("tag number has a leading zero group")
        number = (number << 7) | (b & 0x7F)
        pos += 1
        if number > MAX_TAG_NUMBER:
            raise MalformedTag("tag number exceeds 2**31 - 1")
        if not b & 0x80:
            break
    if number < 0x1F:
        raise MalformedTag(f"tag number {number} must use the low-tag form")
    return tag_class, number, constructed, pos


def _read_length(data: bytes, pos: int) -> tuple[int, int]:
    if pos >= len(data):
        raise Truncated("missing length byte")
    first = data[pos]
    pos += 1
    if first < 0x80:
        return first, pos
    if first == 0x80:
        raise IndefiniteLength("indefinite length is not allowed in DER")
    if first == 0xFF:
        raise NonCanonicalLength("length octet 0xFF is reserved")
    n = first & 0x7F
    if pos + n > len(data):
        raise Truncated("length octets run past end of buffer")
    raw = data[pos : pos + n]
    if raw[0] == 0:
        raise NonCanonicalLength("long-form length has a leading zero byte")
    length = int.from_bytes(raw, "big")
    if length < 0x80:
        raise NonCanonicalLength(f"length {length} must use the short form")
    return length, pos + n


def read_tlv(data: bytes, offset: int = 0) -> TlvNode:
    """Decode the TLV starting at ``offset``."""
    data = bytes(data)
    if offset < 0 or offset >= len(data):
        raise Truncated(f"offset {offset} outside buffer of {len(data)} bytes")
    tag_class, number, constructed, pos = _read_tag(data, offset)
    length, pos = _read_length(data, pos)
    if pos + length > len(data):
        raise Truncated(f"content of {length} bytes runs past end of buffer")
    header = pos - offset
    return TlvNode(
        tag_class=tag_class,
        tag_number=number,
        constructed=constructed,
        content=data[pos : pos + length],
        header_length=header,
        total_length=header + length,
        offset=offset,
    )


def read_all(data: bytes) -> list[TlvNode]:
    """Decode a buffer that is an exact concatenation of TLVs."""
    nodes = []
    offset = 0
    while offset < len(data):
        node = read_tlv(data, offset)
        nodes.append(node)
        offset = node.end
    return nodes


def read_single(data: bytes) -> TlvNode:
    """Decode a buffer holding exactly one TLV with nothing trailing."""
    node = read_tlv(data, 0)
    if node.total_length != len(data):
        raise MalformedValue(f"{len(data) - node.total_length} trailing bytes after TLV")
    return node


def _encode_tag(tag_class: TagClass, tag_number: int, constructed: bool) -> bytes:
    if tag_number < 0 or tag_number > MAX_TAG_NUMBER:
        raise MalformedTag(f"tag number {tag_number} out of range")
    lead = (int(tag_class) << 6) | (0x20 if constructed else 0)
    if tag_number < 0x1F:
        return bytes([lead | tag_number])
    groups = []
    n = tag_number
    while True:
        groups.append(n & 0x7F)
        n >>= 7
        if not n:
            break
    groups.reverse()
    body = bytes([g | 0x80 for g in groups[:-1]] + [groups[-1]])
    return bytes([lead | 0x1F]) + body


def _encode_length(length: int) -> bytes:
    if length < 0x80:
        return bytes([length])
    raw = length.to_bytes((length.bit_length() + 7) // 8, "big")
    return bytes([0x80 | len(raw)]) + raw


def write_tlv(tag_class: TagClass | int, tag_number: int, constructed: bool, content: bytes) -> bytes:
    """Encode one TLV using the minimal length form."""
    content = bytes(content)
    return _encode_tag(TagClass(tag_class), tag_number, constructed) + _encode_length(len(content)) + content


# -- OIDs ------------------------------------------------------------------

@dataclass(frozen=True, order=True)
class OidValue:
    arcs: tuple[int, ...]

    def __post_init__(self):
        arcs = tuple(self.arcs)
        object.__setattr__(self, "arcs", arcs)
        if len(arcs) < 2:
            raise MalformedOid("an OID needs at least two arcs")
        if any(a < 0 for a in arcs):
            raise MalformedOid("OID arcs must be non-negative")
        if arcs[0] not in (0, 1, 2):
            raise MalformedOid(f"first arc {arcs[0]} not in 0..2")
        if arcs[0] < 2 and arcs[1] >= 40:
            raise MalformedOid("second arc must be < 40 under arcs 0 and 1")

    @classmethod
    def parse(cls, dotted: str) -> OidValue:
        if not re.fullmatch(r"\d+(\.\d+)+", dotted):
            raise MalformedOid(f"not a dotted OID: {dotted!r}")
        return cls(tuple(int(p) for p in dotted.split(".")))

    def __str__(self):
        return ".".join(str(a) for a in self.arcs)


def decode_oid(content: bytes) -> OidValue:
    """Decode the content octets of an OBJECT IDENTIFIER."""
    if not content:
        raise EmptyOid("OBJECT IDENTIFIER content is empty")
    if content[-1] & 0x80:
        raise TruncatedArc("last subidentifier has its continuation bit set")
    subids = []
    value = 0
    fresh = True
    for b in content:
        if fresh and b == 0x80:
            raise MalformedOid("subidentifier has a leading zero group")
        value = (value << 7) | (b & 0x7F)
        fresh = not b & 0x80
        if fresh:
            subids.append(value)
            value = 0
    first = subids[0]
    if first < 40:
        arcs = [0, first]
    elif first < 80:
        arcs = [1, first - 40]
    else:
        arcs = [2, first - 80]
    return OidValue(tuple(arcs + subids[1:]))


def encode_oid(oid: OidValue | str) -> bytes:
    """Content octets (no tag/length) for an OID."""
    if isinstance(oid, str):
        oid = OidValue.parse(oid)
    arcs = oid.arcs
    out = bytearray()
    for n in [arcs[0] * 40 + arcs[1], *arcs[2:]]:
        groups = [n & 0x7F]
        n >>= 7
        while n:
            groups.append(0x80 | (n & 0x7F))
            n >>= 7
        out.extend(reversed(groups))
    return bytes(out)


# -- primitive values --------------------------------------------------------

def decode_integer(content: bytes) -> int:
    if not content:
        raise MalformedValue("INTEGER content is empty")
    if len(content) > 1 and (
        (content[0] == 0x00 and not content[1] & 0x80) or (content[0] == 0xFF and content[1] & 0x80)
    ):
        raise MalformedValue("INTEGER is not minimally encoded")
    return int.from_bytes(content, "big", signed=True)


def encode_integer_content(n: int) -> bytes:
    size = (n if n >= 0 else ~n).bit_length() // 8 + 1
    return n.to_bytes(size, "big", signed=True)


def decode_boolean(content: bytes) -> bool:
    if content == b"\x00":
        return False
    if content == b"\xff":
        return True
    raise MalformedValue("DER BOOLEAN must be a single 0x00 or 0xFF octet")


def decode_bit_string(content: bytes) -> tuple[bytes, int]:
    """Return ``(octets, unused_bits)``."""
    if not content:
        raise MalformedValue("BIT STRING content is empty")
    unused = content[0]
    if unused > 7 or (len(content) == 1 and unused):
        raise MalformedValue("bad unused-bits count in BIT STRING")
    body = content[1:]
    if unused and body[-1] & ((1 << unused) - 1):
        raise MalformedValue("unused bits of a DER BIT STRING must be zero")
    return body, unused


def bit_string_flags(content: bytes) -> list[int]:
    """Positions (0 = most significant bit of the first octet) that are set."""
    body, unused = decode_bit_string(content)
    total = len(body) * 8 - unused
    return [i for i in range(total) if body[i // 8] & (0x80 >> (i % 8))]


def encode_named_bits_content(positions) -> bytes:
    """BIT STRING content for a named-bit list; trailing zero bits dropped."""
    positions = sorted(set(positions))
    if not positions:
        return b"\x00"
    nbits = positions[-1] + 1
    body = bytearray((nbits + 7) // 8)
    for p in positions:
        body[p // 8] |= 0x80 >> (p % 8)
    return bytes([len(body) * 8 - nbits]) + bytes(body)


def decode_string(node: TlvNode) -> str:
    codec = _STRING_CODECS.get(node.tag_number) if node.tag_class is TagClass.UNIVERSAL else None
    if codec is None:
        raise MalformedValue(f"tag {node.tag_number} is not a string type")
    try:
        return node.content.decode(codec)
    except UnicodeDecodeError as exc:
        raise MalformedValue(f"undecodable string: {exc}") from None


# -- time ------------------------------------------------------------------

class TimeForm(enum.Enum):
    UTC_TIME = "utc_time"
    GENERALIZED_TIME = "generalized_time"


_UTC_RE = re.compile(rb"(\d{2})(\d{2})(\d{2})(\d{2})(\d{2})(\d{2})Z")
_GEN_RE = re.compile(rb"(\d{4})(\d{2})(\d{2})(\d{2})(\d{2})(\d{2})Z")


@dataclass(frozen=True)
class Asn1Time:
    instant: datetime
    source_form: TimeForm

    def __post_init__(self):
        if self.instant.tzinfo is None:
            raise ValueError("instant must be timezone-aware")
        object.__setattr__(self, "instant", self.instant.astimezone(timezone.utc).replace(microsecond=0))

    @classmethod
    def from_datetime(cls, instant: datetime, form: TimeForm | None = None) -> Asn1Time:
        """Pick UTCTime for 1950..2049 and GeneralizedTime otherwise unless told."""
        if instant.tzinfo is None:
            instant = instant.replace(tzinfo=timezone.utc)
        if form is None:
            form = TimeForm.UTC_TIME if 1950 <= instant.astimezone(timezone.utc).year < 2050 else TimeForm.GENERALIZED_TIME
        return cls(instant, form)

    def text(self) -> str:
        if self.source_form is TimeForm.UTC_TIME:
            if not 1950 <= self.instant.year < 2050:
                raise MalformedTime(f"year {self.instant.year} not representable as UTCTime")
            return self.instant.strftime("%y%m%d%H%M%SZ")
        return f"{self.instant.year:04d}" + self.instant.strftime("%m%d%H%M%SZ")

    def encode(self) -> bytes:
        tag = UTC_TIME if self.source_form is TimeForm.UTC_TIME else GENERALIZED_TIME
        return write_tlv(TagClass.UNIVERSAL, tag, False, self.text().encode("ascii"))

    def __str__(self):
        return self.instant.strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_time(node: TlvNode) -> Asn1Time:
    if node.is_universal(UTC_TIME) and not node.constructed:
        m = _UTC_RE.fullmatch(node.content)
        form = TimeForm.UTC_TIME
    elif node.is_universal(GENERALIZED_TIME) and not node.constructed:
        m = _GEN_RE.fullmatch(node.content)
        form = TimeForm.GENERALIZED_TIME
    else:
        raise MalformedTime(f"{node!r} is not a UTCTime or GeneralizedTime")
    if m is None:
        raise MalformedTime(f"bad time text {node.content!r}")
    parts = [int(g) for g in m.groups()]
    if form is TimeForm.UTC_TIME:
        parts[0] += 2000 if parts[0] < 50 else 1900
    try:
        instant = datetime(*parts, tzinfo=timezone.utc)
    except ValueError as exc:
        raise MalformedTime(f"bad time text {node.content!r}: {exc}") from None
    return Asn1Time(instant, form)


# -- builders (fixture synthesis) ---------------------------------------------

def tlv(tag_number: int, content: bytes, constructed: bool = False) -> bytes:
    return write_tlv(TagClass.UNIVERSAL, tag_number, constructed, content)


def seq(*parts: bytes) -> bytes:
    return tlv(SEQUENCE, b"".join(parts), True)


def set_of(*parts: bytes) -> bytes:
    # DER SET OF orders elements by their encodings
    return tlv(SET, b"".join(sorted(parts)), True)


def integer(n: int) -> bytes:
    return tlv(INTEGER, encode_integer_content(n))


def boolean(value: bool) -> bytes:
    return tlv(BOOLEAN, b"\xff" if value else b"\x00")


def null() -> bytes:
    return tlv(NULL, b"")


def oid(value: OidValue | str) -> bytes:
    return tlv(OBJECT_IDENTIFIER, encode_oid(value))


def octet_string(data: bytes) -> bytes:
    return tlv(OCTET_STRING, data)


def bit_string(data: bytes, unused: int = 0) -> bytes:
    return tlv(BIT_STRING, bytes([unused]) + data)


def named_bits(positions) -> bytes:
    return tlv(BIT_STRING, encode_named_bits_content(positions))


def utf8(text: str) -> bytes:
    return tlv(UTF8_STRING, text.encode("utf-8"))


def printable(text: str) -> bytes:
    return tlv(PRINTABLE_STRING, text.encode("ascii"))


def ia5(text: str) -> bytes:
    return tlv(IA5_STRING, text.encode("ascii"))


def asn1_time(instant: datetime | Asn1Time) -> bytes:
    if isinstance(instant, datetime):
        instant = Asn1Time.from_datetime(instant)
    return instant.encode()


def context(number: int, content: bytes, constructed: bool = True) -> bytes:
    return write_tlv(TagClass.CONTEXT, number, constructed, content)
