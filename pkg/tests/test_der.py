from __future__ import annotations

import re
from datetime import datetime, timezone

import pytest
from hypothesis import given, strategies as st

from dirplan import der
from dirplan.der import (
    Asn1Time,
    OidValue,
    TagClass,
    TimeForm,
    decode_integer,
    decode_oid,
    encode_integer_content,
    encode_oid,
    parse_time,
    read_all,
    read_single,
    read_tlv,
    write_tlv,
)
from dirplan.errors import (
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

# Well-known names openssl prints for the OIDs in the blob fixtures.
OPENSSL_OID_NAMES = {"commonName": "2.5.4.3", "organizationName": "2.5.4.10"}
ASN1PARSE_LINE = re.compile(r"\s*(\d+):d=(\d+)\s+hl=(\d+) l=\s*(\d+) (prim|cons): (\S+)\s*(?::(.*))?")


def asn1parse(golden, name):
    lines = (golden / f"blob_{name}.asn1").read_text().splitlines()
    return [ASN1PARSE_LINE.match(line).groups() for line in lines if line.strip()]


# -- read_tlv against the dump tool ---------------------------------------------

def test_empty_sequence():
    node = read_tlv(bytes.fromhex("3000"))
    assert (node.tag_class, node.tag_number, node.constructed) == (TagClass.UNIVERSAL, 16, True)
    assert node.content == b"" and node.total_length == 2


def test_sequence_with_integer_matches_asn1parse(golden):
    rows = asn1parse(golden, "seq_int5")
    node = read_tlv(bytes.fromhex("3003020105"))
    child = node.children()[0]
    assert rows[0][1:6] == ("0", str(node.header_length), str(len(node.content)), "cons", "SEQUENCE")
    assert rows[1][0] == str(child.offset)
    assert rows[1][2:6] == (str(child.header_length), str(len(child.content)), "prim", "INTEGER")
    assert int(rows[1][6], 16) == decode_integer(child.content) == 5


def test_long_form_length_is_rejected(golden):
    # The dump tool accepts it but shows a 3-byte header for 1 content byte,
    # which X.690 minimal-length encoding forbids.
    (row,) = asn1parse(golden, "long_form_len")
    assert row[2:4] == ("3", "1")
    with pytest.raises(NonCanonicalLength):
        read_tlv(bytes.fromhex("02810105"))


@pytest.mark.parametrize(
    "hexdata, error",
    [
        ("3080", IndefiniteLength),
        ("0203", Truncated),
        ("020301", Truncated),
        ("30", Truncated),
        ("", Truncated),
        ("02820005" + "00" * 5, NonCanonicalLength),
        ("02ff", NonCanonicalLength),
        ("1f80" + "01" + "00", MalformedTag),  # leading 0x80 in high tag number
        ("1f1e00", MalformedTag),  # high-tag form for a number < 31
        ("1f8880808000" + "00", MalformedTag),  # tag number >= 2**31
    ],
)
def test_malformed_headers(hexdata, error):
    with pytest.raises(error):
        read_tlv(bytes.fromhex(hexdata))


def test_read_tlv_offset_and_trailing():
    data = bytes.fromhex("0500" + "020105")
    assert read_tlv(data, 2).tag_number == der.INTEGER
    assert [n.tag_number for n in read_all(data)] == [der.NULL, der.INTEGER]
    with pytest.raises(MalformedValue):
        read_single(data)


def test_high_tag_number_round_trip():
    encoded = write_tlv(TagClass.CONTEXT, 1000, False, b"x")
    node = read_tlv(encoded)
    assert (node.tag_class, node.tag_number, node.content) == (TagClass.CONTEXT, 1000, b"x")
    assert node.encode() == encoded


# -- write_tlv ------------------------------------------------------------------

def test_write_examples():
    assert write_tlv(TagClass.UNIVERSAL, 16, True, b"") == bytes.fromhex("3000")
    assert write_tlv(TagClass.UNIVERSAL, 2, False, b"\x05") == bytes.fromhex("020105")


@pytest.mark.parametrize("size, header", [(127, "047f"), (128, "048180"), (255, "0481ff"), (256, "04820100")])
def test_length_boundaries(size, header):
    encoded = write_tlv(TagClass.UNIVERSAL, 4, False, bytes(size))
    assert encoded[: len(header) // 2].hex() == header
    assert read_tlv(encoded).content == bytes(size)


tlv_nodes = st.recursive(
    st.builds(
        lambda cls, num, content: write_tlv(cls, num, False, content),
        st.sampled_from(list(TagClass)),
        st.integers(0, 2**31 - 1),
        st.binary(max_size=300),
    ),
    lambda children: st.builds(
        lambda cls, num, parts: write_tlv(cls, num, True, b"".join(parts)),
        st.sampled_from(list(TagClass)),
        st.integers(0, 5000),
        st.lists(children, max_size=4),
    ),
    max_leaves=12,
)


@given(tlv_nodes)
def test_write_read_round_trip(encoded):
    node = read_single(encoded)
    assert write_tlv(node.tag_class, node.tag_number, node.constructed, node.content) == encoded
    assert node.total_length == node.header_length + len(node.content) == len(encoded)


@given(tlv_nodes, st.binary(max_size=40))
def test_reader_stops_at_total_length(encoded, suffix):
    node = read_tlv(encoded + suffix)
    assert node.total_length == len(encoded)
    assert node.encode() == encoded


@given(st.binary(max_size=64))
def test_reader_never_crashes_on_garbage(data):
    try:
        node = read_tlv(data)
    except (Truncated, NonCanonicalLength, IndefiniteLength, MalformedTag):
        return
    assert node.total_length <= len(data)


# -- OIDs -----------------------------------------------------------------------

@pytest.mark.parametrize("blob, content", [("oid_cn", "550403"), ("oid_o", "55040a")])
def test_oid_matches_asn1parse(golden, blob, content):
    (row,) = asn1parse(golden, blob)
    assert str(decode_oid(bytes.fromhex(content))) == OPENSSL_OID_NAMES[row[6].strip()]


def test_oid_errors():
    with pytest.raises(TruncatedArc):
        decode_oid(b"\x80")
    with pytest.raises(EmptyOid):
        decode_oid(b"")
    with pytest.raises(MalformedOid):
        decode_oid(b"\x55\x80\x01")  # padded arc
    for bad in ("3.1", "1.40", "1", "1.-2"):
        with pytest.raises((MalformedOid, ValueError)):
            OidValue.parse(bad)


def test_large_arcs():
    oid = OidValue.parse("2.999.18446744073709551616")
    assert decode_oid(encode_oid(oid)) == oid
    assert encode_oid("1.2.840.113549.1.1.11").hex() == "2a864886f70d01010b"


oids = st.one_of(
    st.tuples(st.integers(0, 1), st.integers(0, 39), st.lists(st.integers(0, 2**70), max_size=6)),
    st.tuples(st.just(2), st.integers(0, 2**40), st.lists(st.integers(0, 2**70), max_size=6)),
).map(lambda t: OidValue((t[0], t[1], *t[2])))


@given(oids)
def test_oid_round_trip(oid):
    assert decode_oid(encode_oid(oid)) == oid
    assert OidValue.parse(str(oid)) == oid


@given(oids, oids)
def test_oid_encoding_injective(a, b):
    assert (encode_oid(a) == encode_oid(b)) == (a == b)


# -- integers -------------------------------------------------------------------

@given(st.integers(-(2**200), 2**200))
def test_integer_round_trip(n):
    assert decode_integer(encode_integer_content(n)) == n


def test_integer_minimality():
    assert encode_integer_content(128).hex() == "0080"
    assert encode_integer_content(-129).hex() == "ff7f"
    for bad in ("0001", "ff80", ""):
        with pytest.raises(MalformedValue):
            decode_integer(bytes.fromhex(bad))


# -- time -----------------------------------------------------------------------

def _utc(*args):
    return datetime(*args, tzinfo=timezone.utc)


@pytest.mark.parametrize(
    "encoded, instant, form",
    [
        (der.tlv(der.UTC_TIME, b"050315120000Z"), _utc(2005, 3, 15, 12), TimeForm.UTC_TIME),
        (der.tlv(der.UTC_TIME, b"990101000000Z"), _utc(1999, 1, 1), TimeForm.UTC_TIME),
        (der.tlv(der.UTC_TIME, b"491231235959Z"), _utc(2049, 12, 31, 23, 59, 59), TimeForm.UTC_TIME),
        (der.tlv(der.UTC_TIME, b"500101000000Z"), _utc(1950, 1, 1), TimeForm.UTC_TIME),
        (der.tlv(der.GENERALIZED_TIME, b"20300101000000Z"), _utc(2030, 1, 1), TimeForm.GENERALIZED_TIME),
    ],
)
def test_parse_time(encoded, instant, form):
    t = parse_time(read_tlv(encoded))
    assert (t.instant, t.source_form) == (instant, form)
    assert t.encode() == encoded


def test_time_blobs_match_asn1parse(golden):
    for name, hexdata in (("utctime", "170d3035303331353132303030305a"), ("gentime", "180f32303330303130313030303030305a")):
        (row,) = asn1parse(golden, name)
        assert parse_time(read_tlv(bytes.fromhex(hexdata))).text() == row[6].strip()


@pytest.mark.parametrize(
    "tag, text",
    [
        (der.UTC_TIME, b"0503151200Z"),
        (der.UTC_TIME, b"050315120000+0100"),
        (der.UTC_TIME, b"051315120000Z"),
        (der.GENERALIZED_TIME, b"20300101000000.5Z"),
        (der.GENERALIZED_TIME, b"203001010000Z"),
        (der.INTEGER, b"\x01"),
    ],
)
def test_malformed_time(tag, text):
    with pytest.raises(MalformedTime):
        parse_time(read_tlv(der.tlv(tag, text)))


@given(st.datetimes(min_value=datetime(1950, 1, 1), max_value=datetime(9999, 12, 31)))
def test_time_round_trip(naive):
    t = Asn1Time.from_datetime(naive.replace(microsecond=0, tzinfo=timezone.utc))
    again = parse_time(read_tlv(t.encode()))
    assert again == t and again.encode() == t.encode()
    expected = TimeForm.UTC_TIME if naive.year < 2050 else TimeForm.GENERALIZED_TIME
    assert t.source_form is expected


# -- strings and bits -----------------------------------------------------------

def test_named_bits_are_minimal():
    assert der.named_bits([0, 1]).hex() == "030206c0"
    assert der.named_bits([5, 6]).hex() == "03020106"
    assert der.named_bits([]).hex() == "030100"
    assert der.bit_string_flags(read_tlv(der.named_bits([1, 8])).content) == [1, 8]


def test_decode_string_kinds():
    assert der.decode_string(read_tlv(der.utf8("Grüße"))) == "Grüße"
    assert der.decode_string(read_tlv(der.printable("DE"))) == "DE"
    assert der.decode_string(read_tlv(der.ia5("a@b"))) == "a@b"


def test_set_of_is_sorted():
    assert der.set_of(der.integer(2), der.integer(1)) == der.tlv(der.SET, der.integer(1) + der.integer(2), True)
