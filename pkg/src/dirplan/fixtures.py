"""Synthesize structurally valid certificates and CRLs.

Signatures are a fixed all-zero bit string and the public key is a dummy RSA
key, so the output parses everywhere but proves nothing.  Used by the tests,
the demos and anybody who needs sample DER without a CA at hand.
"""

from __future__ import annotations

from datetime import datetime, timezone
from typing import Iterable, Sequence

from . import der
from .dn import DistinguishedName, as_dn
from .x509meta import (
    KEY_USAGE_BITS,
    OID_BASIC_CONSTRAINTS,
    OID_CERTIFICATE_ISSUER,
    OID_CRL_DISTRIBUTION_POINTS,
    OID_CRL_NUMBER,
    OID_DELTA_CRL_INDICATOR,
    OID_ISSUING_DISTRIBUTION_POINT,
    OID_KEY_USAGE,
    encode_name,
)

SHA256_WITH_RSA = "1.2.840.113549.1.1.11"
RSA_ENCRYPTION = "1.2.840.113549.1.1.1"
DUMMY_SIGNATURE = bytes(32)
# 512-bit modulus of all 0xA5 with the top bit set; never a real key
_DUMMY_MODULUS = int.from_bytes(b"\xc5" + b"\xa5" * 63, "big")


def utc(*args: int) -> datetime:
    return datetime(*args, tzinfo=timezone.utc)


def _algorithm(oid: str) -> bytes:
    return der.seq(der.oid(oid), der.null())


def _extension(oid: str, value: bytes, critical: bool = False) -> bytes:
    parts = [der.oid(oid)]
    if critical:
        parts.append(der.boolean(True))
    parts.append(der.octet_string(value))
    return der.seq(*parts)


def _spki() -> bytes:
    key = der.seq(der.integer(_DUMMY_MODULUS), der.integer(65537))
    return der.seq(_algorithm(RSA_ENCRYPTION), der.bit_string(key))


def _signed(tbs: bytes) -> bytes:
    return der.seq(tbs, _algorithm(SHA256_WITH_RSA), der.bit_string(DUMMY_SIGNATURE))


def general_names_dn(name: DistinguishedName) -> bytes:
    # directoryName [4] is explicit because Name is a CHOICE
    return der.seq(der.context(4, encode_name(name)))


def build_certificate(
    serial: int,
    issuer: DistinguishedName | str,
    subject: DistinguishedName | str,
    not_before: datetime,
    not_after: datetime,
    key_usage: Iterable[str] | None = None,
    is_ca: bool | None = None,
    crl_dp_urls: Sequence[str] = (),
    extra_extensions: Sequence[tuple[str, bool, bytes]] = (),
) -> bytes:
    """DER X.509 v3 certificate with the requested metadata.

    ``key_usage`` names come from :data:`KEY_USAGE_BITS`; ``is_ca=None``
    leaves out basicConstraints entirely.  ``extra_extensions`` holds raw
    ``(oid, critical, extnValue)`` triples.
    """
    exts = []
    if is_ca is not None:
        body = der.seq(der.boolean(True)) if is_ca else der.seq()
        exts.append(_extension(OID_BASIC_CONSTRAINTS, body, critical=True))
    if key_usage is not None:
        bits = [KEY_USAGE_BITS.index(k) for k in key_usage]
        exts.append(_extension(OID_KEY_USAGE, der.named_bits(bits), critical=True))
    if crl_dp_urls:
        names = b"".join(der.context(6, u.encode("ascii"), constructed=False) for u in crl_dp_urls)
        dp = der.seq(der.context(0, der.context(0, names)))
        exts.append(_extension(OID_CRL_DISTRIBUTION_POINTS, der.seq(dp)))
    for oid, critical, value in extra_extensions:
        exts.append(_extension(oid, value, critical))

    fields = [
        der.context(0, der.integer(2)),
        der.integer(serial),
        _algorithm(SHA256_WITH_RSA),
        encode_name(as_dn(issuer)),
        der.seq(der.asn1_time(not_before), der.asn1_time(not_after)),
        encode_name(as_dn(subject)),
        _spki(),
    ]
    if exts:
        fields.append(der.context(3, der.seq(*exts)))
    return _signed(der.seq(*fields))


def build_crl(
    issuer: DistinguishedName | str,
    this_update: datetime,
    next_update: datetime | None = None,
    revoked: Sequence[tuple] = (),
    crl_number: int | None = None,
    base_crl_number: int | None = None,
    indirect: bool = False,
) -> bytes:
    """DER v2 CRL.

    ``revoked`` items are ``(serial, date)`` or ``(serial, date, cert_issuer)``;
    a certificate issuer is encoded as the certificateIssuer entry extension
    and, as in any indirect CRL, carries forward to later entries.
    """
    entries = []
    last_issuer = None
    for item in revoked:
        serial, date = item[0], item[1]
        cert_issuer = as_dn(item[2]) if len(item) > 2 and item[2] is not None else None
        parts = [der.integer(serial), der.asn1_time(date)]
        if cert_issuer is not None and cert_issuer != last_issuer:
            ext = _extension(OID_CERTIFICATE_ISSUER, general_names_dn(cert_issuer), critical=True)
            parts.append(der.seq(ext))
            last_issuer = cert_issuer
        entries.append(der.seq(*parts))

    exts = []
    if crl_number is not None:
        exts.append(_extension(OID_CRL_NUMBER, der.integer(crl_number)))
    if base_crl_number is not None:
        exts.append(_extension(OID_DELTA_CRL_INDICATOR, der.integer(base_crl_number), critical=True))
    if indirect:
        idp = der.seq(der.context(4, b"\xff", constructed=False))
        exts.append(_extension(OID_ISSUING_DISTRIBUTION_POINT, idp, critical=True))

    fields = [
        der.integer(1),
        _algorithm(SHA256_WITH_RSA),
        encode_name(as_dn(issuer)),
        der.asn1_time(this_update),
    ]
    if next_update is not None:
        fields.append(der.asn1_time(next_update))
    if entries:
        fields.append(der.seq(*entries))
    if exts:
        fields.append(der.context(0, der.seq(*exts)))
    return _signed(der.seq(*fields))


# The sample PKI used across tests and demos.
CA_DN = "CN=MyCA,O=OrgCA,C=DE"
ALICE_DN = "CN=Alice,O=Org,C=DE"


def sample_ca_certificate() -> bytes:
    return build_certificate(
        1, CA_DN, CA_DN, utc(2004, 1, 1), utc(2014, 1, 1),
        key_usage=("keyCertSign", "cRLSign"), is_ca=True,
    )


def sample_user_certificate(serial: int = 42, not_after: datetime | None = None) -> bytes:
    return build_certificate(
        serial, CA_DN, ALICE_DN, utc(2004, 3, 15, 12), not_after or utc(2005, 3, 15, 12),
        key_usage=("digitalSignature", "nonRepudiation"), is_ca=False,
        crl_dp_urls=(
            "ldap://192.168.0.1:389/CN=MyCA,O=OrgCA,C=DE,DC=MyOrg,DC=DE"
            "?certificateRevocationList?base?objectClass=cRLDistributionPoint",
        ),
    )


ROOT_DOMAIN = "MyOrg.DE"
ORGANIZATION = "MyOrg"
ORG_SUFFIX = "DC=MyOrg,DC=DE"
USERS_BASE = "O=Org,C=DE,DC=MyOrg,DC=DE"
CA_BASE = "O=OrgCA,C=DE,DC=MyOrg,DC=DE"
DP_DN = "CN=MyCA,O=OrgCA,C=DE,DC=MyOrg,DC=DE"


def sample_directory(clock=None, users: Iterable[str] = ("Alice",)):
    """The sample tree below ``DC=MyOrg,DC=DE`` with the default ACL.

    Holds the domain entries, ``C=DE`` with ``O=Org`` (users) and
    ``O=OrgCA``, one ``CN=<name>`` pkiUser per entry of ``users`` and the
    combined CA / distribution point entry at :data:`DP_DN`.  Everything is
    added by the registrar, so the operation log starts non-empty.
    """
    from .directory import Directory
    from .lifecycle import REGISTRAR, default_acl
    from .plan import plan_container, plan_crl_point_entry, plan_root, plan_user_entry
    from .x509meta import parse_certificate

    root = plan_root(ROOT_DOMAIN, ORGANIZATION)
    directory = Directory(suffixes=[root[0].dn], acl=default_acl(USERS_BASE, CA_BASE, root[0].dn), clock=clock)
    planned = list(root)
    planned += [plan_container(dn) for dn in ("C=DE," + ORG_SUFFIX, USERS_BASE, CA_BASE)]
    planned += [plan_user_entry(cn, cn + "son", USERS_BASE) for cn in users]
    ca = parse_certificate(sample_ca_certificate())
    planned.append(plan_crl_point_entry("MyCA", CA_BASE, colocate_ca=True, ca_cert=ca))
    for entry in planned:
        directory.add_entry(REGISTRAR, entry)
    return directory
