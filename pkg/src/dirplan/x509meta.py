"""Certificate and CRL metadata needed for directory publication.

Nothing here verifies signatures or builds paths.  The parsers pull out the
fields a publisher files entries under (names, serial, validity, key usage,
distribution points, CRL numbering) plus digests of the raw encoding.
"""

from __future__ import annotations

import enum
import hashlib
import logging
from dataclasses import dataclass

from . import der
from .der import Asn1Time, OidValue, TlvNode
from .dn import DistinguishedName, Rdn, Value
from .errors import DerError, MalformedCertificate, MalformedCrl

log = logging.getLogger(__name__)

# attribute type OIDs <-> the short names used in string DNs
NAME_OIDS = {
    "2.5.4.3": "CN",
    "2.5.4.4": "SN",
    "2.5.4.5": "serialNumber",
    "2.5.4.6": "C",
    "2.5.4.7": "L",
    "2.5.4.8": "ST",
    "2.5.4.9": "street",
    "2.5.4.10": "O",
    "2.5.4.11": "OU",
    "2.5.4.12": "title",
    "2.5.4.42": "GN",
    "0.9.2342.19200300.100.1.1": "UID",
    "0.9.2342.19200300.100.1.25": "DC",
    "1.2.840.113549.1.9.1": "emailAddress",
}
NAME_TYPES = {v.lower(): k for k, v in NAME_OIDS.items()}

OID_KEY_USAGE = "2.5.29.15"
OID_BASIC_CONSTRAINTS = "2.5.29.19"
OID_CRL_DISTRIBUTION_POINTS = "2.5.29.31"
OID_CRL_NUMBER = "2.5.29.20"
OID_DELTA_CRL_INDICATOR = "2.5.29.27"
OID_ISSUING_DISTRIBUTION_POINT = "2.5.29.28"
OID_CERTIFICATE_ISSUER = "2.5.29.29"
OID_REASON_CODE = "2.5.29.21"

KEY_USAGE_BITS = (
    "digitalSignature",
    "nonRepudiation",
    "keyEncipherment",
    "dataEncipherment",
    "keyAgreement",
    "keyCertSign",
    "cRLSign",
    "encipherOnly",
    "decipherOnly",
)

_ENTRY_EXTENSIONS = {OID_CERTIFICATE_ISSUER, OID_REASON_CODE}


class HashAlgorithm(enum.Enum):
    SHA1 = "sha1"
    SHA256 = "sha256"

    @property
    def digest_size(self) -> int:
        return 20 if self is HashAlgorithm.SHA1 else 32


@dataclass(frozen=True)
class HashValue:
    algorithm: HashAlgorithm
    digest: bytes

    def __post_init__(self):
        object.__setattr__(self, "algorithm", HashAlgorithm(self.algorithm))
        if len(self.digest) != self.algorithm.digest_size:
            raise ValueError(f"{self.algorithm.value} digest must be {self.algorithm.digest_size} bytes")

    def hex(self) -> str:
        return self.digest.hex()


def cert_hash(data: bytes, algorithm: HashAlgorithm | str = HashAlgorithm.SHA256) -> HashValue:
    """Digest of exactly the given DER bytes."""
    algorithm = HashAlgorithm(algorithm)
    return HashValue(algorithm, hashlib.new(algorithm.value, bytes(data)).digest())


@dataclass(frozen=True)
class CertificateInfo:
    serial: int
    issuer: DistinguishedName
    subject: DistinguishedName
    not_before: Asn1Time
    not_after: Asn1Time
    key_usage: frozenset[str]
    crl_dp_urls: tuple[str, ...]
    is_ca: bool
    raw_der: bytes
    hash_sha1: bytes
    hash_sha256: bytes
    signature_algorithm: str = ""
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        if self.not_before.instant > self.not_after.instant:
            raise MalformedCertificate("notBefore is later than notAfter")

    def hash(self, algorithm: HashAlgorithm | str) -> HashValue:
        algorithm = HashAlgorithm(algorithm)
        return HashValue(algorithm, self.hash_sha1 if algorithm is HashAlgorithm.SHA1 else self.hash_sha256)

    def summary(self) -> str:
        return (
            f"serial {self.serial}\nissuer {self.issuer}\nsubject {self.subject}\n"
            f"valid {self.not_before} .. {self.not_after}\n"
            f"sha256 {self.hash_sha256.hex()}"
        )


@dataclass(frozen=True)
class RevokedCertificate:
    serial: int
    revocation_date: Asn1Time
    certificate_issuer: DistinguishedName | None = None


@dataclass(frozen=True)
class CrlInfo:
    issuer: DistinguishedName
    this_update: Asn1Time
    next_update: Asn1Time | None
    crl_number: int | None
    delta_base_number: int | None
    is_indirect: bool
    revoked: tuple[RevokedCertificate, ...]
    raw_der: bytes
    signature_algorithm: str = ""
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        if self.delta_base_number is not None:
            if self.crl_number is None:
                raise MalformedCrl("delta CRL without a cRLNumber")
            if self.delta_base_number >= self.crl_number:
                raise MalformedCrl("BaseCRLNumber must be below the delta's cRLNumber")

    @property
    def is_delta(self) -> bool:
        return self.delta_base_number is not None

    def issuer_of(self, entry: RevokedCertificate) -> DistinguishedName:
        """Certificate issuer an entry refers to (the CRL issuer unless overridden)."""
        return entry.certificate_issuer or self.issuer


class CrlKind(enum.Enum):
    COMPLETE_DIRECT = "complete_direct"
    DELTA = "delta"
    INDIRECT = "indirect"
    INDIRECT_DELTA = "indirect_delta"


def classify_crl(info: CrlInfo) -> CrlKind:
    if info.is_indirect:
        return CrlKind.INDIRECT_DELTA if info.is_delta else CrlKind.INDIRECT
    return CrlKind.DELTA if info.is_delta else CrlKind.COMPLETE_DIRECT


def is_crl_signer(info: CertificateInfo) -> bool:
    return "cRLSign" in info.key_usage


# -- decoding helpers ----------------------------------------------------------

def _expect(node: TlvNode, number: int, what: str) -> TlvNode:
    if not node.is_universal(number):
        raise DerError(f"expected {what}, found {node!r}")
    return node


def decode_name(node: TlvNode) -> DistinguishedName:
    """X.501 Name (root-first SEQUENCE OF SET) to a leaf-first DN."""
    _expect(node, der.SEQUENCE, "Name SEQUENCE")
    rdns = []
    for rdn_node in node.children():
        _expect(rdn_node, der.SET, "RDN SET")
        pairs: list[tuple[str, Value]] = []
        for atv in rdn_node.children():
            parts = _expect(atv, der.SEQUENCE, "AttributeTypeAndValue").children()
            if len(parts) != 2:
                raise DerError("AttributeTypeAndValue must have two parts")
            oid = str(der.decode_oid(_expect(parts[0], der.OBJECT_IDENTIFIER, "OID").content))
            value_node = parts[1]
            if value_node.tag_class is der.TagClass.UNIVERSAL and value_node.tag_number in der.STRING_TAGS:
                value: Value = der.decode_string(value_node)
            else:
                value = value_node.encode()
            pairs.append((NAME_OIDS.get(oid, oid), value))
        rdns.append(Rdn(tuple(pairs)))
    rdns.reverse()
    return DistinguishedName(tuple(rdns))


def _string_tag_for(attr: str) -> int:
    key = attr.lower()
    if key in ("c", "serialnumber"):
        return der.PRINTABLE_STRING
    if key in ("dc", "emailaddress"):
        return der.IA5_STRING
    return der.UTF8_STRING


def encode_name(dn: DistinguishedName) -> bytes:
    """Leaf-first DN to a DER Name; inverse of :func:`decode_name`."""
    rdn_parts = []
    for rdn in reversed(dn.rdns):
        atvs = []
        for attr, value in rdn.pairs:
            oid = NAME_TYPES.get(attr.lower())
            if oid is None:
                oid = str(OidValue.parse(attr))
            if isinstance(value, bytes):
                encoded = value
            else:
                encoded = der.tlv(_string_tag_for(attr), value.encode("utf-8"))
            atvs.append(der.seq(der.oid(oid), encoded))
        rdn_parts.append(der.set_of(*atvs))
    return der.seq(*rdn_parts)


def _extensions(node: TlvNode) -> list[tuple[str, bool, bytes]]:
    out = []
    for ext in _expect(node, der.SEQUENCE, "Extensions").children():
        parts = _expect(ext, der.SEQUENCE, "Extension").children()
        if not 2 <= len(parts) <= 3:
            raise DerError("Extension must have two or three parts")
        oid = str(der.decode_oid(_expect(parts[0], der.OBJECT_IDENTIFIER, "extnID").content))
        critical = False
        if len(parts) == 3:
            critical = der.decode_boolean(_expect(parts[1], der.BOOLEAN, "critical").content)
        value = _expect(parts[-1], der.OCTET_STRING, "extnValue").content
        out.append((oid, critical, value))
    return out


def _general_names(nodes: list[TlvNode]) -> tuple[list[str], list[DistinguishedName]]:
    urls, names = [], []
    for gn in nodes:
        if gn.is_context(6) and not gn.constructed:
            urls.append(gn.content.decode("ascii"))
        elif gn.is_context(4) and gn.constructed:
            names.append(decode_name(der.read_single(gn.content)))
    return urls, names


def _dp_name_urls(dp_name: TlvNode) -> list[str]:
    # DistributionPointName ::= CHOICE { fullName [0] GeneralNames, ... }
    urls = []
    for choice in dp_name.children():
        if choice.is_context(0):
            urls.extend(_general_names(choice.children())[0])
    return urls


def _crl_dp_urls(value: bytes) -> list[str]:
    urls = []
    for dp in _expect(der.read_single(value), der.SEQUENCE, "CRLDistributionPoints").children():
        for part in _expect(dp, der.SEQUENCE, "DistributionPoint").children():
            if part.is_context(0):
                urls.extend(_dp_name_urls(part))
    return urls


def _algorithm(node: TlvNode) -> str:
    parts = _expect(node, der.SEQUENCE, "AlgorithmIdentifier").children()
    return str(der.decode_oid(_expect(parts[0], der.OBJECT_IDENTIFIER, "algorithm").content))


def _outer(data: bytes, what: str) -> tuple[list[TlvNode], str]:
    top = _expect(der.read_single(bytes(data)), der.SEQUENCE, what)
    parts = top.children()
    if len(parts) != 3:
        raise DerError(f"{what} must have three parts")
    _expect(parts[0], der.SEQUENCE, "to-be-signed SEQUENCE")
    sig_alg = _algorithm(parts[1])
    der.decode_bit_string(_expect(parts[2], der.BIT_STRING, "signature").content)
    return parts[0].children(), sig_alg


# -- certificates --------------------------------------------------------------

def parse_certificate(data: bytes) -> CertificateInfo:
    """Extract publication metadata from a DER certificate.

    Unknown non-critical extensions are skipped; unknown critical ones are
    kept as warnings since path validation is not this tool's job.
    """
    data = bytes(data)
    try:
        return _parse_certificate(data)
    except (DerError, UnicodeDecodeError, IndexError) as exc:
        raise MalformedCertificate(str(exc)) from exc


def _parse_certificate(data: bytes) -> CertificateInfo:
    tbs, sig_alg = _outer(data, "Certificate")
    i = 0
    if tbs and tbs[0].is_context(0):
        version = der.decode_integer(_expect(der.read_single(tbs[0].content), der.INTEGER, "version").content)
        if version not in (0, 1, 2):
            raise DerError(f"unsupported certificate version {version}")
        i = 1
    serial = der.decode_integer(_expect(tbs[i], der.INTEGER, "serialNumber").content)
    if serial < 0:
        raise DerError("negative serial number")
    _algorithm(tbs[i + 1])
    issuer = decode_name(tbs[i + 2])
    validity = _expect(tbs[i + 3], der.SEQUENCE, "Validity").children()
    if len(validity) != 2:
        raise DerError("Validity must hold two times")
    not_before, not_after = der.parse_time(validity[0]), der.parse_time(validity[1])
    subject = decode_name(tbs[i + 4])
    _expect(tbs[i + 5], der.SEQUENCE, "SubjectPublicKeyInfo")

    key_usage: set[str] = set()
    urls: list[str] = []
    is_ca = False
    warnings = []
    for node in tbs[i + 6 :]:
        if node.is_context(1) or node.is_context(2):
            continue  # unique identifiers
        if not node.is_context(3):
            raise DerError(f"unexpected field {node!r} in TBSCertificate")
        for oid, critical, value in _extensions(der.read_single(node.content)):
            if oid == OID_KEY_USAGE:
                bits = der.bit_string_flags(_expect(der.read_single(value), der.BIT_STRING, "KeyUsage").content)
                key_usage.update(KEY_USAGE_BITS[b] for b in bits if b < len(KEY_USAGE_BITS))
            elif oid == OID_BASIC_CONSTRAINTS:
                bc = _expect(der.read_single(value), der.SEQUENCE, "BasicConstraints").children()
                if bc and bc[0].is_universal(der.BOOLEAN):
                    is_ca = der.decode_boolean(bc[0].content)
            elif oid == OID_CRL_DISTRIBUTION_POINTS:
                urls.extend(_crl_dp_urls(value))
            elif critical:
                warnings.append(f"unknown critical extension {oid}")
    for w in warnings:
        log.warning("certificate serial %d: %s", serial, w)

    try:
        return CertificateInfo(
            serial=serial,
            issuer=issuer,
            subject=subject,
            not_before=not_before,
            not_after=not_after,
            key_usage=frozenset(key_usage),
            crl_dp_urls=tuple(urls),
            is_ca=is_ca,
            raw_der=data,
            hash_sha1=hashlib.sha1(data).digest(),
            hash_sha256=hashlib.sha256(data).digest(),
            signature_algorithm=sig_alg,
            warnings=tuple(warnings),
        )
    except MalformedCertificate as exc:
        raise DerError(str(exc)) from None


# -- CRLs ----------------------------------------------------------------------

def parse_crl(data: bytes) -> CrlInfo:
    """Extract numbering, scope flags and the revoked list from a DER CRL."""
    data = bytes(data)
    try:
        return _parse_crl(data)
    except (DerError, UnicodeDecodeError, IndexError) as exc:
        raise MalformedCrl(str(exc)) from exc


def _parse_crl(data: bytes) -> CrlInfo:
    tbs, sig_alg = _outer(data, "CertificateList")
    i = 0
    if tbs and tbs[0].is_universal(der.INTEGER):
        version = der.decode_integer(tbs[0].content)
        if version not in (0, 1):
            raise DerError(f"unsupported CRL version {version}")
        i = 1
    _algorithm(tbs[i])
    issuer = decode_name(tbs[i + 1])
    this_update = der.parse_time(tbs[i + 2])
    rest = tbs[i + 3 :]
    next_update = None
    if rest and (rest[0].is_universal(der.UTC_TIME) or rest[0].is_universal(der.GENERALIZED_TIME)):
        next_update = der.parse_time(rest[0])
        rest = rest[1:]
    entries: list[TlvNode] = []
    if rest and rest[0].is_universal(der.SEQUENCE):
        entries = rest[0].children()
        rest = rest[1:]

    crl_number = base_number = None
    indirect = False
    warnings = []
    for node in rest:
        if not node.is_context(0):
            raise DerError(f"unexpected field {node!r} in TBSCertList")
        for oid, critical, value in _extensions(der.read_single(node.content)):
            if oid == OID_CRL_NUMBER:
                crl_number = der.decode_integer(_expect(der.read_single(value), der.INTEGER, "CRLNumber").content)
            elif oid == OID_DELTA_CRL_INDICATOR:
                base_number = der.decode_integer(_expect(der.read_single(value), der.INTEGER, "BaseCRLNumber").content)
            elif oid == OID_ISSUING_DISTRIBUTION_POINT:
                idp = _expect(der.read_single(value), der.SEQUENCE, "IssuingDistributionPoint").children()
                for part in idp:
                    if part.is_context(4) and not part.constructed:
                        indirect = der.decode_boolean(part.content)
            elif critical:
                warnings.append(f"unknown critical CRL extension {oid}")
    for value in (crl_number, base_number):
        if value is not None and value < 0:
            raise DerError("CRL numbers must be non-negative")

    revoked = []
    current_issuer = None
    for entry in entries:
        parts = _expect(entry, der.SEQUENCE, "revoked entry").children()
        serial = der.decode_integer(_expect(parts[0], der.INTEGER, "userCertificate").content)
        date = der.parse_time(parts[1])
        if len(parts) > 2:
            for oid, critical, value in _extensions(parts[2]):
                if oid == OID_CERTIFICATE_ISSUER:
                    names = _general_names(_expect(der.read_single(value), der.SEQUENCE, "GeneralNames").children())[1]
                    if names:
                        current_issuer = names[0]
                    if not indirect:
                        warnings.append(f"certificateIssuer on entry {serial} of a direct CRL ignored")
                elif critical and oid not in _ENTRY_EXTENSIONS:
                    warnings.append(f"unknown critical entry extension {oid}")
        # certificateIssuer carries forward to later entries of an indirect CRL
        revoked.append(RevokedCertificate(serial, date, current_issuer if indirect else None))

    try:
        return CrlInfo(
            issuer=issuer,
            this_update=this_update,
            next_update=next_update,
            crl_number=crl_number,
            delta_base_number=base_number,
            is_indirect=indirect,
            revoked=tuple(revoked),
            raw_der=data,
            signature_algorithm=sig_alg,
            warnings=tuple(warnings),
        )
    except MalformedCrl as exc:
        raise DerError(str(exc)) from None
