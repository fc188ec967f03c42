"""Entry planning for PKI publication and LDAP URL handling.

The planners only build :class:`~dirplan.entry.Entry` objects; adding them
to a directory is up to the caller.  Object-class choices:

* end users get ``pkiUser`` (certificate optional) on top of ``person`` or
  ``inetOrgPerson``, never ``strongAuthenticationUser``;
* CAs get ``pkiCA``, never ``certificationAuthority``;
* revocation lists go on ``cRLDistributionPoint`` entries, optionally merged
  with ``pkiCA`` when the CA publishes its own CRLs;
* each certificate gets a subentry named by issuer and serial beneath its
  owner so it can be searched for directly.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from urllib.parse import quote, unquote

from .directory import Scope
from .dn import DistinguishedName, Rdn, as_dn, attr_key, format_dn, parse_dn
from .entry import Entry
from .errors import BadDn, BadScheme, BadScope, DnError, EmptyDomain, LdapUrlError, MissingName, PlanError
from .x509meta import CertificateInfo


class UserPlanMode(enum.Enum):
    PKI_ONLY = "pki_only"
    ORG_DIRECTORY = "org_directory"


USER_CLASSES = {
    UserPlanMode.PKI_ONLY: ("person", "pkiUser"),
    UserPlanMode.ORG_DIRECTORY: ("inetOrgPerson", "pkiUser"),
}

# Attribute names for certificate subentries.  The naming draft never became
# a standard, so everything reads them from here.
SUBENTRY_CLASS = "x509certificate"
SUBENTRY_ATTRS = {
    "serial": "x509serialNumber",
    "issuer": "x509issuerDN",
    "subject": "x509subjectDN",
    "not_before": "x509notBefore",
    "not_after": "x509notAfter",
    "key_usage": "x509keyUsage",
    "certificate": "userCertificate",
}

DEFAULT_LDAP_PORT = 389
DEFAULT_FILTER = "(objectClass=*)"


def _require(name: str, what: str = "cn") -> str:
    if not name or not name.strip():
        raise MissingName(f"{what} must not be empty")
    return name


def plan_root(domain: str, organization: str) -> list[Entry]:
    """Domain-component entries for ``domain``, top level first.

    ``MyOrg.DE`` yields ``DC=DE`` and then ``DC=MyOrg,DC=DE``.  The
    organization's own label carries ``dcObject`` + ``organization``; the
    labels above it are plain ``domain`` entries.
    """
    labels = domain.strip().split(".") if domain and domain.strip() else []
    if not labels or any(not label for label in labels):
        raise EmptyDomain(f"domain {domain!r} has an empty label")
    entries = []
    dn = DistinguishedName(())
    for depth, label in enumerate(reversed(labels)):
        dn = dn.child(Rdn((("DC", label),)))
        if depth == len(labels) - 1:
            attrs = {"objectClass": ["organization", "dcObject"], "dc": [label], "o": [organization or label]}
        else:
            attrs = {"objectClass": ["domain"], "dc": [label]}
        entries.append(Entry(dn, attrs))
    return entries


_CONTAINERS = {
    "c": ("country", "c"),
    "o": ("organization", "o"),
    "ou": ("organizationalUnit", "ou"),
    "dc": ("domain", "dc"),
}


def plan_container(dn: DistinguishedName | str) -> Entry:
    """Plain structural entry for an intermediate node such as ``O=Org,...``."""
    dn = as_dn(dn)
    if len(dn.rdn.pairs) != 1:
        raise PlanError(f"container {dn} must have a single-valued RDN")
    attr, value = dn.rdn.pairs[0]
    try:
        oc, name = _CONTAINERS[attr_key(attr)]
    except KeyError:
        raise PlanError(f"no container class for naming attribute {attr}") from None
    return Entry(dn, {"objectClass": [oc], name: [value]})


def plan_user_entry(cn: str, sn: str, parent_dn, mode: UserPlanMode | str = UserPlanMode.PKI_ONLY) -> Entry:
    _require(cn)
    _require(sn, "sn")
    dn = as_dn(parent_dn).child(Rdn((("CN", cn),)))
    return Entry(dn, {"objectClass": list(USER_CLASSES[UserPlanMode(mode)]), "cn": [cn], "sn": [sn]})


def plan_ca_entry(
    cn: str,
    parent_dn,
    ca_cert: CertificateInfo | None = None,
    structural: str = "applicationProcess",
) -> Entry:
    """CA entry with ``pkiCA`` on a structural class (``applicationProcess`` by default).

    Pass ``structural="cRLDistributionPoint"`` for the hybrid entry that
    also holds the CA's own CRLs.
    """
    _require(cn)
    if structural.lower() == "certificationauthority":
        raise PlanError("certificationAuthority is never planned; it mandates CRL and ARL values")
    dn = as_dn(parent_dn).child(Rdn((("CN", cn),)))
    entry = Entry(dn, {"objectClass": [structural, "pkiCA"], "cn": [cn]})
    if ca_cert is not None:
        entry.set("cACertificate", [ca_cert.raw_der])
    return entry


def plan_crl_point_entry(cn: str, parent_dn, colocate_ca: bool = False, ca_cert: CertificateInfo | None = None) -> Entry:
    """``cRLDistributionPoint`` entry; with ``colocate_ca`` also ``pkiCA``.

    Indirect CRL issuers are not CAs, so callers must leave ``colocate_ca``
    off for them.
    """
    if ca_cert is not None and not colocate_ca:
        raise PlanError("a CA certificate can only be stored on a colocated CA entry")
    if colocate_ca:
        return plan_ca_entry(cn, parent_dn, ca_cert, structural="cRLDistributionPoint")
    _require(cn)
    dn = as_dn(parent_dn).child(Rdn((("CN", cn),)))
    return Entry(dn, {"objectClass": ["cRLDistributionPoint"], "cn": [cn]})


def subentry_rdn(issuer: DistinguishedName, serial: int) -> Rdn:
    return Rdn(((SUBENTRY_ATTRS["issuer"], format_dn(issuer)), (SUBENTRY_ATTRS["serial"], str(serial))))


def subentry_dn(owner_dn, issuer: DistinguishedName, serial: int) -> DistinguishedName:
    return as_dn(owner_dn).child(subentry_rdn(issuer, serial))


def _generalized(t) -> str:
    return t.instant.strftime("%Y%m%d%H%M%SZ")


def plan_cert_subentry(owner_dn, info: CertificateInfo) -> Entry:
    """Per-certificate entry below ``owner_dn`` with searchable metadata."""
    a = SUBENTRY_ATTRS
    attrs = {
        "objectClass": [SUBENTRY_CLASS],
        a["serial"]: [str(info.serial)],
        a["issuer"]: [format_dn(info.issuer)],
        a["subject"]: [format_dn(info.subject)],
        a["not_before"]: [_generalized(info.not_before)],
        a["not_after"]: [_generalized(info.not_after)],
        a["certificate"]: [info.raw_der],
    }
    if info.key_usage:
        attrs[a["key_usage"]] = sorted(info.key_usage)
    if not info.subject.rdns:
        del attrs[a["subject"]]
    return Entry(subentry_dn(owner_dn, info.issuer, info.serial), attrs)


# -- LDAP URLs ----------------------------------------------------------------------

_DN_SAFE = ",=+;"
_FILTER_SAFE = "=()&|!*,;:+"


@dataclass(frozen=True)
class LdapUrl:
    host: str
    port: int = DEFAULT_LDAP_PORT
    dn: DistinguishedName = DistinguishedName(())
    attributes: tuple[str, ...] = ()
    scope: Scope = Scope.BASE
    filter: str = DEFAULT_FILTER
    extensions: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "dn", as_dn(self.dn) if isinstance(self.dn, str) else self.dn)
        object.__setattr__(self, "scope", Scope(self.scope))
        object.__setattr__(self, "attributes", tuple(self.attributes))
        if not 0 < self.port < 65536:
            raise LdapUrlError(f"port {self.port} out of range")

    def __str__(self):
        parts = [
            quote(format_dn(self.dn), safe=_DN_SAFE),
            ",".join(self.attributes),
            self.scope.value,
            quote(self.filter, safe=_FILTER_SAFE),
        ]
        if self.extensions:
            parts.append(",".join(self.extensions))
        return f"ldap://{self.host}:{self.port}/" + "?".join(parts)


def make_crl_dp_url(host: str, port: int, dp_dn) -> str:
    """LDAP URL a certificate's cRLDistributionPoints extension should carry."""
    url = LdapUrl(
        host=host,
        port=port,
        dn=as_dn(dp_dn),
        attributes=("certificateRevocationList",),
        scope=Scope.BASE,
        filter="objectClass=cRLDistributionPoint",
    )
    return str(url)


def parse_ldap_url(text: str) -> LdapUrl:
    """Split an ``ldap://host:port/dn?attrs?scope?filter?ext`` URL.

    Missing port means 389, missing scope ``base`` and missing filter
    ``(objectClass=*)``.
    """
    text = text.strip()
    if not text.lower().startswith("ldap://"):
        raise BadScheme(f"not an ldap URL: {text!r}")
    rest = text[7:]
    hostport, _, tail = rest.partition("/")
    host, port = _split_hostport(hostport)
    fields = tail.split("?") if tail else []
    if len(fields) > 5:
        raise LdapUrlError(f"too many '?' components in {text!r}")
    fields += [""] * (5 - len(fields))
    dn_text, attrs, scope, flt, exts = fields
    dn_text = unquote(dn_text)
    try:
        dn = parse_dn(dn_text) if dn_text else DistinguishedName(())
    except DnError as exc:
        raise BadDn(f"bad DN {dn_text!r}: {exc}") from None
    scope = unquote(scope).lower() or "base"
    try:
        scope_value = Scope(scope)
    except ValueError:
        raise BadScope(f"unknown scope {scope!r}") from None
    return LdapUrl(
        host=host,
        port=port,
        dn=dn,
        attributes=tuple(unquote(a) for a in attrs.split(",") if a),
        scope=scope_value,
        filter=unquote(flt) or DEFAULT_FILTER,
        extensions=tuple(unquote(e) for e in exts.split(",") if e),
    )


def _split_hostport(hostport: str) -> tuple[str, int]:
    if hostport.startswith("["):
        end = hostport.find("]")
        if end < 0:
            raise LdapUrlError(f"unterminated IPv6 literal in {hostport!r}")
        host, rest = hostport[: end + 1], hostport[end + 1 :]
        port_text = rest[1:] if rest.startswith(":") else ""
        if rest and not rest.startswith(":"):
            raise LdapUrlError(f"junk after IPv6 literal in {hostport!r}")
    else:
        host, _, port_text = hostport.partition(":")
    if not port_text:
        return host, DEFAULT_LDAP_PORT
    if not port_text.isdigit():
        raise LdapUrlError(f"bad port {port_text!r}")
    return host, int(port_text)
