"""Plan, publish and audit a PKI certificate directory.

The package covers the whole path from DER bytes to a compliant directory:
``der`` and ``x509meta`` read certificates and CRLs, ``dn``, ``entry``,
``schema`` and ``directory`` model the LDAP tree, ``plan`` decides what goes
where, ``lifecycle`` runs publication under retention and add-only rules,
``ldif`` backs it all up, and ``cli`` puts a command line on top.
"""

from .directory import AclRule, Directory, ModOp, Permission, Scope
from .dn import DistinguishedName, Rdn, parse_dn
from .entry import Entry
from .ldif import export_ldif, import_ldif, is_safe_string
from .lifecycle import (
    ADMIN,
    CERT_PUBLISHER,
    CRL_PUBLISHER,
    REGISTRAR,
    AuditLog,
    CertStatus,
    PublicationEngine,
    audit_compliance,
    default_acl,
)
from .plan import (
    UserPlanMode,
    make_crl_dp_url,
    parse_ldap_url,
    plan_ca_entry,
    plan_cert_subentry,
    plan_container,
    plan_crl_point_entry,
    plan_root,
    plan_user_entry,
)
from .schema import check_schema
from .x509meta import CertificateInfo, CrlInfo, cert_hash, parse_certificate, parse_crl

__version__ = "0.1.0"

__all__ = [
    "ADMIN",
    "CERT_PUBLISHER",
    "CRL_PUBLISHER",
    "REGISTRAR",
    "AclRule",
    "AuditLog",
    "CertStatus",
    "CertificateInfo",
    "CrlInfo",
    "Directory",
    "DistinguishedName",
    "Entry",
    "ModOp",
    "Permission",
    "PublicationEngine",
    "Rdn",
    "Scope",
    "UserPlanMode",
    "audit_compliance",
    "cert_hash",
    "check_schema",
    "default_acl",
    "export_ldif",
    "import_ldif",
    "is_safe_string",
    "make_crl_dp_url",
    "parse_certificate",
    "parse_crl",
    "parse_dn",
    "parse_ldap_url",
    "plan_ca_entry",
    "plan_cert_subentry",
    "plan_container",
    "plan_crl_point_entry",
    "plan_root",
    "plan_user_entry",
]
