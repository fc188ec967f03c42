"""Exception hierarchy shared by every dirplan module."""

from __future__ import annotations


class DirplanError(Exception):
    """Base class for all domain errors raised by this package."""


# -- DER -------------------------------------------------------------------

class DerError(DirplanError, ValueError):
    pass


class Truncated(DerError):
    pass


class NonCanonicalLength(DerError):
    pass


class IndefiniteLength(DerError):
    pass


class MalformedTag(DerError):
    pass


class MalformedOid(DerError):
    pass


class EmptyOid(MalformedOid):
    pass


class TruncatedArc(MalformedOid):
    pass


class MalformedTime(DerError):
    pass


class MalformedValue(DerError):
    """A primitive (INTEGER, BOOLEAN, BIT STRING, string) breaks DER rules."""


# -- X.509 -----------------------------------------------------------------

class MalformedCertificate(DirplanError, ValueError):
    pass


class MalformedCrl(DirplanError, ValueError):
    pass


# -- distinguished names ---------------------------------------------------

class DnError(DirplanError, ValueError):
    pass


class EmptyRdn(DnError):
    pass


class UnterminatedEscape(DnError):
    pass


class MalformedDn(DnError):
    pass


# -- directory core --------------------------------------------------------

class DirectoryError(DirplanError):
    """A directory operation failed; ``outcome`` is the logged outcome code."""

    outcome = "other_error"


class Denied(DirectoryError):
    outcome = "denied"


class SchemaViolation(DirectoryError):
    outcome = "schema_violation"

    def __init__(self, message: str, violations=(), line: int | None = None):
        super().__init__(message)
        self.violations = list(violations)
        self.line = line


class UnknownObjectClass(SchemaViolation):
    pass


class AlreadyExists(DirectoryError):
    pass


class NoSuchParent(DirectoryError):
    outcome = "not_found"


class NoSuchEntry(DirectoryError):
    outcome = "not_found"


class NoSuchAttribute(DirectoryError):
    outcome = "not_found"


class AttributeOrValueExists(DirectoryError):
    pass


class NotLeaf(DirectoryError):
    pass


class BadFilter(DirectoryError, ValueError):
    pass


class DirectoryUnavailable(DirectoryError):
    """Raised by the fault-injection hook to simulate a failed write."""


# -- planning / URLs -------------------------------------------------------

class PlanError(DirplanError, ValueError):
    pass


class EmptyDomain(PlanError):
    pass


class MissingName(PlanError):
    pass


class LdapUrlError(DirplanError, ValueError):
    pass


class BadScheme(LdapUrlError):
    pass


class BadDn(LdapUrlError):
    pass


class BadScope(LdapUrlError):
    pass


# -- lifecycle -------------------------------------------------------------

class LifecycleError(DirplanError):
    pass


class DuplicateRegistration(LifecycleError):
    pass


class NoSuchRecord(LifecycleError):
    pass


class AlreadyActivated(LifecycleError):
    pass


class StaleCrl(LifecycleError):
    pass


class MissingBaseCrl(LifecycleError):
    pass


class NotACertificateEntry(LifecycleError):
    pass


class NotAcknowledged(LifecycleError):
    pass


class RetentionNotExpired(LifecycleError):
    pass


class EntryChangedSinceFetch(LifecycleError):
    pass


class TicketAlreadyUsed(LifecycleError):
    pass


class SignatureRejected(LifecycleError):
    pass


# -- LDIF ------------------------------------------------------------------

class LdifError(DirplanError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class BadVersion(LdifError):
    pass


class MalformedLine(LdifError):
    pass


class OrphanEntry(LdifError):
    pass


# -- CLI -------------------------------------------------------------------

class ConfigError(DirplanError, ValueError):
    pass
