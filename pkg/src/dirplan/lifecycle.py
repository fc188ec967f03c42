"""Certificate and CRL publication engine.

The engine keeps two views of every certificate apart:

* the *status store* answers ``good``/``revoked``/``unknown`` and learns about
  every activated certificate, published or not;
* the *directory* only receives certificates whose owner consented, and only
  through add requests.  Certificates are never modified or deleted except
  through an acknowledged, retention-checked delete ticket.

Directory failures never abort an operation half-way without a trace: they
are turned into out-of-band queue items, announced through the notifier
and replayed later with the same principal and the same checks.
"""

from __future__ import annotations

import base64
import enum
import logging
from collections import deque
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable, Mapping

from .directory import ANONYMOUS, AclRule, Clock, Directory, ModOp, OpKind, OperationRecord, Permission, Scope, system_clock
from .dn import DistinguishedName, as_dn, attr_key
from .entry import Entry
from .errors import (
    AlreadyActivated,
    AlreadyExists,
    DirectoryError,
    DuplicateRegistration,
    EntryChangedSinceFetch,
    LifecycleError,
    MalformedCertificate,
    MalformedCrl,
    MissingBaseCrl,
    NoSuchEntry,
    NoSuchRecord,
    NotACertificateEntry,
    NotAcknowledged,
    RetentionNotExpired,
    SignatureRejected,
    StaleCrl,
    TicketAlreadyUsed,
)
from .plan import plan_cert_subentry, subentry_dn
from .x509meta import (
    CertificateInfo,
    CrlInfo,
    CrlKind,
    HashAlgorithm,
    HashValue,
    classify_crl,
    parse_certificate,
    parse_crl,
)

log = logging.getLogger(__name__)
_warned = False

CERT_PUBLISHER = "cert-publisher"
CRL_PUBLISHER = "crl-publisher"
ADMIN = "admin"
REGISTRAR = "registrar"

STANDARD_RETENTION_YEARS = 5
ACCREDITED_RETENTION_YEARS = 30

CERT_ATTRIBUTES = ("userCertificate", "cACertificate")
CRL_ATTRIBUTES = ("certificateRevocationList", "authorityRevocationList", "deltaRevocationList")
SUBENTRY_ATTRIBUTES = (
    "objectClass",
    "userCertificate",
    "x509serialNumber",
    "x509issuerDN",
    "x509subjectDN",
    "x509notBefore",
    "x509notAfter",
    "x509keyUsage",
)


def retention_deadline(not_after: datetime, accredited: bool) -> datetime:
    """First instant after the retention period: Jan 1 of year(not_after) + N + 1."""
    years = ACCREDITED_RETENTION_YEARS if accredited else STANDARD_RETENTION_YEARS
    return datetime(not_after.year + years + 1, 1, 1, tzinfo=timezone.utc)


def default_acl(users_subtree, ca_subtree, root=None) -> list[AclRule]:
    """Role separation for the three engine principals plus public read.

    ``cert-publisher`` may only add certificate subentries below the users,
    ``crl-publisher`` may only rewrite revocation lists below the CA, and
    ``admin`` may only delete (after a ticket).  ``registrar`` adds the
    ordinary tree (containers, users, CA entries).  Everybody may read.
    """
    users, cas = as_dn(users_subtree), as_dn(ca_subtree)
    roots = [as_dn(root)] if root is not None else [users, cas]
    rules = [
        AclRule(CERT_PUBLISHER, Permission.ADD_ENTRY, frozenset(SUBENTRY_ATTRIBUTES), users),
        AclRule(CERT_PUBLISHER, Permission.READ, "any", users),
        AclRule(CRL_PUBLISHER, Permission.MODIFY_ATTR, frozenset(CRL_ATTRIBUTES), cas),
        AclRule(CRL_PUBLISHER, Permission.READ, "any", cas),
    ]
    for r in roots:
        rules.append(AclRule(REGISTRAR, Permission.ADD_ENTRY, "any", r))
        rules.append(AclRule(ADMIN, Permission.DELETE_ENTRY, "any", r))
        rules.append(AclRule(ADMIN, Permission.READ, "any", r))
        rules.append(AclRule(ANONYMOUS, Permission.READ, "any", r))
    return rules


# -- audit log -------------------------------------------------------------------

def _field(value) -> str:
    return str(value).replace("\r", " ").replace("\n", " ").replace("|", "%7C")


class AuditLog:
    """Append-only ``time|principal|event|target|outcome|detail`` lines.

    Lines are kept in memory and, with a ``path``, appended to that file.
    """

    def __init__(self, path: str | Path | None = None, clock: Clock | None = None):
        self.path = Path(path) if path is not None else None
        self.clock = clock or system_clock
        self.lines: list[str] = []

    def write(self, principal: str, event: str, target, outcome: str, detail: str = "") -> str:
        stamp = self.clock().astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
        line = "|".join([stamp] + [_field(x) for x in (principal, event, target, outcome, detail)])
        self.lines.append(line)
        if self.path is not None:
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(line + "\n")
        return line


# -- records and stores ----------------------------------------------------------

class RecordState(enum.Enum):
    REGISTERED = "registered"
    ACTIVATED = "activated"
    DELETED = "deleted"


Key = tuple[DistinguishedName, int]


@dataclass
class PublicationRecord:
    cert: CertificateInfo
    consent_to_publish: bool
    accredited: bool
    registered_at: datetime
    retention_deadline: datetime
    owner_dn: DistinguishedName
    state: RecordState = RecordState.REGISTERED
    activated_at: datetime | None = None
    deleted_at: datetime | None = None
    directory_dn: DistinguishedName | None = None

    @property
    def key(self) -> Key:
        return (self.cert.issuer, self.cert.serial)

    @property
    def subentry_dn(self) -> DistinguishedName:
        return subentry_dn(self.owner_dn, self.cert.issuer, self.cert.serial)


class CertStatus(enum.Enum):
    GOOD = "good"
    REVOKED = "revoked"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class StatusAnswer:
    status: CertStatus
    hash_match: bool | None = None

    def __iter__(self):
        return iter((self.status, self.hash_match))


@dataclass
class KnownCertificate:
    hash_sha1: bytes
    hash_sha256: bytes
    activated: bool = False
    activated_at: datetime | None = None


@dataclass
class StatusStore:
    known: dict[Key, KnownCertificate] = field(default_factory=dict)
    revoked: dict[Key, datetime] = field(default_factory=dict)

    def register(self, info: CertificateInfo) -> None:
        self.known[(info.issuer, info.serial)] = KnownCertificate(info.hash_sha1, info.hash_sha256)

    def activate(self, key: Key, when: datetime) -> None:
        cert = self.known[key]
        cert.activated, cert.activated_at = True, when

    def revoke(self, key: Key, when: datetime) -> None:
        # The earliest date wins; nothing is ever un-revoked.
        if key not in self.revoked or when < self.revoked[key]:
            self.revoked[key] = when

    def query(self, issuer, serial: int, presented_hash: HashValue | None = None) -> StatusAnswer:
        key = (as_dn(issuer), int(serial))
        cert = self.known.get(key)
        if cert is None or not cert.activated:
            return StatusAnswer(CertStatus.UNKNOWN, None)
        match = None
        if presented_hash is not None:
            stored = cert.hash_sha1 if presented_hash.algorithm is HashAlgorithm.SHA1 else cert.hash_sha256
            match = stored == presented_hash.digest
        status = CertStatus.REVOKED if key in self.revoked else CertStatus.GOOD
        return StatusAnswer(status, match)


SlotKey = tuple[DistinguishedName, DistinguishedName | None, bool]


@dataclass
class CrlSlot:
    scope_key: SlotKey
    current: CrlInfo
    history: list[CrlInfo] = field(default_factory=list)
    accepted: list[datetime] = field(default_factory=list)  # this_update of every accepted CRL, in order
    written: datetime | None = None  # this_update of the newest CRL actually in the DIT

    def accept(self, info: CrlInfo) -> None:
        self.history.append(self.current)
        self.current = info
        self.accepted.append(info.this_update.instant)


@dataclass
class DeleteTicket:
    ticket_id: str
    principal: str
    target_dn: DistinguishedName
    fetched_certificate: bytes
    summary: str
    issued_at: datetime
    confirmed: bool = False
    delete_sequence: int | None = None


@dataclass
class OutOfBandItem:
    item_id: int
    operation: dict
    description: str
    error: str
    principal: str
    target_dn: str
    enqueued_at: datetime
    attempts: int = 0


@dataclass(frozen=True)
class ActivationResult:
    record: PublicationRecord
    published: bool
    queued: OutOfBandItem | None = None


@dataclass(frozen=True)
class CrlPublication:
    info: CrlInfo
    kind: CrlKind
    written: bool
    queued: OutOfBandItem | None = None


@dataclass(frozen=True)
class RetryResult:
    item: OutOfBandItem
    outcome: str  # ok | superseded | obsolete | failed
    detail: str = ""


@dataclass
class CheckResult:
    name: str
    passed: bool = True
    problems: list[str] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def fail(self, problem: str) -> None:
        self.passed = False
        self.problems.append(problem)


@dataclass
class ComplianceReport:
    checks: dict[str, CheckResult]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks.values())

    def __getitem__(self, name: str) -> CheckResult:
        return self.checks[name]

    def lines(self) -> list[str]:
        out = []
        for key, check in self.checks.items():
            out.append(f"({key}) {check.name}: {'pass' if check.passed else 'FAIL'}")
            out.extend(f"    problem: {p}" for p in check.problems)
            out.extend(f"    note: {n}" for n in check.notes)
        return out


Notifier = Callable[[OutOfBandItem], None]
SignatureVerifier = Callable[[bytes, str], bool]


def structural_only(der: bytes, kind: str) -> bool:
    """Default verifier: accepts anything that parsed; signatures are not checked."""
    return True


# -- the engine ------------------------------------------------------------------

class PublicationEngine:
    def __init__(
        self,
        directory: Directory,
        *,
        clock: Clock | None = None,
        audit: AuditLog | None = None,
        notifier: Notifier | None = None,
        verifier: SignatureVerifier | None = None,
        owner_base=None,
        accredited: bool = False,
        mirror_to_owner: bool = False,
    ):
        self.directory = directory
        self.clock = clock or directory.clock
        self.audit = audit or AuditLog(clock=self.clock)
        self.notifier = notifier
        self.verifier = verifier or structural_only
        global _warned
        if verifier is None and not _warned:
            _warned = True
            log.warning("signature verification disabled; certificates and CRLs are checked structurally only")
        self.owner_base = as_dn(owner_base) if owner_base is not None else None
        self.accredited = accredited
        self.mirror_to_owner = mirror_to_owner
        self.records: dict[Key, PublicationRecord] = {}
        self.status = StatusStore()
        self.slots: dict[SlotKey, CrlSlot] = {}
        self.queue: deque[OutOfBandItem] = deque()
        self.tickets: dict[str, DeleteTicket] = {}
        self.failures_handled = 0
        self._next_item = 1
        self._next_ticket = 1

    # -- registration and activation --

    def owner_for(self, info: CertificateInfo) -> DistinguishedName:
        if self.owner_base is None:
            return info.subject
        return DistinguishedName(info.subject.rdns + self.owner_base.rdns)

    def register_certificate(
        self,
        info: CertificateInfo | bytes,
        consent_to_publish: bool = False,
        accredited: bool | None = None,
        owner_dn=None,
    ) -> PublicationRecord:
        """Record a certificate; nothing becomes visible until :meth:`activate`."""
        if isinstance(info, (bytes, bytearray)):
            info = parse_certificate(bytes(info))
        key = (info.issuer, info.serial)
        if key in self.records:
            raise DuplicateRegistration(f"serial {info.serial} of {info.issuer} is already registered")
        self._verify(info.raw_der, "certificate", CERT_PUBLISHER, key)
        accredited = self.accredited if accredited is None else accredited
        now = self.clock()
        record = PublicationRecord(
            cert=info,
            consent_to_publish=consent_to_publish,
            accredited=accredited,
            registered_at=now,
            retention_deadline=retention_deadline(info.not_after.instant, accredited),
            owner_dn=as_dn(owner_dn) if owner_dn is not None else self.owner_for(info),
        )
        self.records[key] = record
        self.status.register(info)
        self.audit.write(
            CERT_PUBLISHER, "register", _scope(key), "ok",
            f"consent={'yes' if consent_to_publish else 'no'} retention_until={_iso(record.retention_deadline)}",
        )
        return record

    def record(self, issuer, serial: int) -> PublicationRecord:
        try:
            return self.records[(as_dn(issuer), int(serial))]
        except KeyError:
            raise NoSuchRecord(f"no registration for serial {serial} of {issuer}") from None

    def activate(self, issuer, serial: int) -> ActivationResult:
        """Make the certificate known to the status store and, with consent, publish it."""
        record = self.record(issuer, serial)
        if record.state is not RecordState.REGISTERED:
            raise AlreadyActivated(f"serial {serial} of {issuer} is {record.state.value}")
        now = self.clock()
        self.status.activate(record.key, now)
        record.state, record.activated_at = RecordState.ACTIVATED, now
        self.audit.write(CERT_PUBLISHER, "activate", _scope(record.key), "ok")
        if not record.consent_to_publish:
            return ActivationResult(record, published=False)
        operation = {"kind": "publish_certificate", "issuer": str(record.cert.issuer), "serial": record.cert.serial}
        try:
            self._publish_certificate(record)
        except DirectoryError as exc:
            return ActivationResult(record, published=False, queued=self.handle_failure(operation, exc))
        return ActivationResult(record, published=True)

    def _publish_certificate(self, record: PublicationRecord) -> str:
        entry = plan_cert_subentry(record.owner_dn, record.cert)
        outcome = "ok"
        try:
            self.directory.add_entry(CERT_PUBLISHER, entry)
        except AlreadyExists:
            # A retry after a write that did land, or a foreign entry in the way.
            found = self.directory.search(entry.dn, Scope.BASE, principal=CERT_PUBLISHER)
            if not found or record.cert.raw_der not in found[0].get("userCertificate", []):
                raise
            outcome = "already"
        if self.mirror_to_owner:
            owner = self.directory.search(record.owner_dn, Scope.BASE, principal=CERT_PUBLISHER)
            if owner and record.cert.raw_der not in owner[0].get("userCertificate", []):
                self.directory.modify_entry(
                    CERT_PUBLISHER, record.owner_dn, [(ModOp.ADD_VALUES, "userCertificate", [record.cert.raw_der])]
                )
        record.directory_dn = entry.dn
        self.audit.write(CERT_PUBLISHER, "publish-certificate", entry.dn, outcome)
        return outcome

    # -- status --

    def query_status(self, issuer, serial: int, presented_hash: HashValue | None = None) -> StatusAnswer:
        return self.status.query(issuer, serial, presented_hash)

    # -- CRLs --

    def publish_crl(self, der: bytes, dp_dn) -> CrlPublication:
        """Write a CRL to the distribution point entry right away.

        Complete CRLs replace ``certificateRevocationList``, deltas replace
        ``deltaRevocationList`` once their base is on the entry.  Anything not
        strictly newer than the current CRL of the same scope is refused.
        """
        dp = as_dn(dp_dn)
        try:
            info = parse_crl(der)
        except MalformedCrl as exc:
            self.audit.write(CRL_PUBLISHER, "publish-crl", dp, "malformed", str(exc))
            raise
        self._verify(info.raw_der, "crl", CRL_PUBLISHER, dp)
        key: SlotKey = (info.issuer, dp, info.is_delta)
        slot = self.slots.get(key)
        if slot is not None and info.this_update.instant <= slot.current.this_update.instant:
            self.audit.write(
                CRL_PUBLISHER, "publish-crl", dp, "stale",
                f"thisUpdate {info.this_update} not after {slot.current.this_update}",
            )
            raise StaleCrl(f"CRL of {info.issuer} dated {info.this_update} is not newer than {slot.current.this_update}")

        operation = {"kind": "publish_crl", "dp": str(dp), "der": base64.b64encode(info.raw_der).decode("ascii")}
        queued = None
        written = False
        try:
            outcome = self._write_crl(info, dp)
        except MissingBaseCrl as exc:
            self.audit.write(CRL_PUBLISHER, "publish-crl", dp, "missing_base", str(exc))
            raise
        except DirectoryError as exc:
            queued = self.handle_failure(operation, exc)
        else:
            if outcome == "superseded":
                raise StaleCrl(f"{dp} already holds a CRL of {info.issuer} newer than {info.this_update}")
            written = True

        if slot is None:
            slot = self.slots[key] = CrlSlot(key, info, accepted=[info.this_update.instant])
        else:
            slot.accept(info)
        if written:
            slot.written = info.this_update.instant
        for entry in info.revoked:
            self.status.revoke((info.issuer_of(entry), entry.serial), entry.revocation_date.instant)
        return CrlPublication(info, classify_crl(info), written, queued)

    def _write_crl(self, info: CrlInfo, dp: DistinguishedName) -> str:
        found = self.directory.search(dp, Scope.BASE, principal=CRL_PUBLISHER)
        if not found:
            raise NoSuchEntry(f"distribution point {dp} is not readable")
        entry = found[0]
        attr = "deltaRevocationList" if info.is_delta else "certificateRevocationList"
        current = _same_issuer(entry.get(attr, []), info.issuer)
        if any(c.raw_der == info.raw_der for c in current):
            return "already"
        if any(c.this_update.instant >= info.this_update.instant for c in current if c.is_delta == info.is_delta):
            self.audit.write(CRL_PUBLISHER, "publish-crl", dp, "superseded", f"{attr} already holds a newer CRL")
            return "superseded"

        others = [v for v in entry.get(attr, []) if _issuer(v) != info.issuer]
        if info.is_delta:
            bases = _same_issuer(entry.get("certificateRevocationList", []), info.issuer)
            if not any(not b.is_delta and b.crl_number == info.delta_base_number for b in bases):
                raise MissingBaseCrl(f"base CRL number {info.delta_base_number} of {info.issuer} is not on {dp}")
            values = [info.raw_der] + others
        else:
            # Keep any older base the current delta still points at.
            needed = {d.delta_base_number for d in _same_issuer(entry.get("deltaRevocationList", []), info.issuer)}
            keep = [c.raw_der for c in current if c.crl_number in needed and c.crl_number != info.crl_number]
            values = [info.raw_der] + keep + others
        op = ModOp.REPLACE_VALUES if attr in entry else ModOp.ADD_VALUES
        self.directory.modify_entry(CRL_PUBLISHER, dp, [(op, attr, values)])
        self.audit.write(CRL_PUBLISHER, "publish-crl", dp, "ok", f"{classify_crl(info).value} thisUpdate {info.this_update}")
        return "ok"

    # -- monitored delete --

    def request_delete(self, principal: str, target_dn) -> DeleteTicket:
        """Fetch the certificate about to be deleted so it can be shown first."""
        dn = as_dn(target_dn)
        found = self.directory.search(dn, Scope.BASE, principal=principal)
        if not found:
            raise NoSuchEntry(f"{dn} is not visible to {principal}")
        cert = _certificate_value(found[0])
        if cert is None:
            raise NotACertificateEntry(f"{dn} holds no certificate")
        try:
            summary = parse_certificate(cert).summary()
        except MalformedCertificate as exc:
            summary = f"unparseable certificate ({exc})"
        ticket = DeleteTicket(f"T{self._next_ticket:04d}", principal, dn, cert, summary, self.clock())
        self._next_ticket += 1
        self.tickets[ticket.ticket_id] = ticket
        self.audit.write(principal, "delete-request", dn, "ok", f"ticket {ticket.ticket_id}")
        return ticket

    def confirm_delete(self, ticket: DeleteTicket | str, acknowledged: bool) -> PublicationRecord | None:
        if isinstance(ticket, str):
            ticket = self.tickets[ticket]
        if ticket.confirmed:
            raise TicketAlreadyUsed(f"ticket {ticket.ticket_id} was already used")
        if not acknowledged:
            self.audit.write(ticket.principal, "delete-confirm", ticket.target_dn, "not_acknowledged", ticket.ticket_id)
            raise NotAcknowledged(f"delete of {ticket.target_dn} was not acknowledged")
        found = self.directory.search(ticket.target_dn, Scope.BASE, principal=ticket.principal)
        if not found:
            raise NoSuchEntry(f"{ticket.target_dn} is not visible to {ticket.principal}")
        if _certificate_value(found[0]) != ticket.fetched_certificate:
            self.audit.write(ticket.principal, "delete-confirm", ticket.target_dn, "changed", ticket.ticket_id)
            raise EntryChangedSinceFetch(f"{ticket.target_dn} changed after ticket {ticket.ticket_id} was issued")

        record = next((r for r in self.records.values() if r.cert.raw_der == ticket.fetched_certificate), None)
        if record is not None:
            deadline = record.retention_deadline
        else:
            # Unknown provenance: assume the longest period.
            deadline = retention_deadline(parse_certificate(ticket.fetched_certificate).not_after.instant, True)
        now = self.clock()
        if now < deadline:
            self.audit.write(
                ticket.principal, "delete-confirm", ticket.target_dn, "retention", f"kept until {_iso(deadline)}"
            )
            raise RetentionNotExpired(f"{ticket.target_dn} must be kept until {_iso(deadline)}")

        self.directory.delete_entry(ticket.principal, ticket.target_dn)
        ticket.confirmed = True
        ticket.delete_sequence = self.directory.operation_log()[-1].sequence_number
        if record is not None:
            record.state, record.deleted_at, record.directory_dn = RecordState.DELETED, now, None
        self.audit.write(ticket.principal, "delete-confirm", ticket.target_dn, "ok", ticket.ticket_id)
        return record

    # -- failures --

    def handle_failure(self, operation: Mapping, error: Exception | str) -> OutOfBandItem:
        """Queue a failed step and tell the administrator exactly what failed."""
        operation = dict(operation)
        principal, target, description = self._describe(operation)
        item = OutOfBandItem(
            item_id=self._next_item,
            operation=operation,
            description=description,
            error=str(error),
            principal=principal,
            target_dn=target,
            enqueued_at=self.clock(),
        )
        self._next_item += 1
        self.queue.append(item)
        self.failures_handled += 1
        self.audit.write(principal, "failure", target, "queued", f"item {item.item_id}: {description}: {item.error}")
        if self.notifier is not None:
            self.notifier(item)
        return item

    def _describe(self, operation: Mapping) -> tuple[str, str, str]:
        kind = operation.get("kind")
        if kind == "publish_certificate":
            record = self.record(operation["issuer"], operation["serial"])
            target = str(record.subentry_dn)
            return CERT_PUBLISHER, target, f"add certificate subentry {target}"
        if kind == "publish_crl":
            return CRL_PUBLISHER, operation["dp"], f"write CRL to {operation['dp']}"
        return operation.get("principal", "engine"), operation.get("target", "-"), str(operation.get("description", kind))

    def retry_out_of_band(self) -> list[RetryResult]:
        """Replay every queued step once; failures go back with ``attempts + 1``."""
        results, remaining = [], deque()
        while self.queue:
            item = self.queue.popleft()
            try:
                outcome = self._replay(item.operation)
            except (DirectoryError, LifecycleError) as exc:
                item.attempts += 1
                item.error = str(exc)
                remaining.append(item)
                results.append(RetryResult(item, "failed", str(exc)))
                self.audit.write(item.principal, "retry", item.target_dn, "failed", f"item {item.item_id}: {exc}")
                continue
            results.append(RetryResult(item, outcome))
            self.audit.write(item.principal, "retry", item.target_dn, outcome, f"item {item.item_id}")
        self.queue = remaining
        return results

    def _replay(self, operation: Mapping) -> str:
        kind = operation.get("kind")
        if kind == "publish_certificate":
            record = self.record(operation["issuer"], operation["serial"])
            if record.state is not RecordState.ACTIVATED:
                return "obsolete"
            self._publish_certificate(record)
            return "ok"
        if kind == "publish_crl":
            info = parse_crl(base64.b64decode(operation["der"]))
            outcome = self._write_crl(info, as_dn(operation["dp"]))
            if outcome in ("ok", "already"):
                slot = self.slots.get((info.issuer, as_dn(operation["dp"]), info.is_delta))
                if slot is not None and (slot.written is None or slot.written < info.this_update.instant):
                    slot.written = info.this_update.instant
                return "ok"
            return outcome
        raise LifecycleError(f"cannot replay operation {kind!r}")

    # -- audit --

    def audit_compliance(self) -> ComplianceReport:
        return audit_compliance(
            self.directory, self.records.values(), queue=self.queue, tickets=self.tickets.values(), slots=self.slots.values()
        )

    def _verify(self, der: bytes, kind: str, principal: str, target) -> None:
        if not self.verifier(der, kind):
            self.audit.write(principal, f"verify-{kind}", _scope(target), "rejected")
            raise SignatureRejected(f"{kind} signature rejected")

    # -- persistence --

    def to_state(self) -> dict:
        """JSON-ready engine state (records, CRL slots, queue, tickets)."""
        return {
            "records": [
                {
                    "der": _b64(r.cert.raw_der),
                    "consent": r.consent_to_publish,
                    "accredited": r.accredited,
                    "state": r.state.value,
                    "registered_at": _iso(r.registered_at),
                    "activated_at": _iso(r.activated_at),
                    "deleted_at": _iso(r.deleted_at),
                    "owner_dn": str(r.owner_dn),
                    "directory_dn": str(r.directory_dn) if r.directory_dn is not None else None,
                }
                for r in self.records.values()
            ],
            "revoked": [[str(i), s, _iso(d)] for (i, s), d in self.status.revoked.items()],
            "slots": [
                {
                    "dp": str(s.scope_key[1]) if s.scope_key[1] is not None else None,
                    "current": _b64(s.current.raw_der),
                    "history": [_b64(h.raw_der) for h in s.history],
                    "accepted": [_iso(t) for t in s.accepted],
                    "written": _iso(s.written),
                }
                for s in self.slots.values()
            ],
            "queue": [
                {
                    "id": q.item_id,
                    "operation": q.operation,
                    "description": q.description,
                    "error": q.error,
                    "principal": q.principal,
                    "target": q.target_dn,
                    "enqueued_at": _iso(q.enqueued_at),
                    "attempts": q.attempts,
                }
                for q in self.queue
            ],
            "tickets": [
                {
                    "id": t.ticket_id,
                    "principal": t.principal,
                    "dn": str(t.target_dn),
                    "certificate": _b64(t.fetched_certificate),
                    "summary": t.summary,
                    "issued_at": _iso(t.issued_at),
                    "confirmed": t.confirmed,
                    "delete_sequence": t.delete_sequence,
                }
                for t in self.tickets.values()
            ],
            "counters": {"items": self._next_item, "tickets": self._next_ticket, "failures": self.failures_handled},
        }

    def load_state(self, state: Mapping) -> None:
        for data in state.get("records", []):
            info = parse_certificate(base64.b64decode(data["der"]))
            record = PublicationRecord(
                cert=info,
                consent_to_publish=data["consent"],
                accredited=data["accredited"],
                registered_at=_parse_iso(data["registered_at"]),
                retention_deadline=retention_deadline(info.not_after.instant, data["accredited"]),
                owner_dn=as_dn(data["owner_dn"]),
                state=RecordState(data["state"]),
                activated_at=_parse_iso(data["activated_at"]),
                deleted_at=_parse_iso(data["deleted_at"]),
                directory_dn=as_dn(data["directory_dn"]) if data["directory_dn"] else None,
            )
            self.records[record.key] = record
            self.status.register(info)
            if record.activated_at is not None:
                self.status.activate(record.key, record.activated_at)
        for issuer, serial, when in state.get("revoked", []):
            self.status.revoke((as_dn(issuer), serial), _parse_iso(when))
        for data in state.get("slots", []):
            current = parse_crl(base64.b64decode(data["current"]))
            dp = as_dn(data["dp"]) if data["dp"] is not None else None
            key = (current.issuer, dp, current.is_delta)
            self.slots[key] = CrlSlot(
                key,
                current,
                history=[parse_crl(base64.b64decode(h)) for h in data["history"]],
                accepted=[_parse_iso(t) for t in data["accepted"]],
                written=_parse_iso(data["written"]),
            )
        for data in state.get("queue", []):
            self.queue.append(
                OutOfBandItem(
                    data["id"], data["operation"], data["description"], data["error"], data["principal"],
                    data["target"], _parse_iso(data["enqueued_at"]), data["attempts"],
                )
            )
        for data in state.get("tickets", []):
            ticket = DeleteTicket(
                data["id"], data["principal"], as_dn(data["dn"]), base64.b64decode(data["certificate"]),
                data["summary"], _parse_iso(data["issued_at"]), data["confirmed"], data["delete_sequence"],
            )
            self.tickets[ticket.ticket_id] = ticket
        counters = state.get("counters", {})
        self._next_item = counters.get("items", self._next_item)
        self._next_ticket = counters.get("tickets", self._next_ticket)
        self.failures_handled = counters.get("failures", self.failures_handled)


# -- compliance audit ------------------------------------------------------------

def audit_compliance(
    directory: Directory,
    records: Iterable[PublicationRecord],
    *,
    queue: Iterable[OutOfBandItem] = (),
    tickets: Iterable[DeleteTicket] = (),
    slots: Iterable[CrlSlot] = (),
) -> ComplianceReport:
    """Check the directory and its history against the publication rules.

    (a) certificates were only removed through confirmed delete tickets;
    (b) every delta CRL in the tree sits next to its base;
    (c) every activated certificate with consent is published or queued;
    (d) no CRL in the tree was replaced by an older one.
    """
    add_only = CheckResult("add-only")
    allowed = {t.delete_sequence for t in tickets if t.confirmed and t.delete_sequence is not None}
    cert_keys = {attr_key(a) for a in CERT_ATTRIBUTES}
    for rec in directory.operation_log():
        if rec.outcome != "ok":
            continue
        if rec.kind is OpKind.DELETE and rec.sequence_number not in allowed:
            add_only.fail(f"#{rec.sequence_number} {rec.principal} deleted {rec.target_dn} without a ticket")
        if rec.kind is OpKind.MODIFY and _removes_certificate(rec, cert_keys):
            add_only.fail(f"#{rec.sequence_number} {rec.principal} rewrote certificates on {rec.target_dn}")

    entries = directory.entries()
    base_check = CheckResult("delta CRLs have their base")
    for entry in entries:
        for value in entry.get("deltaRevocationList", []):
            try:
                delta = parse_crl(value)
            except MalformedCrl:
                base_check.fail(f"{entry.dn}: unparseable deltaRevocationList value")
                continue
            bases = _same_issuer(entry.get("certificateRevocationList", []), delta.issuer)
            if not any(b.crl_number == delta.delta_base_number and not b.is_delta for b in bases):
                base_check.fail(f"{entry.dn}: delta {delta.crl_number} lacks base {delta.delta_base_number}")

    published = CheckResult("consented certificates published")
    present = {e.dn for e in entries}
    pending = {
        (as_dn(q.operation["issuer"]), int(q.operation["serial"])): q
        for q in queue
        if q.operation.get("kind") == "publish_certificate"
    }
    for record in records:
        if record.state is not RecordState.ACTIVATED or not record.consent_to_publish:
            continue
        if record.subentry_dn in present:
            continue
        item = pending.get(record.key)
        if item is not None:
            published.notes.append(f"pending: {record.subentry_dn} (queue item {item.item_id}, {item.attempts} retries)")
        else:
            published.fail(f"{record.subentry_dn} missing and not queued")

    monotonic = CheckResult("CRLs never replaced by older ones")
    for slot in slots:
        issuer, dp, is_delta = slot.scope_key
        if any(b < a for a, b in zip(slot.accepted, slot.accepted[1:])):
            monotonic.fail(f"{dp}: accepted CRLs of {issuer} went back in time")
        if slot.written is None or dp is None:
            continue
        entry = next((e for e in entries if e.dn == dp), None)
        attr = "deltaRevocationList" if is_delta else "certificateRevocationList"
        values = _same_issuer(entry.get(attr, []) if entry else [], issuer)
        newest = max((v.this_update.instant for v in values if v.is_delta == is_delta), default=None)
        if newest is None or newest < slot.written:
            monotonic.fail(f"{dp}: {attr} of {issuer} is older than the last published one ({_iso(slot.written)})")

    return ComplianceReport({"a": add_only, "b": base_check, "c": published, "d": monotonic})


def _removes_certificate(rec: OperationRecord, cert_keys: set[str]) -> bool:
    return any(op != ModOp.ADD_VALUES.value and attr_key(attr) in cert_keys for op, attr in rec.changes)


# -- helpers ---------------------------------------------------------------------

def _certificate_value(entry: Entry) -> bytes | None:
    for attr in CERT_ATTRIBUTES:
        values = entry.get(attr, [])
        if values:
            return values[0]
    return None


def _issuer(value: bytes) -> DistinguishedName | None:
    try:
        return parse_crl(value).issuer
    except MalformedCrl:
        return None


def _same_issuer(values: Iterable[bytes], issuer: DistinguishedName) -> list[CrlInfo]:
    out = []
    for value in values:
        try:
            info = parse_crl(value)
        except MalformedCrl:
            continue
        if info.issuer == issuer:
            out.append(info)
    return out


def _scope(target) -> str:
    if isinstance(target, tuple):
        issuer, serial = target
        return f"{issuer}#{serial}"
    return str(target)


def _iso(value: datetime | None) -> str | None:
    if value is None:
        return None
    return value.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _parse_iso(text: str | None) -> datetime | None:
    if text is None:
        return None
    return datetime.fromisoformat(text.replace("Z", "+00:00"))


def _b64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


__all__ = [
    "ACCREDITED_RETENTION_YEARS",
    "ADMIN",
    "CERT_PUBLISHER",
    "CRL_PUBLISHER",
    "REGISTRAR",
    "STANDARD_RETENTION_YEARS",
    "ActivationResult",
    "AuditLog",
    "CertStatus",
    "CheckResult",
    "ComplianceReport",
    "CrlPublication",
    "CrlSlot",
    "DeleteTicket",
    "OutOfBandItem",
    "PublicationEngine",
    "PublicationRecord",
    "RecordState",
    "RetryResult",
    "StatusAnswer",
    "StatusStore",
    "audit_compliance",
    "default_acl",
    "retention_deadline",
    "structural_only",
]
