"""Administrator command line.

Every invocation loads the directory snapshot (LDIF) and the engine state
next to it, runs one command, and writes both back atomically if anything
changed.  Exit codes: 0 success, 1 domain error, 2 usage error.
"""

from __future__ import annotations

import argparse
import fcntl
import json
import os
import sys
import tempfile
from contextlib import contextmanager
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterator, TextIO

from .directory import AclRule, Directory, OperationRecord, Permission, Scope, system_clock
from .dn import DistinguishedName, as_dn
from .errors import ConfigError, DirplanError, NotAcknowledged
from .ldif import export_ldif, import_ldif
from .lifecycle import ADMIN, REGISTRAR, AuditLog, PublicationEngine, default_acl
from .plan import (
    UserPlanMode,
    make_crl_dp_url,
    plan_container,
    plan_crl_point_entry,
    plan_root,
    plan_user_entry,
)
from .x509meta import HashValue

CONFIG_ENV = "DIRPLAN_CONFIG"
EXIT_OK, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2


# -- configuration ---------------------------------------------------------------

@dataclass
class Config:
    root_domain: str
    organization: str
    accredited: bool = False
    ldap_host: str = "localhost"
    ldap_port: int = 389
    acl: list[AclRule] = field(default_factory=list)
    user_plan_mode: UserPlanMode = UserPlanMode.PKI_ONLY
    snapshot_path: Path = Path("dirplan.ldif")
    audit_log_path: Path = Path("dirplan-audit.log")
    users_base: DistinguishedName | None = None
    ca_base: DistinguishedName | None = None
    owner_base: DistinguishedName | None = None
    containers: list[DistinguishedName] = field(default_factory=list)
    cas: list[DistinguishedName] = field(default_factory=list)
    crl_points: list[DistinguishedName] = field(default_factory=list)

    @property
    def root_dn(self) -> DistinguishedName:
        return plan_root(self.root_domain, self.organization)[-1].dn

    @property
    def suffix_dn(self) -> DistinguishedName:
        return plan_root(self.root_domain, self.organization)[0].dn

    @property
    def state_path(self) -> Path:
        return self.snapshot_path.with_name(self.snapshot_path.name + ".state.json")

    @property
    def lock_path(self) -> Path:
        return self.snapshot_path.with_name(self.snapshot_path.name + ".lock")

    def effective_acl(self) -> list[AclRule]:
        if self.acl:
            return self.acl
        root = self.root_dn
        return default_acl(self.users_base or root, self.ca_base or root, self.suffix_dn)


_BOOL = {"true": True, "yes": True, "1": True, "on": True, "false": False, "no": False, "0": False, "off": False}
_REPEATED = {"container": "containers", "ca": "cas", "crl_point": "crl_points"}
_DN_KEYS = {"users_base", "ca_base", "owner_base"}


def parse_config(text: str, base_dir: Path = Path(".")) -> Config:
    """Read ``key = value`` lines plus an optional ``[acl]`` section.

    ACL rows are ``principal, permission, attributes, subtree`` where
    attributes are space-separated names or ``any``.  Relative paths are
    resolved against ``base_dir``.
    """
    values: dict[str, object] = {}
    lists: dict[str, list[DistinguishedName]] = {v: [] for v in _REPEATED.values()}
    acl: list[AclRule] = []
    section = ""
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        if line.startswith("["):
            section = line.strip("[]").strip().lower()
            if section != "acl":
                raise ConfigError(f"line {number}: unknown section [{section}]")
            continue
        try:
            if section == "acl":
                acl.append(_acl_row(line))
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ConfigError(f"expected 'key = value', got {line!r}")
            key, value = key.strip().lower(), value.strip()
            if key in _REPEATED:
                lists[_REPEATED[key]].append(as_dn(value))
            elif key in _DN_KEYS:
                values[key] = as_dn(value)
            elif key == "accredited":
                if value.lower() not in _BOOL:
                    raise ConfigError(f"accredited must be true or false, got {value!r}")
                values[key] = _BOOL[value.lower()]
            elif key == "ldap_port":
                values[key] = int(value)
            elif key == "user_plan_mode":
                values[key] = UserPlanMode(value)
            elif key in ("snapshot_path", "audit_log_path"):
                values[key] = base_dir / value
            elif key in ("root_domain", "organization", "ldap_host"):
                values[key] = value
            else:
                raise ConfigError(f"unknown key {key!r}")
        except ConfigError as exc:
            raise ConfigError(f"line {number}: {exc}") from None
        except ValueError as exc:
            raise ConfigError(f"line {number}: {exc}") from None

    for key in ("root_domain", "organization"):
        if key not in values:
            raise ConfigError(f"missing required key {key!r}")
    config = Config(acl=acl, **values, **lists)
    if not 0 < config.ldap_port < 65536:
        raise ConfigError(f"ldap_port {config.ldap_port} out of range")
    for path in (config.snapshot_path, config.audit_log_path):
        parent = path.parent if str(path.parent) else Path(".")
        if not parent.is_dir() or not os.access(parent, os.W_OK):
            raise ConfigError(f"{path} is not writable")
    return config


def _acl_row(line: str) -> AclRule:
    parts = [p.strip() for p in line.split(",", 3)]
    if len(parts) != 4:
        raise ConfigError(f"ACL row needs principal, permission, attributes, subtree: {line!r}")
    principal, permission, attributes, subtree = parts
    scope = "any" if attributes.lower() == "any" else frozenset(attributes.split())
    try:
        return AclRule(principal, Permission(permission), scope, as_dn(subtree))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: str | Path | None) -> Config:
    path = path or os.environ.get(CONFIG_ENV)
    if not path:
        raise ConfigError(f"no config given (use --config or set {CONFIG_ENV})")
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, path.parent)


# -- persistence -----------------------------------------------------------------

def _atomic_write(path: Path, data: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@contextmanager
def _locked(path: Path) -> Iterator[None]:
    with open(path, "a") as fh:
        try:
            fcntl.flock(fh, fcntl.LOCK_EX | fcntl.LOCK_NB)
        except BlockingIOError:
            raise DirplanError(f"{path} is held by another dirplan process") from None
        try:
            yield
        finally:
            fcntl.flock(fh, fcntl.LOCK_UN)


@dataclass
class Session:
    config: Config
    directory: Directory
    engine: PublicationEngine
    audit: AuditLog

    def fingerprint(self) -> tuple:
        return (len(self.directory.operation_log()), json.dumps(self.engine.to_state(), sort_keys=True))


def open_session(config: Config, clock, *, fresh: bool = False) -> Session:
    audit = AuditLog(config.audit_log_path, clock)
    if fresh:
        directory = Directory(suffixes=[config.suffix_dn],
                              acl=config.effective_acl(), clock=clock)
        state: dict = {}
    else:
        if not config.snapshot_path.exists():
            raise DirplanError(f"no snapshot at {config.snapshot_path}; run init first")
        state = json.loads(config.state_path.read_text(encoding="utf-8")) if config.state_path.exists() else {}
        directory = import_ldif(
            config.snapshot_path.read_bytes(),
            suffixes=state.get("suffixes"),
            acl=config.effective_acl(),
            clock=clock,
        )
        directory.restore_log([OperationRecord.from_json(r) for r in state.get("log", [])])
    engine = PublicationEngine(
        directory,
        clock=clock,
        audit=audit,
        owner_base=config.owner_base or config.root_dn,
        accredited=config.accredited,
    )
    engine.load_state(state.get("engine", {}))
    return Session(config, directory, engine, audit)


def save_session(session: Session) -> None:
    config = session.config
    state = {
        "suffixes": [str(s) for s in session.directory.suffixes],
        "engine": session.engine.to_state(),
        "log": [r.to_json() for r in session.directory.operation_log()],
    }
    _atomic_write(config.snapshot_path, export_ldif(session.directory))
    _atomic_write(config.state_path, (json.dumps(state, indent=1, sort_keys=True) + "\n").encode("utf-8"))


# -- commands --------------------------------------------------------------------

def cmd_init(args, config: Config, clock, out: TextIO) -> int:
    if config.snapshot_path.exists() and not args.force:
        raise DirplanError(f"{config.snapshot_path} already exists (use --force to overwrite)")
    session = open_session(config, clock, fresh=True)
    directory = session.directory
    root = plan_root(config.root_domain, config.organization)
    planned = list(root)
    planned += [plan_container(dn) for dn in config.containers]
    planned += [plan_crl_point_entry(dn.rdn.get("cn"), dn.parent, colocate_ca=True) for dn in config.cas]
    planned += [plan_crl_point_entry(dn.rdn.get("cn"), dn.parent) for dn in config.crl_points]
    for entry in planned:
        directory.add_entry(REGISTRAR, entry)
    session.audit.write(REGISTRAR, "init", config.root_dn, "ok", f"{len(planned)} entries")
    save_session(session)
    print(f"initialized {len(planned)} entries below {root[0].dn}", file=out)
    return EXIT_OK


def cmd_add_user(args, session: Session, out: TextIO) -> int:
    mode = UserPlanMode(args.mode) if args.mode else session.config.user_plan_mode
    parent = as_dn(args.parent) if args.parent else (session.config.users_base or session.config.root_dn)
    entry = plan_user_entry(args.cn, args.sn, parent, mode)
    session.directory.add_entry(REGISTRAR, entry)
    session.audit.write(REGISTRAR, "add-user", entry.dn, "ok", mode.value)
    print(f"added {entry.dn}", file=out)
    return EXIT_OK


def cmd_register(args, session: Session, out: TextIO) -> int:
    der = Path(args.cert).read_bytes()
    accredited = None if args.accredited is None else args.accredited == "yes"
    record = session.engine.register_certificate(der, args.consent, accredited, owner_dn=args.owner)
    deadline = record.retention_deadline.strftime("%Y-%m-%dT%H:%M:%SZ")
    print(f"registered serial {record.cert.serial} of {record.cert.issuer}", file=out)
    print(f"retention until {deadline}", file=out)
    return EXIT_OK


def cmd_activate(args, session: Session, out: TextIO) -> int:
    result = session.engine.activate(args.issuer, args.serial)
    if result.published:
        print(f"activated; published {result.record.directory_dn}", file=out)
    elif result.queued is not None:
        print(f"activated; publication queued as item {result.queued.item_id}: {result.queued.error}", file=out)
    else:
        print("activated; not published (no consent)", file=out)
    return EXIT_OK


def cmd_publish_crl(args, session: Session, out: TextIO) -> int:
    result = session.engine.publish_crl(Path(args.crl).read_bytes(), args.dp)
    info = result.info
    number = info.crl_number if info.crl_number is not None else "-"
    if result.queued is not None:
        print(f"accepted {result.kind.value} CRL {number}; write queued as item {result.queued.item_id}", file=out)
    else:
        print(f"published {result.kind.value} CRL {number} thisUpdate {info.this_update}", file=out)
    return EXIT_OK


def cmd_status(args, session: Session, out: TextIO) -> int:
    presented = HashValue(args.alg, bytes.fromhex(args.hash)) if args.hash else None
    answer = session.engine.query_status(args.issuer, args.serial, presented)
    print(answer.status.value, file=out)
    if answer.hash_match is not None:
        print(f"hash {'match' if answer.hash_match else 'mismatch'}", file=out)
    return EXIT_OK


def cmd_search(args, session: Session, out: TextIO) -> int:
    found = session.directory.search(args.base, args.scope, args.filter, principal=args.principal)
    out.write(export_ldif(found).decode("ascii"))
    return EXIT_OK


def cmd_delete(args, session: Session, out: TextIO, stdin: TextIO) -> int:
    engine = session.engine
    ticket = engine.request_delete(args.principal, args.dn)
    print(f"ticket {ticket.ticket_id}: about to delete {ticket.target_dn}", file=out)
    print(ticket.summary, file=out)
    if args.yes_i_confirm:
        answer = "yes"
        print("type 'yes' to confirm: yes (unattended)", file=out)
    else:
        out.write("type 'yes' to confirm: ")
        out.flush()
        answer = stdin.readline().strip()
    try:
        engine.confirm_delete(ticket, answer == "yes")
    except NotAcknowledged:
        print("not confirmed; nothing deleted", file=out)
        return EXIT_DOMAIN
    print(f"deleted {ticket.target_dn}", file=out)
    return EXIT_OK


def cmd_crl_url(args, config: Config, out: TextIO) -> int:
    print(make_crl_dp_url(config.ldap_host, config.ldap_port, args.dp), file=out)
    return EXIT_OK


def cmd_backup(args, session: Session, out: TextIO) -> int:
    data = export_ldif(session.directory)
    _atomic_write(Path(args.out), data)
    session.audit.write(ADMIN, "backup", args.out, "ok", f"{len(session.directory)} entries")
    print(f"wrote {len(session.directory)} entries to {args.out}", file=out)
    return EXIT_OK


def cmd_restore(args, session: Session, out: TextIO) -> int:
    restored = import_ldif(Path(args.input).read_bytes(), suffixes=session.directory.suffixes,
                           acl=session.directory.acl, clock=session.directory.clock)
    restored.restore_log(session.directory.operation_log())
    session.directory = restored
    session.engine.directory = restored
    session.audit.write(ADMIN, "restore", args.input, "ok", f"{len(restored)} entries")
    print(f"restored {len(restored)} entries from {args.input}", file=out)
    return EXIT_OK


def cmd_retry(args, session: Session, out: TextIO) -> int:
    results = session.engine.retry_out_of_band()
    if not results:
        print("queue empty", file=out)
    for r in results:
        print(f"item {r.item.item_id} {r.outcome}: {r.item.description}", file=out)
    print(f"{len(session.engine.queue)} item(s) still queued", file=out)
    return EXIT_OK


def cmd_audit(args, session: Session, out: TextIO) -> int:
    report = session.engine.audit_compliance()
    for line in report.lines():
        print(line, file=out)
    session.audit.write(ADMIN, "audit", session.config.root_dn, "pass" if report.passed else "fail")
    return EXIT_OK if report.passed else EXIT_DOMAIN


# -- argument parsing ------------------------------------------------------------

def _serial(text: str) -> int:
    try:
        return int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a serial number: {text!r}") from None


def _instant(text: str) -> datetime:
    try:
        value = datetime.fromisoformat(text.replace("Z", "+00:00"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an ISO-8601 time: {text!r}") from None
    return value if value.tzinfo else value.replace(tzinfo=timezone.utc)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dirplan", description="PKI directory publication tool")
    parser.add_argument("--config", help=f"config file (default: ${CONFIG_ENV})")
    parser.add_argument("--now", type=_instant, help="fixed current time, ISO-8601 UTC")
    parser.add_argument("--unattended-test-mode", action="store_true", help="allow --yes-i-confirm (CI only)")
    parser.add_argument("--yes-i-confirm", action="store_true", help="answer delete prompts with yes")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("init", help="plan the root tree and write a fresh snapshot")
    p.add_argument("--force", action="store_true", help="overwrite an existing snapshot")

    p = sub.add_parser("add-user", help="add an end-user entry")
    p.add_argument("cn")
    p.add_argument("sn")
    p.add_argument("--parent", help="parent DN (default: users_base)")
    p.add_argument("--mode", choices=[m.value for m in UserPlanMode], help="object-class plan")

    p = sub.add_parser("register", help="register a DER certificate")
    p.add_argument("cert", help="certificate file (DER)")
    p.add_argument("--consent", action="store_true", help="owner consents to directory publication")
    p.add_argument("--owner", help="owner entry DN (default: subject below owner_base)")
    p.add_argument("--accredited", choices=["yes", "no"], help="override the configured retention class")

    p = sub.add_parser("activate", help="activate a registered certificate")
    p.add_argument("issuer")
    p.add_argument("serial", type=_serial)

    p = sub.add_parser("publish-crl", help="publish a DER CRL on a distribution point")
    p.add_argument("crl", help="CRL file (DER)")
    p.add_argument("--dp", required=True, help="distribution point entry DN")

    p = sub.add_parser("status", help="certificate status: good, revoked or unknown")
    p.add_argument("issuer")
    p.add_argument("serial", type=_serial)
    p.add_argument("--hash", help="hex digest of the certificate to compare")
    p.add_argument("--alg", choices=["sha1", "sha256"], default="sha256", help="digest algorithm of --hash")

    p = sub.add_parser("search", help="search the directory, LDIF output")
    p.add_argument("base")
    p.add_argument("scope", choices=[s.value for s in Scope])
    p.add_argument("filter")
    p.add_argument("--as", dest="principal", default="anonymous", help="principal to search as")

    p = sub.add_parser("delete", help="monitored delete of a certificate entry")
    p.add_argument("dn")
    p.add_argument("--as", dest="principal", default=ADMIN, help="principal to delete as")

    p = sub.add_parser("crl-url", help="print the LDAP URL for a distribution point")
    p.add_argument("--dp", required=True, help="distribution point entry DN")

    p = sub.add_parser("backup", help="export the directory as LDIF")
    p.add_argument("out", help="output file")

    p = sub.add_parser("restore", help="replace the directory with an LDIF backup")
    p.add_argument("input", help="LDIF file")

    sub.add_parser("retry-queue", help="replay failed directory writes")
    sub.add_parser("audit", help="run the compliance audit; exit 1 on failure")
    return parser


_SESSION_COMMANDS = {
    "add-user": cmd_add_user,
    "register": cmd_register,
    "activate": cmd_activate,
    "publish-crl": cmd_publish_crl,
    "status": cmd_status,
    "search": cmd_search,
    "backup": cmd_backup,
    "restore": cmd_restore,
    "retry-queue": cmd_retry,
    "audit": cmd_audit,
}


def main(argv: list[str] | None = None, *, stdin: TextIO | None = None, stdout: TextIO | None = None,
         stderr: TextIO | None = None) -> int:
    stdin, out, err = stdin or sys.stdin, stdout or sys.stdout, stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.yes_i_confirm and not args.unattended_test_mode:
        print("dirplan: error: --yes-i-confirm requires --unattended-test-mode", file=err)
        return EXIT_USAGE
    now = args.now
    clock = (lambda: now) if now is not None else system_clock

    try:
        config = load_config(args.config)
    except ConfigError as exc:
        print(f"dirplan: config error: {exc}", file=err)
        return EXIT_USAGE

    try:
        if args.command == "crl-url":
            return cmd_crl_url(args, config, out)
        with _locked(config.lock_path):
            if args.command == "init":
                return cmd_init(args, config, clock, out)
            session = open_session(config, clock)
            before = session.fingerprint()
            try:
                if args.command == "delete":
                    return cmd_delete(args, session, out, stdin)
                return _SESSION_COMMANDS[args.command](args, session, out)
            finally:
                if args.command == "restore" or session.fingerprint() != before:
                    save_session(session)
    except (DirplanError, OSError, ValueError) as exc:
        print(f"dirplan: error: {exc}", file=err)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
