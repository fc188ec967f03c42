from __future__ import annotations

import threading

import pytest
from hypothesis import given, settings, strategies as st

from dirplan.directory import (
    ANONYMOUS,
    AclRule,
    And,
    Directory,
    Equality,
    ModOp,
    OpKind,
    Permission,
    Presence,
    Scope,
    check_acl,
    parse_filter,
)
from dirplan.dn import parse_dn
from dirplan.entry import Entry
from dirplan.errors import (
    AlreadyExists,
    AttributeOrValueExists,
    BadFilter,
    Denied,
    NoSuchAttribute,
    NoSuchEntry,
    NoSuchParent,
    NotLeaf,
    SchemaViolation,
)
from dirplan.fixtures import CA_BASE, DP_DN, USERS_BASE, sample_directory, sample_user_certificate
from dirplan.ldif import export_ldif
from dirplan.lifecycle import ADMIN, CERT_PUBLISHER, CRL_PUBLISHER, REGISTRAR, default_acl
from dirplan.plan import plan_cert_subentry, plan_user_entry
from dirplan.x509meta import parse_certificate

ALICE = "CN=Alice," + USERS_BASE
CRL = b"\x30\x03\x02\x01\x07"


@pytest.fixture
def tree(clock):
    return sample_directory(clock)


def snapshot(directory):
    return [(e.dn, sorted(e.items())) for e in directory.entries()]


def all_valid(directory):
    return all(directory.check_schema(e) == [] for e in directory.entries())


# -- add ------------------------------------------------------------------------

def test_add_user(tree):
    entry = plan_user_entry("Bob", "Bobson", USERS_BASE)
    tree.add_entry(REGISTRAR, entry)
    assert tree.get("cn=bob,o=org,c=de,dc=myorg,dc=de") == entry
    assert tree.get(entry.dn).object_classes == ["person", "pkiUser"]


def test_add_missing_must(tree):
    before = snapshot(tree)
    entry = Entry("CN=Bob," + USERS_BASE, {"objectClass": ["person"], "cn": ["Bob"]})
    with pytest.raises(SchemaViolation) as exc:
        tree.add_entry(REGISTRAR, entry)
    assert [v.attribute for v in exc.value.violations] == ["sn"]
    assert snapshot(tree) == before
    assert tree.operation_log()[-1].outcome == "schema_violation"


def test_add_denied_leaves_state(tree):
    before = snapshot(tree)
    with pytest.raises(Denied):
        tree.add_entry("mallory", plan_user_entry("Bob", "B", USERS_BASE))
    assert snapshot(tree) == before
    assert tree.operation_log()[-1].outcome == "denied"


def test_add_duplicate_and_orphan(tree):
    with pytest.raises(AlreadyExists):
        tree.add_entry(REGISTRAR, plan_user_entry("ALICE", "x", USERS_BASE))
    with pytest.raises(NoSuchParent):
        tree.add_entry(REGISTRAR, plan_user_entry("Bob", "B", "O=Nowhere,C=DE,DC=MyOrg,DC=DE"))


# -- modify ---------------------------------------------------------------------

def test_crl_publisher_replaces_crl(tree):
    tree.modify_entry(CRL_PUBLISHER, DP_DN, [(ModOp.ADD_VALUES, "certificateRevocationList", [CRL])])
    newer = b"\x30\x03\x02\x01\x08"
    tree.modify_entry(CRL_PUBLISHER, DP_DN, [(ModOp.REPLACE_VALUES, "certificateRevocationList;binary", [newer])])
    assert tree.get(DP_DN)["certificateRevocationList"] == [newer]
    assert tree.operation_log()[-1].changes == (("replace_values", "certificateRevocationList;binary"),)


def test_cert_publisher_may_not_touch_crls(tree):
    with pytest.raises(Denied):
        tree.modify_entry(CERT_PUBLISHER, DP_DN, [("replace_values", "certificateRevocationList", [CRL])])


def test_remove_last_object_class(tree):
    tree.acl.append(AclRule(ADMIN, "modify_attr", "any", USERS_BASE))
    with pytest.raises(SchemaViolation):
        tree.modify_entry(ADMIN, ALICE, [("delete_values", "objectClass", [])])
    assert tree.get(ALICE).object_classes == ["person", "pkiUser"]


def test_modify_all_or_nothing(clock):
    d = Directory(["C=DE"], [AclRule("w", "add_entry", "any", "C=DE"), AclRule("w", "modify_attr", "any", "C=DE")], clock=clock)
    d.add_entry("w", Entry("C=DE", {"objectClass": ["country"], "c": ["DE"]}))
    before = snapshot(d)
    with pytest.raises(NoSuchAttribute):
        d.modify_entry("w", "C=DE", [("add_values", "description", ["one"]), ("delete_values", "seeAlso", ["x"])])
    assert snapshot(d) == before
    with pytest.raises(AttributeOrValueExists):
        d.modify_entry("w", "C=DE", [("add_values", "description", ["a", "A "])])
    with pytest.raises(NoSuchEntry):
        d.modify_entry("w", "O=Gone,C=DE", [("add_values", "description", ["a"])])


def test_delete_values_case_insensitive(clock):
    d = Directory(["C=DE"], [AclRule("w", "add_entry", "any", "C=DE"), AclRule("w", "modify_attr", "any", "C=DE")], clock=clock)
    d.add_entry("w", Entry("C=DE", {"objectClass": ["country"], "c": ["DE"], "description": ["Hello", "x"]}))
    d.modify_entry("w", "C=DE", [("delete_values", "description", ["  HELLO "])])
    assert d.get("C=DE")["description"] == ["x"]


# -- delete ---------------------------------------------------------------------

def test_delete(tree):
    bob = plan_user_entry("Bob", "B", USERS_BASE)
    tree.add_entry(REGISTRAR, bob)
    with pytest.raises(Denied):
        tree.delete_entry(CRL_PUBLISHER, bob.dn)
    tree.delete_entry(ADMIN, bob.dn)
    assert bob.dn not in tree
    with pytest.raises(NotLeaf):
        tree.delete_entry(ADMIN, USERS_BASE)
    with pytest.raises(NoSuchEntry):
        tree.delete_entry(ADMIN, bob.dn)


# -- search ---------------------------------------------------------------------

def test_base_search(tree):
    (hit,) = tree.search(ALICE, Scope.BASE, "(objectClass=*)")
    assert hit.dn == parse_dn(ALICE)


def test_distribution_point_search(tree):
    hits = tree.search(CA_BASE, "sub", "(objectClass=cRLDistributionPoint)")
    assert [str(e.dn) for e in hits] == [DP_DN]


def test_subentry_search_matches_brute_force(tree):
    for serial in (41, 42, 43):
        info = parse_certificate(sample_user_certificate(serial))
        tree.load([plan_cert_subentry(ALICE, info)])
    hits = tree.search(ALICE, "sub", "(x509serialNumber=42)")
    brute = [e for e in tree.entries() if e.dn.is_within(parse_dn(ALICE)) and e.get("x509serialNumber") == ["42"]]
    assert hits == brute and len(hits) == 1
    assert hits[0]["userCertificate"] == [sample_user_certificate(42)]


def test_search_scopes_and_order(tree):
    sub = tree.search("DC=DE", "sub", "(objectClass=*)")
    assert [e.dn.sort_key for e in sub] == sorted(e.dn.sort_key for e in sub)
    assert len(sub) == len(tree)
    one = tree.search("DC=DE", "one", "(objectClass=*)")
    assert [str(e.dn) for e in one] == ["DC=MyOrg,DC=DE"]


def test_search_filters(tree):
    assert [str(e.dn) for e in tree.search("DC=DE", "sub", "(&(objectClass=person)(sn=ALICESON))")] == [ALICE]
    assert tree.search("DC=DE", "sub", "(&(objectClass=person)(sn=nobody))") == []
    assert len(tree.search("DC=DE", "sub", "(cACertificate=*)")) == 1


def test_search_errors(tree):
    with pytest.raises(NoSuchEntry):
        tree.search("C=FR", "sub", "(objectClass=*)")
    for bad in ("(|(a=b)(c=d))", "(cn=a*)", "(cn=a", "", "(&)", "(cn~=x)"):
        with pytest.raises(BadFilter):
            tree.search("DC=DE", "sub", bad)


def test_search_respects_read_acl(tree):
    assert tree.search("DC=DE", "sub", principal="stranger") == []


def test_parse_filter_shapes():
    assert parse_filter("objectClass=cRLDistributionPoint") == Equality("objectClass", "cRLDistributionPoint")
    assert parse_filter("(&(a=*)(b=c))") == And((Presence("a"), Equality("b", "c")))
    assert parse_filter(r"(cn=a\2ab)") == Equality("cn", "a*b")


def test_binary_equality_is_exact(clock):
    d = Directory(["C=DE"], [AclRule("w", "add_entry", "any", "C=DE"), AclRule(ANONYMOUS, "read", "any", "C=DE")], clock=clock)
    d.add_entry("w", Entry("C=DE", {"objectClass": ["country", "pkiUser"], "c": ["DE"], "userCertificate": [b"AB"]}))
    assert d.search("C=DE", "base", "(userCertificate=AB)")
    assert not d.search("C=DE", "base", "(userCertificate=ab)")


# -- ACL ------------------------------------------------------------------------

def test_acl_examples(tree):
    assert tree.check_acl(CERT_PUBLISHER, Permission.ADD_ENTRY, "x509serialNumber=1+x509issuerDN=x," + ALICE,
                          ["objectClass", "userCertificate", "x509serialNumber", "x509issuerDN"])
    assert not tree.check_acl(CERT_PUBLISHER, Permission.ADD_ENTRY, "CN=x," + CA_BASE, ["userCertificate"])
    assert not tree.check_acl(CERT_PUBLISHER, Permission.ADD_ENTRY, "CN=x," + USERS_BASE, ["mail"])
    assert not tree.check_acl("stranger", Permission.READ, ALICE)
    assert not check_acl([], REGISTRAR, "add_entry", ALICE)


def test_default_acl_shape():
    rules = default_acl(USERS_BASE, CA_BASE, "DC=DE")
    crl = [r for r in rules if r.principal == CRL_PUBLISHER and r.permission is Permission.MODIFY_ATTR]
    assert crl and all(str(r.subtree) == CA_BASE for r in crl)
    assert not any(r.principal in (CERT_PUBLISHER, CRL_PUBLISHER) and r.permission is Permission.DELETE_ENTRY for r in rules)


# -- log and invariants ---------------------------------------------------------

def test_log_basics(clock):
    d = Directory(["C=DE"], [AclRule("w", "add_entry", "any", "C=DE")], clock=clock)
    assert d.operation_log() == ()
    d.add_entry("w", Entry("C=DE", {"objectClass": ["country"], "c": ["DE"]}))
    (rec,) = d.operation_log()
    assert (rec.sequence_number, rec.kind, rec.outcome, rec.timestamp) == (1, OpKind.ADD, "ok", clock.now)
    assert rec.attributes_touched == ("objectClass", "c")


ops = st.lists(
    st.tuples(
        st.sampled_from(["add", "modify", "delete", "search"]),
        st.sampled_from([REGISTRAR, ADMIN, CERT_PUBLISHER, CRL_PUBLISHER, "stranger"]),
        st.sampled_from(["Alice", "Bob", "Carol"]),
        st.sampled_from(["", "sn", "objectClass", "mail"]),
    ),
    max_size=25,
)


def _apply(d, op, principal, cn, attr):
    dn = f"CN={cn},{USERS_BASE}"
    try:
        if op == "add":
            d.add_entry(principal, plan_user_entry(cn, cn + "son", USERS_BASE))
        elif op == "modify":
            d.modify_entry(principal, dn, [("replace_values", attr or "description", [] if attr == "sn" else ["v"])])
        elif op == "delete":
            d.delete_entry(principal, dn)
        else:
            d.search(dn if attr else USERS_BASE, "sub", f"({attr or 'cn'}=*)", principal=principal)
    except Exception as exc:  # every failure must still be a domain error
        from dirplan.errors import DirectoryError

        assert isinstance(exc, DirectoryError), exc


@settings(max_examples=60, deadline=None)
@given(ops)
def test_log_completeness_schema_soundness_tree_integrity(sequence):
    d = sample_directory()
    start = len(d.operation_log())
    for i, step in enumerate(sequence, 1):
        before = d.operation_log()
        _apply(d, *step)
        log = d.operation_log()
        assert len(log) == start + i
        assert log[: len(before)] == before
        assert log[-1].sequence_number == log[-2].sequence_number + 1
        assert all_valid(d)
    for e in d.entries():
        assert e.dn in d.suffixes or e.dn.parent in d


@settings(max_examples=30, deadline=None)
@given(ops)
def test_deny_by_default(sequence):
    d = sample_directory()
    d.acl = []
    before = snapshot(d)
    for op, _principal, cn, attr in sequence:
        if op == "search":
            continue
        with pytest.raises(Denied):
            if op == "add":
                d.add_entry(REGISTRAR, plan_user_entry(cn, "x", USERS_BASE))
            elif op == "modify":
                d.modify_entry(ADMIN, ALICE, [("add_values", "description", ["x"])])
            else:
                d.delete_entry(ADMIN, ALICE)
    assert snapshot(d) == before


@settings(max_examples=30, deadline=None)
@given(ops)
def test_determinism(sequence):
    from support import FakeClock
    from dirplan.fixtures import utc

    exports = []
    for _ in range(2):
        d = sample_directory(FakeClock(utc(2004, 1, 1)))
        for step in sequence:
            _apply(d, *step)
        exports.append((export_ldif(d), [r.to_json() for r in d.operation_log()]))
    assert exports[0] == exports[1]


def test_concurrent_writers_keep_log_consistent():
    d = sample_directory()
    start = len(d.operation_log())

    def worker(prefix):
        for i in range(20):
            d.add_entry(REGISTRAR, plan_user_entry(f"{prefix}{i}", "x", USERS_BASE))
            d.search(USERS_BASE, "one", "(cn=*)")

    threads = [threading.Thread(target=worker, args=(p,)) for p in "abcd"]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    log = d.operation_log()
    assert len(log) == start + 160
    assert [r.sequence_number for r in log] == list(range(1, len(log) + 1))
    assert len(d.children(USERS_BASE)) == 81
