from __future__ import annotations

import pytest
from hypothesis import given, settings, strategies as st

from dirplan.directory import Scope
from dirplan.dn import DistinguishedName, Rdn, format_dn, parse_dn
from dirplan.errors import BadDn, BadScheme, BadScope, EmptyDomain, LdapUrlError, MissingName, PlanError
from dirplan.fixtures import CA_DN, build_certificate, sample_ca_certificate, sample_user_certificate, utc
from dirplan.plan import (
    LdapUrl,
    UserPlanMode,
    make_crl_dp_url,
    parse_ldap_url,
    plan_ca_entry,
    plan_cert_subentry,
    plan_container,
    plan_crl_point_entry,
    plan_root,
    plan_user_entry,
    subentry_dn,
)
from dirplan.schema import check_schema
from dirplan.x509meta import parse_certificate

SAMPLE_URL = (
    "ldap://192.168.0.1:389/CN=MyCA,O=OrgCA,C=DE,DC=MyOrg,DC=DE"
    "?certificateRevocationList?base?objectClass=cRLDistributionPoint"
)
ALICE = "CN=Alice,O=Org,C=DE"


# -- root and containers -----------------------------------------------------------

def test_plan_root_sample_suffix():
    entries = plan_root("MyOrg.DE", "MyOrg")
    assert [format_dn(e.dn) for e in entries] == ["DC=DE", "DC=MyOrg,DC=DE"]
    assert entries[-1].object_classes == ["organization", "dcObject"]
    assert all(check_schema(e) == [] for e in entries)


def test_plan_root_chain():
    entries = plan_root("a.b.c", "Org")
    assert len(entries) == 3
    for parent, child in zip(entries, entries[1:]):
        assert child.dn.parent == parent.dn
    assert format_dn(entries[-1].dn) == "DC=a,DC=b,DC=c"


@pytest.mark.parametrize("domain", ["", "  ", "a..b", ".de"])
def test_plan_root_empty(domain):
    with pytest.raises(EmptyDomain):
        plan_root(domain, "x")


def test_plan_container():
    for dn, oc in (("C=DE", "country"), ("O=Org,C=DE", "organization"), ("OU=IT,O=Org", "organizationalUnit")):
        entry = plan_container(dn)
        assert entry.object_classes == [oc] and check_schema(entry) == []
    with pytest.raises(PlanError):
        plan_container("CN=x")


# -- users, CAs, distribution points ----------------------------------------------

def test_user_pki_only():
    entry = plan_user_entry("Alice", "Alice", "O=Org,C=DE", UserPlanMode.PKI_ONLY)
    assert format_dn(entry.dn) == ALICE
    assert entry.object_classes == ["person", "pkiUser"]
    assert "userCertificate" not in entry
    assert check_schema(entry) == []


def test_user_org_directory():
    entry = plan_user_entry("Alice", "Alice", "O=Org,C=DE", "org_directory")
    assert entry.object_classes == ["inetOrgPerson", "pkiUser"]
    assert check_schema(entry) == []


@pytest.mark.parametrize("cn, sn", [("", "x"), ("x", ""), ("  ", "x")])
def test_user_missing_name(cn, sn):
    with pytest.raises(MissingName):
        plan_user_entry(cn, sn, "O=Org,C=DE")


def test_ca_entry_with_cert():
    ca = parse_certificate(sample_ca_certificate())
    entry = plan_ca_entry("MyCA", "O=OrgCA,C=DE", ca)
    assert "pkiCA" in entry.object_classes
    assert entry["cACertificate"] == [ca.raw_der]
    assert check_schema(entry) == []


def test_ca_entry_without_cert():
    entry = plan_ca_entry("MyCA", "O=OrgCA,C=DE")
    assert "cACertificate" not in entry and check_schema(entry) == []
    entry.set("crossCertificatePair", [b"\x30\x00"])
    assert check_schema(entry) == []
    with pytest.raises(MissingName):
        plan_ca_entry("", "O=OrgCA,C=DE")
    with pytest.raises(PlanError):
        plan_ca_entry("x", "O=OrgCA,C=DE", structural="certificationAuthority")


def test_crl_point_hybrid():
    entry = plan_crl_point_entry("MyCA", "O=OrgCA,C=DE", colocate_ca=True)
    assert sorted(entry.object_classes) == ["cRLDistributionPoint", "pkiCA"]
    assert check_schema(entry) == []


def test_crl_point_indirect():
    entry = plan_crl_point_entry("RootCRLIssuer", "O=OrgCA,C=DE", colocate_ca=False)
    assert entry.object_classes == ["cRLDistributionPoint"]
    assert check_schema(entry) == []
    with pytest.raises(MissingName):
        plan_crl_point_entry("", "O=OrgCA,C=DE")
    with pytest.raises(PlanError):
        plan_crl_point_entry("x", "O=OrgCA,C=DE", ca_cert=parse_certificate(sample_ca_certificate()))


names = st.text(st.characters(blacklist_categories=("Cs", "Cc")), min_size=1, max_size=20).filter(str.strip)


@settings(max_examples=1000)
@given(names, names, st.sampled_from(list(UserPlanMode)), st.booleans(), st.booleans())
def test_planners_always_schema_valid(cn, sn, mode, with_cert, colocate):
    user = plan_user_entry(cn, sn, "O=Org,C=DE", mode)
    ca = plan_ca_entry(cn, "O=OrgCA,C=DE", parse_certificate(sample_ca_certificate()) if with_cert else None)
    dp = plan_crl_point_entry(cn, "O=OrgCA,C=DE", colocate_ca=colocate)
    for entry in (user, ca, dp):
        assert check_schema(entry) == []
    assert "strongauthenticationuser" not in {c.lower() for c in user.object_classes}
    assert "certificationauthority" not in {c.lower() for c in ca.object_classes + dp.object_classes}
    assert parse_dn(format_dn(user.dn)) == user.dn


# -- subentries ----------------------------------------------------------------------

def test_subentry_for_alice():
    info = parse_certificate(sample_user_certificate(42))
    entry = plan_cert_subentry(ALICE, info)
    assert entry.dn.parent == parse_dn(ALICE)
    assert entry.dn.rdn.get("x509serialNumber") == "42"
    assert parse_dn(entry.dn.rdn.get("x509issuerDN")) == parse_dn(CA_DN)
    assert entry["userCertificate"] == [info.raw_der]
    assert entry["x509notAfter"] == ["20050315120000Z"]
    assert entry["x509keyUsage"] == ["digitalSignature", "nonRepudiation"]
    assert check_schema(entry) == []


def test_sibling_subentries():
    a = plan_cert_subentry(ALICE, parse_certificate(sample_user_certificate(42)))
    b = plan_cert_subentry(ALICE, parse_certificate(sample_user_certificate(43)))
    assert a.dn != b.dn and a.dn.parent == b.dn.parent
    again = plan_cert_subentry(ALICE, parse_certificate(sample_user_certificate(42)))
    assert again.dn == a.dn


issuers = st.sampled_from(["CN=MyCA,O=OrgCA,C=DE", "CN=Other,O=X", "CN=My\\,CA,C=DE", "O=Root"])


@given(st.lists(st.tuples(issuers, st.integers(0, 2**64)), max_size=30))
def test_subentry_dns_bijective(pairs):
    dns = {subentry_dn(ALICE, parse_dn(i), s) for i, s in pairs}
    keys = {(parse_dn(i), s) for i, s in pairs}
    assert len(dns) == len(keys)


def test_subentry_without_key_usage():
    der = build_certificate(9, CA_DN, ALICE, utc(2004, 1, 1), utc(2005, 1, 1))
    entry = plan_cert_subentry(ALICE, parse_certificate(der))
    assert "x509keyUsage" not in entry and check_schema(entry) == []


# -- LDAP URLs -------------------------------------------------------------------------

def test_sample_url():
    assert make_crl_dp_url("192.168.0.1", 389, "CN=MyCA,O=OrgCA,C=DE,DC=MyOrg,DC=DE") == SAMPLE_URL


def test_parse_sample_url():
    url = parse_ldap_url(SAMPLE_URL)
    assert (url.host, url.port, url.scope) == ("192.168.0.1", 389, Scope.BASE)
    assert url.attributes == ("certificateRevocationList",)
    assert url.filter == "objectClass=cRLDistributionPoint"
    assert format_dn(url.dn) == "CN=MyCA,O=OrgCA,C=DE,DC=MyOrg,DC=DE"
    assert str(url) == SAMPLE_URL


def test_space_is_percent_encoded():
    url = make_crl_dp_url("h", 389, "CN=My CA,O=Org")
    assert "CN=My%20CA,O=Org" in url
    assert parse_ldap_url(url).dn == parse_dn("CN=My CA,O=Org")


def test_defaults():
    url = parse_ldap_url("ldap://h/DC=DE")
    assert (url.port, url.scope, url.filter, url.attributes) == (389, Scope.BASE, "(objectClass=*)", ())
    assert parse_ldap_url("ldap://[::1]:636/").port == 636
    assert parse_ldap_url("LDAP://h:1/??sub").scope is Scope.SUB


@pytest.mark.parametrize(
    "text, error",
    [
        ("http://h/DC=DE", BadScheme),
        ("ldaps://h/DC=DE", BadScheme),
        ("ldap://h/DC=DE??subtree", BadScope),
        ("ldap://h/CN=a,,O=b", BadDn),
        ("ldap://h:99999/", LdapUrlError),
        ("ldap://h:x/", LdapUrlError),
        ("ldap://h/a?b?c?d?e?f", LdapUrlError),
    ],
)
def test_url_errors(text, error):
    with pytest.raises(error):
        parse_ldap_url(text)


dn_values = st.text(st.characters(blacklist_categories=("Cs",)), min_size=1, max_size=10)
dns = st.lists(st.tuples(st.sampled_from(["CN", "O", "OU", "C", "DC"]), dn_values), min_size=1, max_size=4).map(
    lambda pairs: DistinguishedName(tuple(Rdn(((t, v),)) for t, v in pairs))
)
hosts = st.one_of(st.from_regex(r"[a-z][a-z0-9.-]{0,15}", fullmatch=True), st.just("192.168.0.1"))


@given(hosts, st.integers(1, 65535), dns)
def test_url_round_trip(host, port, dn):
    url = parse_ldap_url(make_crl_dp_url(host, port, dn))
    assert (url.host, url.port, url.dn, url.scope) == (host, port, dn, Scope.BASE)
    assert url.attributes == ("certificateRevocationList",)
    assert url.filter == "objectClass=cRLDistributionPoint"


@given(hosts, st.integers(1, 65535), dns, st.sampled_from(list(Scope)), st.sampled_from(["(cn=a b)", "(&(a=*)(b=?))", "(o=x%y)"]))
def test_general_url_round_trip(host, port, dn, scope, flt):
    url = LdapUrl(host, port, dn, ("cACertificate", "cn"), scope, flt)
    assert parse_ldap_url(str(url)) == url
