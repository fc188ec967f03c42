"""Walk a sample organisation through publication, revocation and deletion.

Runs the ``dirplan`` command line against a throwaway working directory and
prints each command with its output.  Usage::

    python demos/walkthrough.py
"""

from __future__ import annotations

import hashlib
import io
import shlex
import tempfile
from pathlib import Path

from dirplan.cli import main
from dirplan.fixtures import CA_DN, build_crl, sample_user_certificate, utc

CONFIG = """\
root_domain = MyOrg.DE
organization = MyOrg
accredited = false
ldap_host = 192.168.0.1
ldap_port = 389
snapshot_path = dit.ldif
audit_log_path = audit.log
users_base = O=Org,C=DE,DC=MyOrg,DC=DE
ca_base = O=OrgCA,C=DE,DC=MyOrg,DC=DE
container = C=DE,DC=MyOrg,DC=DE
container = O=Org,C=DE,DC=MyOrg,DC=DE
container = O=OrgCA,C=DE,DC=MyOrg,DC=DE
ca = CN=MyCA,O=OrgCA,C=DE,DC=MyOrg,DC=DE
"""
DP = "CN=MyCA,O=OrgCA,C=DE,DC=MyOrg,DC=DE"
SUBENTRY = "x509issuerDN=CN\\=MyCA\\,O\\=OrgCA\\,C\\=DE+x509serialNumber=42,CN=Alice,O=Org,C=DE,DC=MyOrg,DC=DE"


def run(config: Path, now: str, *argv: str, stdin: str = "") -> int:
    print(f"$ dirplan --now {now} {shlex.join(argv)}")
    out, err = io.StringIO(), io.StringIO()
    code = main(["--config", str(config), "--now", now, *argv], stdin=io.StringIO(stdin), stdout=out, stderr=err)
    for text in (out.getvalue(), err.getvalue()):
        if text:
            print("  " + text.rstrip("\n").replace("\n", "\n  "))
    print(f"  [exit {code}]\n")
    return code


def main_demo() -> None:
    with tempfile.TemporaryDirectory() as tmp:
        root = Path(tmp)
        config = root / "dirplan.conf"
        config.write_text(CONFIG)
        cert = sample_user_certificate()
        (root / "alice.der").write_bytes(cert)
        (root / "crl5.der").write_bytes(
            build_crl(CA_DN, utc(2004, 4, 1), utc(2004, 5, 1), revoked=[(42, utc(2004, 3, 30))], crl_number=5)
        )
        (root / "delta7.der").write_bytes(build_crl(CA_DN, utc(2004, 4, 2), crl_number=7, base_crl_number=5))
        march, april = "2004-03-16T00:00:00Z", "2004-04-03T00:00:00Z"

        print("# plan the tree and advertise the CRL distribution point")
        run(config, march, "init")
        run(config, march, "crl-url", "--dp", DP)

        print("# a registered certificate stays invisible until activation")
        run(config, march, "add-user", "Alice", "Smith")
        run(config, march, "register", str(root / "alice.der"), "--consent")
        run(config, march, "status", CA_DN, "42")
        run(config, march, "activate", CA_DN, "42")
        run(config, march, "status", CA_DN, "42", "--hash", hashlib.sha256(cert).hexdigest())

        print("# revocation arrives by CRL; a replayed base CRL is refused")
        run(config, april, "publish-crl", str(root / "crl5.der"), "--dp", DP)
        run(config, april, "publish-crl", str(root / "delta7.der"), "--dp", DP)
        run(config, april, "publish-crl", str(root / "crl5.der"), "--dp", DP)
        run(config, april, "status", CA_DN, "42")

        print("# deletion is refused before the retention deadline, then monitored")
        run(config, "2010-12-31T23:59:59Z", "delete", SUBENTRY, stdin="yes\n")
        run(config, "2011-01-01T00:00:00Z", "delete", SUBENTRY, stdin="yes\n")

        print("# the operation log still satisfies every compliance check")
        run(config, "2011-01-01T00:00:00Z", "audit")
        run(config, "2011-01-01T00:00:00Z", "backup", str(root / "backup.ldif"))


if __name__ == "__main__":
    main_demo()
