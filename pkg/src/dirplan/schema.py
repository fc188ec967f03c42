"""Object-class registry and schema checking for directory entries."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .dn import attr_key
from .entry import Entry, is_binary_attribute
from .errors import UnknownObjectClass


class ClassKind(enum.Enum):
    STRUCTURAL = "structural"
    AUXILIARY = "auxiliary"


@dataclass(frozen=True)
class ObjectClassDef:
    name: str
    kind: ClassKind
    must: frozenset[str] = frozenset()
    may: frozenset[str] = frozenset()
    sup: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "must", frozenset(self.must))
        object.__setattr__(self, "may", frozenset(self.may))
        overlap = {attr_key(a) for a in self.must} & {attr_key(a) for a in self.may}
        if overlap:
            raise ValueError(f"{self.name}: attributes both MUST and MAY: {sorted(overlap)}")


def _oc(name, kind, must=(), may=(), sup=None):
    return ObjectClassDef(name, ClassKind(kind), frozenset(must), frozenset(may), sup)


SEED_CLASSES = (
    _oc("person", "structural", {"cn", "sn"}, {"userPassword", "telephoneNumber", "seeAlso", "description"}),
    _oc("inetOrgPerson", "structural", (), {"mail", "displayName", "userCertificate"}, sup="person"),
    _oc("pkiUser", "auxiliary", (), {"userCertificate"}),
    _oc("pkiCA", "auxiliary", (), {"cACertificate", "certificateRevocationList", "authorityRevocationList", "crossCertificatePair"}),
    _oc(
        "certificationAuthority", "auxiliary",
        {"cACertificate", "certificateRevocationList", "authorityRevocationList"}, {"crossCertificatePair"},
    ),
    _oc("strongAuthenticationUser", "auxiliary", {"userCertificate"}),
    _oc("cRLDistributionPoint", "structural", {"cn"}, {"certificateRevocationList", "authorityRevocationList", "deltaRevocationList"}),
    _oc("deltaCRL", "auxiliary", (), {"deltaRevocationList"}),
    _oc("dcObject", "auxiliary", {"dc"}),
    _oc("organization", "structural", {"o"}, {"description", "telephoneNumber", "seeAlso"}),
    _oc("country", "structural", {"c"}, {"description"}),
    _oc(
        "x509certificate", "structural",
        {"x509serialNumber", "x509issuerDN", "userCertificate"},
        {"x509subjectDN", "x509notBefore", "x509notAfter", "x509keyUsage"},
    ),
    # structural homes for naming-plan and CA entries
    _oc("domain", "structural", {"dc"}, {"o", "description"}),
    _oc("organizationalUnit", "structural", {"ou"}, {"description", "telephoneNumber", "seeAlso"}),
    _oc("applicationProcess", "structural", {"cn"}, {"seeAlso", "ou", "l", "description"}),
)


@dataclass(frozen=True)
class Violation:
    kind: str  # missing_must | not_allowed | structural_conflict | bad_syntax | no_object_class
    attribute: str
    message: str

    def __str__(self):
        return self.message


@dataclass
class SchemaRegistry:
    classes: dict[str, ObjectClassDef] = field(default_factory=dict)

    @classmethod
    def seeded(cls) -> SchemaRegistry:
        reg = cls()
        for oc in SEED_CLASSES:
            reg.register(oc)
        return reg

    def register(self, oc: ObjectClassDef) -> None:
        if oc.sup is not None and oc.sup.lower() not in self.classes:
            raise UnknownObjectClass(f"superclass {oc.sup} of {oc.name} is not registered")
        self.classes[oc.name.lower()] = oc

    def get(self, name: str) -> ObjectClassDef:
        try:
            return self.classes[name.lower()]
        except KeyError:
            raise UnknownObjectClass(f"unknown object class {name!r}") from None

    def chain(self, name: str) -> list[ObjectClassDef]:
        """The class followed by its superclasses."""
        out = [self.get(name)]
        while out[-1].sup is not None:
            out.append(self.get(out[-1].sup))
        return out

    def check(self, entry: Entry) -> list[Violation]:
        """Return every schema problem of ``entry``; an empty list means valid.

        Raises :class:`UnknownObjectClass` if a class is not registered.
        """
        out: list[Violation] = []
        classes = entry.object_classes
        if not classes:
            return [Violation("no_object_class", "objectClass", "entry has no objectClass value")]
        defs = [d for name in classes for d in self.chain(name)]

        must: dict[str, str] = {}
        allowed = {"objectclass"}
        for d in defs:
            for a in d.must:
                must.setdefault(attr_key(a), a)
                allowed.add(attr_key(a))
            allowed.update(attr_key(a) for a in d.may)

        present = set(entry.keys())
        for key, name in sorted(must.items()):
            if key not in present:
                out.append(Violation("missing_must", name, f"missing required attribute {name}"))
        for name in entry.names():
            if attr_key(name) not in allowed:
                out.append(Violation("not_allowed", name, f"attribute {name} not allowed by {classes}"))

        structural = {d.name.lower() for name in classes for d in [self.get(name)] if d.kind is ClassKind.STRUCTURAL}
        leaves = [s for s in structural if not any(s != o and s in {c.name.lower() for c in self.chain(o)} for o in structural)]
        if len(leaves) > 1:
            out.append(Violation("structural_conflict", "objectClass", f"unrelated structural classes {sorted(leaves)}"))

        for name, values in entry.items():
            binary = is_binary_attribute(name)
            if any(isinstance(v, bytes) != binary for v in values):
                want = "binary" if binary else "string"
                out.append(Violation("bad_syntax", name, f"attribute {name} needs {want} values"))
        return out


DEFAULT_SCHEMA = SchemaRegistry.seeded()


def check_schema(entry: Entry, registry: SchemaRegistry | None = None) -> list[Violation]:
    return (registry or DEFAULT_SCHEMA).check(entry)
