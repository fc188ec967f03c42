"""Directory entries: a DN plus case-insensitive multi-valued attributes."""

from __future__ import annotations

from typing import Iterable, Iterator, Mapping

from .dn import DistinguishedName, Value, as_dn, attr_key, normalize_value, strip_binary_option

# attributes whose values are raw DER and compare byte-for-byte
BINARY_ATTRIBUTES = frozenset(
    attr_key(a)
    for a in (
        "userCertificate",
        "cACertificate",
        "certificateRevocationList",
        "authorityRevocationList",
        "deltaRevocationList",
        "crossCertificatePair",
    )
)


def is_binary_attribute(name: str) -> bool:
    return attr_key(name) in BINARY_ATTRIBUTES


def match_key(name: str, value: Value) -> Value:
    """Comparison key for one value of attribute ``name``."""
    if isinstance(value, bytes) or is_binary_attribute(name):
        return value
    return normalize_value(value)


def _value_sort_key(value: Value) -> tuple[int, bytes]:
    return (1, value) if isinstance(value, bytes) else (0, value.encode("utf-8"))


class Entry:
    """One DIT entry.

    Attribute names are matched case-insensitively with any ``;binary``
    option ignored; the spelling first used is kept for output.

        >>> e = Entry("CN=Alice,O=Org,C=DE", {"objectClass": ["person"], "cn": ["Alice"]})
        >>> e["CN"]
        ['Alice']
    """

    __slots__ = ("dn", "_attrs")

    def __init__(self, dn: DistinguishedName | str, attributes: Mapping[str, Iterable[Value]] | None = None):
        self.dn = as_dn(dn)
        self._attrs: dict[str, tuple[str, list[Value]]] = {}
        for name, values in (attributes or {}).items():
            if isinstance(values, (str, bytes)):
                values = [values]
            self.set(name, values)

    def __getitem__(self, name: str) -> list[Value]:
        return list(self._attrs[attr_key(name)][1])

    def get(self, name: str, default=None):
        item = self._attrs.get(attr_key(name))
        return list(item[1]) if item else default

    def __contains__(self, name: str) -> bool:
        return attr_key(name) in self._attrs

    def __iter__(self) -> Iterator[str]:
        return iter(self.names())

    def names(self) -> list[str]:
        return [display for display, _ in self._attrs.values()]

    def keys(self) -> list[str]:
        return list(self._attrs)

    def items(self) -> Iterator[tuple[str, list[Value]]]:
        for display, values in self._attrs.values():
            yield display, list(values)

    def set(self, name: str, values: Iterable[Value]) -> None:
        """Replace all values of ``name``; an empty list removes it."""
        key = attr_key(name)
        values = list(values)
        if not values:
            self._attrs.pop(key, None)
            return
        display = self._attrs[key][0] if key in self._attrs else strip_binary_option(name.strip())
        self._attrs[key] = (display, values)

    def remove(self, name: str) -> None:
        self._attrs.pop(attr_key(name), None)

    def has_value(self, name: str, value: Value) -> bool:
        want = match_key(name, value)
        return any(match_key(name, v) == want for v in self.get(name, []))

    @property
    def object_classes(self) -> list[str]:
        return [v for v in self.get("objectClass", []) if isinstance(v, str)]

    def has_object_class(self, name: str) -> bool:
        return name.lower() in {oc.lower() for oc in self.object_classes}

    def copy(self) -> Entry:
        clone = Entry(self.dn)
        clone._attrs = {k: (d, list(v)) for k, (d, v) in self._attrs.items()}
        return clone

    def _comparable(self):
        return {k: sorted((_value_sort_key(v) for v in vals)) for k, (_, vals) in self._attrs.items()}

    def __eq__(self, other):
        if not isinstance(other, Entry):
            return NotImplemented
        return self.dn == other.dn and self._comparable() == other._comparable()

    __hash__ = None

    def __repr__(self):
        return f"Entry({str(self.dn)!r}, {dict(self.items())!r})"
