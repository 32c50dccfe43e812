"""Registrable-domain lookup against a bundled public-suffix snapshot.

The snapshot is a small excerpt of the Public Suffix List (ICANN section
plus a few widely used private suffixes).  Any TLD not listed falls under the
list's implicit ``*`` rule, so single-label suffixes work without entries.
"""

from __future__ import annotations

from functools import lru_cache
from importlib import resources


@lru_cache(maxsize=1)
def _rules() -> tuple[frozenset, frozenset, frozenset]:
    exact, wildcard, exception = set(), set(), set()
    text = resources.files(__package__).joinpath("public_suffixes.dat").read_text(encoding="utf-8")
    for line in text.splitlines():
        line = line.strip().lower()
        if not line or line.startswith("//"):
            continue
        if line.startswith("!"):
            exception.add(line[1:])
        elif line.startswith("*."):
            wildcard.add(line[2:])
        else:
            exact.add(line)
    return frozenset(exact), frozenset(wildcard), frozenset(exception)


def public_suffix(host: str) -> str:
    host = host.lower().strip(".")
    labels = host.split(".")
    exact, wildcard, exception = _rules()
    best = labels[-1]
    for i in range(len(labels)):
        candidate = ".".join(labels[i:])
        if candidate in exception:
            return ".".join(labels[i + 1:])
        if candidate in exact:
            return candidate
        parent = ".".join(labels[i + 1:])
        if i + 1 < len(labels) and parent in wildcard:
            return candidate
    return best


def registrable_domain(host: str) -> str:
    """eTLD+1 of ``host``; hosts that are themselves suffixes or IPs come back unchanged."""
    host = host.lower().strip(".")
    if not host or _is_ip(host):
        return host
    suffix = public_suffix(host)
    if host == suffix:
        return host
    rest = host[: -len(suffix) - 1]
    return rest.rsplit(".", 1)[-1] + "." + suffix


def _is_ip(host: str) -> bool:
    if host.startswith("["):
        return True
    parts = host.split(".")
    return len(parts) == 4 and all(p.isdigit() for p in parts)
