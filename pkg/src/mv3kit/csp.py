"""Content-Security-Policy string handling.

Only the directives that Manifest V3 restricts for extension pages are
filtered; every other directive is carried through untouched.
"""

from __future__ import annotations

import re

# Directives whose source lists V3 refuses to relax.
RESTRICTED_DIRECTIVES = ("script-src", "object-src", "worker-src")

_LOCAL_ORIGIN = re.compile(r"^https?://(?:localhost|127\.0\.0\.1)(?::(?:\d+|\*))?/?$", re.IGNORECASE)


def parse_policy(text: str) -> list[tuple[str, list[str]]]:
    """Split a policy into ``(directive, sources)`` pairs, preserving order."""
    directives = []
    for chunk in text.split(";"):
        parts = chunk.split()
        if not parts:
            continue
        directives.append((parts[0].lower(), parts[1:]))
    return directives


def format_policy(directives: list[tuple[str, list[str]]]) -> str:
    return "; ".join(" ".join([name, *sources]) for name, sources in directives)


def is_allowed_source(source: str) -> bool:
    if source.lower() in ("'self'", "'none'"):
        return True
    return bool(_LOCAL_ORIGIN.match(source))


def disallowed_sources(text: str) -> list[tuple[str, str]]:
    """Return ``(directive, source)`` for every source V3 would reject."""
    bad = []
    for name, sources in parse_policy(text):
        if name not in RESTRICTED_DIRECTIVES:
            continue
        bad.extend((name, src) for src in sources if not is_allowed_source(src))
    return bad


def filter_policy(text: str) -> tuple[str, list[tuple[str, str]]]:
    """Drop disallowed sources from restricted directives.

    A restricted directive left with no sources falls back to ``'self'``;
    an empty source list would otherwise block the extension's own scripts.
    """
    dropped = []
    out = []
    for name, sources in parse_policy(text):
        if name in RESTRICTED_DIRECTIVES:
            kept = [s for s in sources if is_allowed_source(s)]
            dropped.extend((name, s) for s in sources if not is_allowed_source(s))
            if not kept:
                kept = ["'self'"]
            sources = kept
        out.append((name, sources))
    return format_policy(out), dropped


def has_unsafe_eval(text: str) -> bool:
    return any(
        src.lower() == "'unsafe-eval'"
        for _, sources in parse_policy(text)
        for src in sources
    )
