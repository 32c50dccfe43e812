"""Adblock Plus filter subset and plain-domain blocklists.

Supported syntax: ``!`` comments, ``@@`` exceptions, ``||`` / ``|`` anchors,
trailing ``|``, ``*``, ``^``, ``$third-party`` and ``$domain=``.  Other
options are kept on the rule but ignored when matching; cosmetic and regex
filters are skipped with a diagnostic.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import lru_cache
from urllib.parse import urlsplit

from .errors import Diagnostic, MalformedUrl
from .suffixes import registrable_domain

LITERAL, WILDCARD, SEPARATOR = "literal", "wildcard", "separator"

_OPTIONS = re.compile(r"^~?[\w-]+(?:=[^,]*)?(?:,~?[\w-]+(?:=[^,]*)?)*$")
_HOSTS_LINE = re.compile(r"^(?:0\.0\.0\.0|127\.0\.0\.1|::1?)\s+(\S+)\s*(?:#.*)?$")
_PLAIN_DOMAIN = re.compile(r"^[a-z0-9_-]+(?:\.[a-z0-9_-]+)+\.?$", re.IGNORECASE)
_COSMETIC = ("##", "#@#", "#?#", "#$#", "#%#", "#@$#", "#@?#")
SEPARATOR_CLASS = "[^a-z0-9_.%-]"


@dataclass(frozen=True)
class FilterRule:
    raw: str = field(compare=False)
    exception: bool = False
    anchor: str = "none"  # none | domain | start
    anchor_end: bool = False
    pattern: tuple[tuple[str, str], ...] = ()
    third_party: bool | None = None
    domains_include: tuple[str, ...] = ()
    domains_exclude: tuple[str, ...] = ()
    unknown_options: tuple[str, ...] = ()


@dataclass(frozen=True)
class RuleSet:
    block_rules: tuple[FilterRule, ...] = ()
    exception_rules: tuple[FilterRule, ...] = ()
    plain_domains: frozenset[str] = frozenset()

    def __add__(self, other: RuleSet) -> RuleSet:
        return RuleSet(
            self.block_rules + other.block_rules,
            self.exception_rules + other.exception_rules,
            self.plain_domains | other.plain_domains,
        )

    def __len__(self) -> int:
        return len(self.block_rules) + len(self.exception_rules) + len(self.plain_domains)


@dataclass(frozen=True)
class Verdict:
    kind: str  # blocked | excepted | clean
    rule: FilterRule | None = None
    domain: str | None = None

    @property
    def blocked(self) -> bool:
        return self.kind == "blocked"


def _atoms(text: str) -> tuple[tuple[str, str], ...]:
    atoms: list[tuple[str, str]] = []
    for ch in text:
        if ch == "*":
            if not atoms or atoms[-1][0] != WILDCARD:
                atoms.append((WILDCARD, "*"))
        elif ch == "^":
            atoms.append((SEPARATOR, "^"))
        elif atoms and atoms[-1][0] == LITERAL:
            atoms[-1] = (LITERAL, atoms[-1][1] + ch.lower())
        else:
            atoms.append((LITERAL, ch.lower()))
    return tuple(atoms)


def parse_rule(line: str, warnings: list[Diagnostic] | None = None, lineno: int | None = None) -> FilterRule | None:
    """Parse one ABP line; comments, cosmetic and unsupported lines give None."""
    def warn(code, msg):
        if warnings is not None:
            warnings.append(Diagnostic(code, msg, line=lineno))

    raw = line.strip()
    if not raw or raw.startswith("!") or (raw.startswith("[") and raw.endswith("]")):
        return None
    if any(marker in raw for marker in _COSMETIC):
        warn("element_hiding", f"cosmetic filter skipped: {raw}")
        return None

    body = raw
    exception = body.startswith("@@")
    if exception:
        body = body[2:]

    third_party = None
    include: list[str] = []
    exclude: list[str] = []
    unknown: list[str] = []
    dollar = body.rfind("$")
    if dollar >= 0 and _OPTIONS.match(body[dollar + 1:]):
        for opt in body[dollar + 1:].split(","):
            name, _, value = opt.partition("=")
            negated = name.startswith("~")
            key = name.lstrip("~").lower()
            if key in ("third-party", "3p"):
                third_party = not negated
            elif key in ("first-party", "1p"):
                third_party = negated
            elif key == "domain" and value:
                for d in value.lower().split("|"):
                    (exclude if d.startswith("~") else include).append(d.lstrip("~"))
            else:
                unknown.append(opt)
                warn("ignored_option", f"option {opt!r} parsed but not enforced")
        body = body[:dollar]

    if len(body) > 1 and body.startswith("/") and body.endswith("/"):
        warn("regex_filter", f"regular-expression filter skipped: {raw}")
        return None

    anchor = "none"
    if body.startswith("||"):
        anchor, body = "domain", body[2:]
    elif body.startswith("|"):
        anchor, body = "start", body[1:]
    anchor_end = False
    if body.endswith("|"):
        anchor_end, body = True, body[:-1]

    return FilterRule(
        raw=raw,
        exception=exception,
        anchor=anchor,
        anchor_end=anchor_end,
        pattern=_atoms(body),
        third_party=third_party,
        domains_include=tuple(include),
        domains_exclude=tuple(exclude),
        unknown_options=tuple(unknown),
    )


def serialize(rule: FilterRule) -> str:
    text = "@@" if rule.exception else ""
    text += {"domain": "||", "start": "|"}.get(rule.anchor, "")
    text += "".join(t for _, t in rule.pattern)
    if rule.anchor_end:
        text += "|"
    opts = []
    if rule.third_party is not None:
        opts.append("third-party" if rule.third_party else "~third-party")
    domains = list(rule.domains_include) + ["~" + d for d in rule.domains_exclude]
    if domains:
        opts.append("domain=" + "|".join(domains))
    opts.extend(rule.unknown_options)
    if opts:
        text += "$" + ",".join(opts)
    return text


def _plain_domain(line: str) -> str | None:
    m = _HOSTS_LINE.match(line)
    if m:
        host = m.group(1).lower()
        return None if host in ("localhost", "localhost.localdomain", "0.0.0.0") else host.rstrip(".")
    if _PLAIN_DOMAIN.match(line):
        return line.lower().rstrip(".")
    return None


def parse_filter_list(text: str) -> tuple[RuleSet, list[Diagnostic]]:
    warnings: list[Diagnostic] = []
    block, exceptions, domains = [], [], set()
    for n, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("!"):
            continue
        if stripped.startswith("#") and not stripped.startswith(_COSMETIC):
            continue  # hosts-file comment
        domain = _plain_domain(stripped)
        if domain:
            domains.add(domain)
            continue
        rule = parse_rule(stripped, warnings, n)
        if rule is None:
            continue
        (exceptions if rule.exception else block).append(rule)
    return RuleSet(tuple(block), tuple(exceptions), frozenset(domains)), warnings


# ----------------------------------------------------------------- matching

@lru_cache(maxsize=65536)
def _compiled(pattern: tuple[tuple[str, str], ...], anchor_end: bool) -> re.Pattern:
    parts = []
    for kind, text in pattern:
        if kind == LITERAL:
            parts.append(re.escape(text))
        elif kind == WILDCARD:
            parts.append(".*")
        else:
            parts.append(f"(?:{SEPARATOR_CLASS}|\\Z)")
    if anchor_end:
        parts.append(r"\Z")
    return re.compile("".join(parts), re.DOTALL)


@dataclass(frozen=True)
class ParsedUrl:
    text: str  # lowercased full URL
    host: str
    host_start: int


def parse_url(url: str) -> ParsedUrl:
    try:
        parts = urlsplit(url)
        host = parts.hostname
    except ValueError as exc:
        raise MalformedUrl(f"cannot parse URL {url!r}: {exc}") from exc
    if not parts.scheme or not host or "://" not in url:
        raise MalformedUrl(f"URL needs a scheme and a host: {url!r}")
    start = url.index("://") + 3
    if "@" in parts.netloc:
        start += parts.netloc.rindex("@") + 1
    if url[start:start + 1] == "[":
        start += 1
    return ParsedUrl(url.lower(), host, start)


def host_label_starts(parsed: ParsedUrl) -> list[int]:
    """Offsets in the URL where a host label begins."""
    starts = [parsed.host_start]
    starts += [parsed.host_start + i + 1 for i, c in enumerate(parsed.host) if c == "."]
    return starts


def _domain_in(host: str, domains) -> bool:
    return any(host == d or host.endswith("." + d) for d in domains)


def _options_allow(rule: FilterRule, parsed: ParsedUrl, context: dict | None) -> bool:
    origin = (context or {}).get("origin_host")
    if not origin:
        return True
    origin = origin.lower()
    if rule.third_party is not None:
        third = registrable_domain(parsed.host) != registrable_domain(origin)
        if third != rule.third_party:
            return False
    if _domain_in(origin, rule.domains_exclude):
        return False
    if rule.domains_include and not _domain_in(origin, rule.domains_include):
        return False
    return True


def _pattern_matches(rule: FilterRule, parsed: ParsedUrl) -> bool:
    rx = _compiled(rule.pattern, rule.anchor_end)
    if rule.anchor == "domain":
        return any(rx.match(parsed.text, pos) for pos in host_label_starts(parsed))
    if rule.anchor == "start":
        return rx.match(parsed.text) is not None
    return rx.search(parsed.text) is not None


def matches(rule: FilterRule, url: str, context: dict | None = None) -> bool:
    parsed = parse_url(url)
    return _options_allow(rule, parsed, context) and _pattern_matches(rule, parsed)


def _listed_domain(rs: RuleSet, host: str) -> str | None:
    if not rs.plain_domains:
        return None
    base = registrable_domain(host)
    labels = host.split(".")
    for i in range(len(labels)):
        candidate = ".".join(labels[i:])
        if candidate in rs.plain_domains:
            return candidate
        if candidate == base:
            break
    return None


def classify_url(rs: RuleSet, url: str, context: dict | None = None) -> Verdict:
    parsed = parse_url(url)
    for rule in rs.exception_rules:
        if _options_allow(rule, parsed, context) and _pattern_matches(rule, parsed):
            return Verdict("excepted", rule)
    for rule in rs.block_rules:
        if _options_allow(rule, parsed, context) and _pattern_matches(rule, parsed):
            return Verdict("blocked", rule)
    domain = _listed_domain(rs, parsed.host)
    if domain:
        return Verdict("blocked", None, domain)
    return Verdict("clean")


def load_blocklist(path) -> tuple[RuleSet, list[Diagnostic]]:
    with open(path, encoding="utf-8", errors="replace") as fh:
        return parse_filter_list(fh.read())
