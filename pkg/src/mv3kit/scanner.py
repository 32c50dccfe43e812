"""Hit counting for the fixed vulnerable/malicious API taxonomy and WAR injection detection."""

from __future__ import annotations

import fnmatch
import posixpath
from dataclasses import dataclass

from .lexer import find_api_hits
from .model import MANIFEST, ExtensionPackage
from .patterns import JsFile, append_lines, remote_src_assignments, script_element_lines, script_tags

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class TaxonomyEntry:
    category: str
    api: str
    vulnerability_related: bool
    malicious_related: bool


# Changing this table is the only way to change what the scanner reports.
TAXONOMY: tuple[TaxonomyEntry, ...] = (
    TaxonomyEntry("BackgroundPages", "runtime.sendMessage", True, False),
    TaxonomyEntry("BackgroundPages", "runtime.connect", True, False),
    TaxonomyEntry("BackgroundPages", "runtime.onMessage.addListener", True, False),
    TaxonomyEntry("BackgroundPages", "runtime.onConnect.addListener", True, False),
    TaxonomyEntry("WebRequest", "webRequest", True, True),
    TaxonomyEntry("WebRequest", "webRequestBlocking", True, True),
    TaxonomyEntry("ContentScriptsCrossOrigin", "XMLHttpRequest", True, True),
    TaxonomyEntry("ContentScriptsCrossOrigin", "fetch", True, True),
    TaxonomyEntry("RemotelyHostedCode", "eval", False, True),
)
TAXONOMY_APIS = tuple(e.api for e in TAXONOMY)


@dataclass(frozen=True)
class ApiUsage:
    locations: tuple[tuple[str, int], ...] = ()

    @property
    def hits(self) -> int:
        return len(self.locations)


@dataclass(frozen=True)
class WarInjectionFinding:
    war_resource: str
    matches: tuple[str, ...]
    injection_site: tuple[str, int]
    remote_host_expression: str


@dataclass(frozen=True)
class RiskReport:
    per_api: dict
    uses_vulnerability_related: bool = False
    uses_malicious_related: bool = False
    findings: tuple[WarInjectionFinding, ...] = ()
    counting_mode: str = "code_only"

    def hits(self, api: str) -> int:
        return self.per_api[api].hits

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "counting_mode": self.counting_mode,
            "flags": {
                "uses_vulnerability_related": self.uses_vulnerability_related,
                "uses_malicious_related": self.uses_malicious_related,
            },
            "per_api": {
                api: {"hits": u.hits, "locations": [list(loc) for loc in u.locations]}
                for api, u in sorted(self.per_api.items())
            },
            "findings": [
                {
                    "war_resource": f.war_resource,
                    "matches": list(f.matches),
                    "injection_site": list(f.injection_site),
                    "remote_host_expression": f.remote_host_expression,
                }
                for f in self.findings
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> RiskReport:
        per_api = {
            api: ApiUsage(tuple((p, int(n)) for p, n in v["locations"]))
            for api, v in data["per_api"].items()
        }
        findings = tuple(
            WarInjectionFinding(f["war_resource"], tuple(f["matches"]), tuple(f["injection_site"]),
                                f["remote_host_expression"])
            for f in data.get("findings", ())
        )
        return cls(per_api, data["flags"]["uses_vulnerability_related"],
                   data["flags"]["uses_malicious_related"], findings, data.get("counting_mode", "code_only"))


def _code_units(pkg: ExtensionPackage):
    """Yield ``(path, source, line_offset)`` for every JS file and inline HTML script."""
    for path in pkg.paths(".js"):
        yield path, pkg.text(path), 0
    for path in sorted(set(pkg.paths(".html") + pkg.paths(".htm"))):
        for tag in script_tags(pkg.text(path)):
            if tag.src is None and tag.body.strip():
                yield path, tag.body, tag.body_line - 1


def scan_package(
    pkg: ExtensionPackage,
    taxonomy: tuple[TaxonomyEntry, ...] = TAXONOMY,
    counting_mode: str = "code_only",
    count_manifest_permissions: bool = True,
) -> RiskReport:
    apis = [e.api for e in taxonomy]
    locations: dict[str, list[tuple[str, int]]] = {api: [] for api in apis}
    for path, source, offset in _code_units(pkg):
        for hit in find_api_hits(source, apis, counting_mode):
            locations[hit.api].append((path, hit.line + offset))
    if count_manifest_permissions and "webRequestBlocking" in locations:
        text = pkg.text(MANIFEST)
        for perm in pkg.manifest.permissions or ():
            if perm == "webRequestBlocking":
                pos = text.find('"webRequestBlocking"')
                locations["webRequestBlocking"].append((MANIFEST, text.count("\n", 0, max(pos, 0)) + 1))

    per_api = {api: ApiUsage(tuple(sorted(locs))) for api, locs in sorted(locations.items())}
    used = [e for e in taxonomy if per_api[e.api].hits]
    return RiskReport(
        per_api=per_api,
        uses_vulnerability_related=any(e.vulnerability_related for e in used),
        uses_malicious_related=any(e.malicious_related for e in used),
        findings=tuple(detect_war_injection(pkg)),
        counting_mode=counting_mode,
    )


def _war_declarations(pkg: ExtensionPackage) -> list[tuple[str, tuple[str, ...]]]:
    war = pkg.manifest.web_accessible_resources
    if war.kind == "v2_list":
        return [(r, ("<all_urls>",)) for r in war.resources]
    return [(r, e.matches) for e in war.entries for r in e.resources]


def detect_war_injection(pkg: ExtensionPackage) -> list[WarInjectionFinding]:
    """Web-accessible JS files that build a script element pointing off-extension."""
    findings = []
    seen = set()
    for pattern, matches in _war_declarations(pkg):
        pattern = posixpath.normpath(pattern.lstrip("/"))
        for path in pkg.paths(".js"):
            if path in seen or not (path == pattern or fnmatch.fnmatchcase(path, pattern)):
                continue
            js = JsFile.parse(path, pkg.text(path))
            if not script_element_lines(js) or not append_lines(js):
                continue
            for c in remote_src_assignments(js):
                findings.append(WarInjectionFinding(path, tuple(matches), (path, c.line), c.render()))
                seen.add(path)
    return sorted(findings, key=lambda f: (f.war_resource, f.injection_site))
