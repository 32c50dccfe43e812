"""Static approximation of the "functionally active" malicious-extension test.

A converted extension counts as functionally active only when all five
criteria hold: it has a prior abuse report, it was pulled from the store,
it carries a manual label, it converts to a loadable V3 package, and its code
reaches for a blocklisted URL.  The first three are caller-supplied facts.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from urllib.parse import urlsplit

from .converter import ConversionReport
from .errors import Diagnostic, MalformedUrl, MetadataError
from .filters import RuleSet, classify_url
from .literals import concat_runs, is_url
from .model import MANIFEST, ExtensionId, ExtensionPackage
from .patterns import JsFile, script_tags

SCHEMA_VERSION = 1

LABELS = (
    "click_scam",
    "ad_replacement",
    "user_data_analytics",
    "credentials_stealing",
    "browser_modification",
    "other",
)
LABEL_TITLES = {
    "click_scam": "Click scam",
    "ad_replacement": "Ad replacement",
    "user_data_analytics": "User data analytics",
    "credentials_stealing": "Credentials stealing",
    "browser_modification": "Browser modification",
    "other": "Other",
}


def parse_label(text: str) -> str:
    key = re.sub(r"[\s-]+", "_", text.strip().lower())
    if key not in LABELS:
        raise ValueError(f"unknown malicious label {text!r}")
    return key


@dataclass(frozen=True)
class RequestTarget:
    url: str
    file: str
    line: int
    source_kind: str  # string_literal | concatenated_literals | manifest_war_match

    def __post_init__(self):
        if not self.url.lower().startswith(("http://", "https://", "//")):
            raise ValueError(f"not an absolute or scheme-relative URL: {self.url!r}")


@dataclass(frozen=True)
class Metadata:
    has_prior_report: bool = False
    removed_from_store: bool = False
    labels: tuple[str, ...] = ()


@dataclass(frozen=True)
class ActivityVerdict:
    functionally_active: bool
    criteria: dict
    evidence: tuple[tuple[RequestTarget, str], ...] = ()
    labels: tuple[str, ...] = ()
    load_check: str = "static"
    request_check: str = "static_url_literals"

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "functionally_active": self.functionally_active,
            "criteria": dict(self.criteria),
            "labels": list(self.labels),
            "load_check": self.load_check,
            "request_check": self.request_check,
            "evidence": [
                {"url": t.url, "file": t.file, "line": t.line, "source_kind": t.source_kind, "verdict": v}
                for t, v in self.evidence
            ],
        }


CRITERIA = ("has_prior_report", "removed_from_store", "has_label", "converts_and_loads", "contacts_malicious_url")


def _js_units(pkg: ExtensionPackage):
    for path in pkg.paths(".js"):
        yield path, pkg.text(path), 0
    for path in sorted(set(pkg.paths(".html") + pkg.paths(".htm"))):
        for tag in script_tags(pkg.text(path)):
            if tag.src is None and tag.body.strip():
                yield path, tag.body, tag.body_line - 1


def _file_targets(path: str, source: str, offset: int, warnings) -> list[RequestTarget]:
    js = JsFile.parse(path, source)
    runs = concat_runs(js.tokens, js.env)
    # literals bound to a name that a resolved URL run inlines are reported through that run
    inlined = set()
    for run in runs:
        if run.resolved and len(run.operands) > 1 and is_url(run.value):
            inlined.update(js.env[op.text][1] for op in run.operands if op.kind == "name")
    out = []
    for run in runs:
        first = run.operands[0]
        if run.resolved:
            if not is_url(run.value):
                continue
            if len(run.operands) == 1 and first.index in inlined:
                continue
            kind = "string_literal" if len(run.operands) == 1 else "concatenated_literals"
            out.append(RequestTarget(run.value, path, run.line + offset, kind))
        elif first.value is not None and is_url(first.value):
            if warnings is not None:
                warnings.append(Diagnostic("partial_url", f"URL built from non-literal parts: {run.render()}",
                                           path, run.line + offset))
    return out


def _war_targets(pkg: ExtensionPackage) -> list[RequestTarget]:
    text = pkg.text(MANIFEST)
    out = []
    for entry in pkg.manifest.web_accessible_resources.entries:
        for pattern in entry.matches:
            parts = urlsplit(pattern) if "://" in pattern else None
            if not parts or parts.scheme not in ("http", "https") or not parts.hostname or "*" in parts.netloc:
                continue
            pos = text.find(pattern)
            line = text.count("\n", 0, pos) + 1 if pos >= 0 else 1
            out.append(RequestTarget(f"{parts.scheme}://{parts.netloc}/", MANIFEST, line, "manifest_war_match"))
    return out


def extract_request_targets(pkg: ExtensionPackage, warnings: list[Diagnostic] | None = None) -> list[RequestTarget]:
    targets = []
    for path, source, offset in _js_units(pkg):
        targets.extend(_file_targets(path, source, offset, warnings))
    targets.extend(_war_targets(pkg))
    unique = {(t.url, t.file, t.line): t for t in targets}
    return sorted(unique.values(), key=lambda t: (t.file, t.line, t.url))


def _absolute(url: str) -> str:
    return "https:" + url if url.startswith("//") else url


def classify(
    pkg: ExtensionPackage,
    conversion: ConversionReport,
    rs: RuleSet,
    metadata: Metadata,
) -> ActivityVerdict:
    evidence = []
    contacts = False
    for target in extract_request_targets(pkg):
        try:
            verdict = classify_url(rs, _absolute(target.url)).kind
        except MalformedUrl:
            verdict = "malformed"
        contacts = contacts or verdict == "blocked"
        evidence.append((target, verdict))
    criteria = {
        "has_prior_report": bool(metadata.has_prior_report),
        "removed_from_store": bool(metadata.removed_from_store),
        "has_label": bool(metadata.labels),
        "converts_and_loads": conversion.status == "Success" and not conversion.violations,
        "contacts_malicious_url": contacts,
    }
    return ActivityVerdict(
        functionally_active=all(criteria[c] for c in CRITERIA),
        criteria=criteria,
        evidence=tuple(evidence),
        labels=tuple(metadata.labels),
    )


# -------------------------------------------------------------- labels.csv

_TRUE = {"1", "true", "yes", "y", "t"}
_FALSE = {"0", "false", "no", "n", "f", ""}


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in _TRUE:
        return True
    if low in _FALSE:
        return False
    raise ValueError(f"not a boolean: {text!r}")


def load_labels(path) -> dict[str, Metadata]:
    """Read ``labels.csv`` (id, version, has_prior_report, removed_from_store, labels)."""
    out: dict[str, Metadata] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"id", "has_prior_report", "removed_from_store", "labels"}
        if reader.fieldnames is None or not required <= set(reader.fieldnames):
            raise MetadataError(f"{path}: expected columns {sorted(required | {'version'})}")
        for n, row in enumerate(reader, start=2):
            try:
                ext_id = str(ExtensionId(row["id"].strip()))
                labels = tuple(parse_label(x) for x in (row["labels"] or "").split(";") if x.strip())
                out[ext_id] = Metadata(_parse_bool(row["has_prior_report"]),
                                       _parse_bool(row["removed_from_store"]), labels)
            except ValueError as exc:
                raise MetadataError(f"{path}:{n}: {exc}") from exc
    return out


def label_summary(verdicts) -> dict[str, int]:
    """Functionally active extensions per label; multi-labelled ones count once per label."""
    counts = dict.fromkeys(LABELS, 0)
    for v in verdicts:
        if v.functionally_active:
            for label in set(v.labels):
                counts[label] += 1
    return counts


def format_label_summary(counts: dict[str, int]) -> str:
    return "\n".join(f"{LABEL_TITLES[k]}: {counts.get(k, 0)}" for k in LABELS) + "\n"
