"""Rule-based Manifest V2 to V3 conversion.

Every rule is a manifest field rewrite or a member-chain rename; nothing is
semantically migrated.  Anything V3 cannot express is reported as a Blocker
and fails the package, whatever its intent.
"""

from __future__ import annotations

import json
import posixpath
from dataclasses import asdict, dataclass, field, replace

from . import csp
from .errors import WrongVersion
from .lexer import PUNCTUATION, call_arguments, extract_chains, loc_changed, next_significant, tokenize
from .model import (
    MANIFEST, BackgroundSpec, CspSpec, ExtensionPackage, Manifest, Violation, WarEntry, WarSpec,
    is_match_pattern, manifest_to_json, validate_v3, with_files,
)
from .patterns import (
    JsFile, blocking_listener_lines, has_code_property, is_remote, remote_src_assignments,
    script_element_lines, script_tags, string_code_lines,
)

GENERATED_SW = "__generated_sw.js"
SCHEMA_VERSION = 1

BLOCKER_KINDS = (
    "remote_code_reference",
    "string_code_execution",
    "blocking_web_request",
    "dom_in_background",
    "csp_unconvertible",
)

# chrome.extension.* members with a chrome.runtime.* replacement
EXTENSION_TO_RUNTIME = {
    "sendMessage": "sendMessage",
    "onMessage": "onMessage",
    "connect": "connect",
    "onConnect": "onConnect",
    "getURL": "getURL",
    "sendRequest": "sendMessage",
    "onRequest": "onMessage",
}
TABS_TO_SCRIPTING = ("executeScript", "insertCSS")


@dataclass(frozen=True)
class Substitution:
    file: str
    line: int
    kind: str  # manifest_field | api_rename
    before: str
    after: str
    column: int = 0
    severity: str = "info"  # info | note | warning
    note: str = ""

    def __post_init__(self):
        if self.before == self.after:
            raise ValueError("a substitution must change something")


@dataclass(frozen=True)
class Blocker:
    file: str
    line: int | None
    kind: str
    detail: str

    def __post_init__(self):
        if self.kind not in BLOCKER_KINDS:
            raise ValueError(f"unknown blocker kind {self.kind!r}")


@dataclass(frozen=True)
class ConversionReport:
    status: str  # Success | Fail
    substitutions: tuple[Substitution, ...] = ()
    blockers: tuple[Blocker, ...] = ()
    loc_changed: int = 0
    generated_files: tuple[str, ...] = ()
    violations: tuple[Violation, ...] = ()
    file_loc: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "status": self.status,
            "loc_changed": self.loc_changed,
            "file_loc": dict(sorted(self.file_loc.items())),
            "generated_files": list(self.generated_files),
            "substitutions": [asdict(s) for s in self.substitutions],
            "blockers": [asdict(b) for b in self.blockers],
            "violations": [asdict(v) for v in self.violations],
        }

    @classmethod
    def from_dict(cls, data: dict) -> ConversionReport:
        return cls(
            status=data["status"],
            substitutions=tuple(Substitution(**s) for s in data.get("substitutions", ())),
            blockers=tuple(Blocker(**b) for b in data.get("blockers", ())),
            loc_changed=data.get("loc_changed", 0),
            generated_files=tuple(data.get("generated_files", ())),
            violations=tuple(Violation(**v) for v in data.get("violations", ())),
            file_loc=dict(data.get("file_loc", {})),
        )


def _sort_subs(subs):
    return tuple(sorted(subs, key=lambda s: (s.file, s.line, s.column, s.kind, s.before, s.after)))


def _sort_blockers(blockers):
    unique = dict.fromkeys(blockers)
    return tuple(sorted(unique, key=lambda b: (b.file, b.line or 0, b.kind, b.detail)))


# ---------------------------------------------------------------- manifest

def _line_finder(text: str | None):
    def line_of(key: str) -> int:
        if not text:
            return 1
        pos = text.find(f'"{key}"')
        return text.count("\n", 0, pos) + 1 if pos >= 0 else 1
    return line_of


def _filter_csp_field(policy, label, line, subs):
    new_policy, dropped = csp.filter_policy(policy)
    for directive, src in dropped:
        subs.append(Substitution(MANIFEST, line, "manifest_field", f"{label}: {directive} {src}",
                                 f"{label}: {directive} (dropped)", note="dropped source"))
    return new_policy


def convert_manifest(m: Manifest, source_text: str | None = None):
    """Return ``(v3 manifest, substitutions, blockers)`` for a V2 manifest."""
    if m.manifest_version != 2:
        raise WrongVersion(f"convert_manifest needs manifest_version 2, got {m.manifest_version}")
    line_of = _line_finder(source_text)
    subs: list[Substitution] = []
    blockers: list[Blocker] = []
    order = list(m.key_order) or ["manifest_version"]
    changes: dict = {"manifest_version": 3}

    def sub(key, before, after, **kw):
        subs.append(Substitution(MANIFEST, line_of(key), "manifest_field", before, after, **kw))

    sub("manifest_version", "manifest_version: 2", "manifest_version: 3")

    if m.permissions:
        moved = [p for p in m.permissions if is_match_pattern(p)]
        if moved:
            changes["permissions"] = tuple(p for p in m.permissions if not is_match_pattern(p))
            changes["host_permissions"] = tuple(moved)
            for p in moved:
                sub("permissions", f"permissions: {p}", f"host_permissions: {p}")
            if "permissions" in order and "host_permissions" not in order:
                order.insert(order.index("permissions") + 1, "host_permissions")
        if "webRequestBlocking" in m.permissions:
            blockers.append(Blocker(MANIFEST, line_of("webRequestBlocking"), "blocking_web_request",
                                    "permission webRequestBlocking has no V3 equivalent"))

    bg = m.background
    extra = {k: v for k, v in bg.extra.items() if k != "persistent"}
    if "persistent" in bg.extra:
        sub("persistent", f"background.persistent: {json.dumps(bg.extra['persistent'])}",
            "background.persistent: (removed)")
    if bg.kind == "scripts":
        sub("background", f"background.scripts: {json.dumps(list(bg.scripts))}",
            f"background.service_worker: {GENERATED_SW}")
    elif bg.kind == "page":
        sub("background", f"background.page: {bg.page}", f"background.service_worker: {GENERATED_SW}")
    if bg.kind in ("scripts", "page"):
        changes["background"] = BackgroundSpec("service_worker", service_worker=GENERATED_SW, extra=extra)
    elif extra != bg.extra:
        changes["background"] = replace(bg, extra=extra)

    if m.action_kind in ("browser_action", "page_action"):
        sub(m.action_kind, m.action_kind, "action")
        changes["action_kind"] = "action"
        if m.action_kind in order:
            order[order.index(m.action_kind)] = "action"

    policy = m.content_security_policy
    if policy.kind == "v2_string":
        new_policy = _filter_csp_field(policy.value, "content_security_policy",
                                       line_of("content_security_policy"), subs)
        sub("content_security_policy", f"content_security_policy: {policy.value}",
            f"content_security_policy.extension_pages: {new_policy}")
        changes["content_security_policy"] = CspSpec("v3_object", {"extension_pages": new_policy})

    war = m.web_accessible_resources
    if war.kind == "v2_list":
        entries = (WarEntry(war.resources, ("<all_urls>",)),) if war.resources else ()
        changes["web_accessible_resources"] = WarSpec("v3_list", entries=entries)
        sub("web_accessible_resources", f"web_accessible_resources: {json.dumps(list(war.resources))}",
            'web_accessible_resources: [{"resources": [...], "matches": ["<all_urls>"]}]',
            severity="warning", note="resources now exposed to every site; narrow matches by hand")

    if m.sandbox is not None and isinstance(m.sandbox.get("content_security_policy"), str):
        old = m.sandbox["content_security_policy"]
        new = _filter_csp_field(old, "sandbox.content_security_policy", line_of("sandbox"), subs)
        if new != old:
            changes["sandbox"] = {**m.sandbox, "content_security_policy": new}

    changes["key_order"] = tuple(order)
    return replace(m, **changes), subs, blockers


# ------------------------------------------------------------- JS rewrite

def _line_start(source: str, pos: int) -> int:
    return source.rfind("\n", 0, pos) + 1


def rewrite_api_calls(source: str, path: str = ""):
    """Rename deprecated chrome.* member chains in code context.

    Returns ``(new_source, substitutions, blockers)``.
    """
    tokens = tokenize(source)
    edits: list[tuple[int, int, str]] = []
    subs: list[Substitution] = []
    blockers: list[Blocker] = []

    for ch in extract_chains(tokens):
        segs = ch.segments
        if ch.leading_dot or len(segs) < 2 or segs[0] != "chrome":
            continue
        idx = ch.token_indices
        renames: dict[int, str] = {}
        note = ""
        severity = "info"
        if segs[1].lower() == "browseraction":
            renames[1] = "action"
        elif segs[1] == "extension" and len(segs) >= 3 and segs[2] in EXTENSION_TO_RUNTIME:
            renames[1] = "runtime"
            if EXTENSION_TO_RUNTIME[segs[2]] != segs[2]:
                renames[2] = EXTENSION_TO_RUNTIME[segs[2]]
        elif segs[1] == "tabs" and len(segs) >= 3 and segs[2] in TABS_TO_SCRIPTING:
            renames[1] = "scripting"
            severity, note = "note", "argument shape not migrated; check tab id and options by hand"
            if segs[2] == "executeScript":
                j = next_significant(tokens, idx[-1])
                if j is not None and tokens[j].kind == PUNCTUATION and tokens[j].text == "(":
                    if has_code_property(tokens, call_arguments(tokens, j)):
                        blockers.append(Blocker(path, ch.line, "string_code_execution",
                                                "executeScript with a code string"))
        if not renames:
            continue
        lo, hi = 1, 2 if segs[1] in ("tabs", "extension") else 1
        start, end = tokens[idx[lo]].span[0], tokens[idx[hi]].span[1]
        pieces = []
        cursor = start
        for k in range(lo, hi + 1):
            tok = tokens[idx[k]]
            pieces.append(source[cursor:tok.span[0]])
            pieces.append(renames.get(k, tok.text))
            cursor = tok.span[1]
        after = "".join(pieces)
        before = source[start:end]
        edits.append((start, end, after))
        subs.append(Substitution(path, tokens[idx[lo]].line, "api_rename", before, after,
                                 column=start - _line_start(source, start), severity=severity, note=note))

    out = []
    cursor = 0
    for start, end, text in sorted(edits):
        out.append(source[cursor:start])
        out.append(text)
        cursor = end
    out.append(source[cursor:])
    return "".join(out), subs, blockers


def replay(source: str, subs) -> str:
    """Apply substitutions' before->after at their recorded positions."""
    lines = source.splitlines(keepends=True)
    offsets = [0]
    for line in lines:
        offsets.append(offsets[-1] + len(line))
    text = source
    for s in sorted(subs, key=lambda s: (s.line, s.column), reverse=True):
        pos = offsets[s.line - 1] + s.column
        if text[pos:pos + len(s.before)] != s.before:
            raise ValueError(f"substitution does not match source at {s.line}:{s.column}")
        text = text[:pos] + s.after + text[pos + len(s.before):]
    return text


# ---------------------------------------------------------------- blockers

def background_files(pkg: ExtensionPackage) -> list[str]:
    """Script files that run in the background context."""
    bg = pkg.manifest.background
    if bg.kind == "scripts":
        return [posixpath.normpath(p.lstrip("/")) for p in bg.scripts]
    if bg.kind == "service_worker":
        return [posixpath.normpath(bg.service_worker.lstrip("/"))]
    if bg.kind == "page":
        page = posixpath.normpath(bg.page.lstrip("/"))
        if page not in pkg.files:
            return []
        base = posixpath.dirname(page)
        return [posixpath.normpath(posixpath.join(base, t.src)) if not t.src.startswith("/")
                else posixpath.normpath(t.src.lstrip("/"))
                for t in script_tags(pkg.text(page)) if t.src and not is_remote(t.src)]
    return []


def _dom_lines(js: JsFile) -> list[int]:
    lines = []
    for ch in js.chains:
        if ch.leading_dot:
            continue
        segs = ch.segments
        if (segs[0] == "document" and len(segs) > 1) or segs[:2] == ("window", "document"):
            lines.append(ch.line)
    return sorted(set(lines))


def detect_blockers(pkg: ExtensionPackage) -> list[Blocker]:
    out: list[Blocker] = []
    m = pkg.manifest
    if "webRequestBlocking" in (m.permissions or ()):
        line = _line_finder(pkg.text(MANIFEST))("webRequestBlocking")
        out.append(Blocker(MANIFEST, line, "blocking_web_request",
                           "permission webRequestBlocking has no V3 equivalent"))

    for path in pkg.paths(".html") + pkg.paths(".htm"):
        for tag in script_tags(pkg.text(path)):
            if tag.src and is_remote(tag.src):
                out.append(Blocker(path, tag.line, "remote_code_reference", f"<script src={tag.src}>"))

    bg_files = set(background_files(pkg))
    for path in pkg.paths(".js"):
        js = JsFile.parse(path, pkg.text(path))
        if script_element_lines(js):
            for c in remote_src_assignments(js):
                out.append(Blocker(path, c.line, "remote_code_reference", f"script src = {c.render()}"))
        for line, what in string_code_lines(js):
            out.append(Blocker(path, line, "string_code_execution", f"{what}(...) executes a string"))
        for line in blocking_listener_lines(js):
            out.append(Blocker(path, line, "blocking_web_request", 'webRequest listener with "blocking"'))
        if path in bg_files:
            for line in _dom_lines(js):
                out.append(Blocker(path, line, "dom_in_background", "document access in a background script"))
    return list(_sort_blockers(out))


# ----------------------------------------------------------------- package

def service_worker_loader(scripts) -> str:
    body = ",\n".join(f"  {json.dumps(s)}" for s in scripts)
    return (
        "// Generated service worker: loads the former background scripts in order.\n"
        f"importScripts(\n{body}\n);\n"
    )


def convert_package(pkg: ExtensionPackage):
    """Return ``(v3 package, ConversionReport)``."""
    if pkg.manifest.manifest_version != 2:
        raise WrongVersion("package is not a Manifest V2 extension")
    manifest_text = pkg.text(MANIFEST)
    new_manifest, subs, blockers = convert_manifest(pkg.manifest, manifest_text)
    files = dict(pkg.files)
    generated: list[str] = []

    bg = pkg.manifest.background
    if bg.kind in ("scripts", "page"):
        scripts = list(bg.scripts)
        if bg.kind == "page":
            page = posixpath.normpath(bg.page.lstrip("/"))
            tags = script_tags(pkg.text(page)) if page in pkg.files else []
            base = posixpath.dirname(page)
            scripts = []
            for n, tag in enumerate(tags):
                if tag.src:
                    if not is_remote(tag.src):
                        scripts.append(posixpath.normpath(posixpath.join(base, tag.src)))
                elif tag.body.strip():
                    name = f"__generated_bg_inline_{n}.js"
                    files[name] = tag.body.encode("utf-8", errors="surrogateescape")
                    generated.append(name)
                    scripts.append(name)
        files[GENERATED_SW] = service_worker_loader(scripts).encode()
        generated.append(GENERATED_SW)

    file_loc = {}
    for path in pkg.paths(".js"):
        text = pkg.text(path)
        new_text, s, b = rewrite_api_calls(text, path)
        subs.extend(s)
        blockers.extend(b)
        if new_text != text:
            files[path] = new_text.encode("utf-8", errors="surrogateescape")
            file_loc[path] = loc_changed(text, new_text)

    blockers.extend(detect_blockers(pkg))

    had_unsafe_eval = any(
        csp.has_unsafe_eval(p) for _, p in pkg.manifest.content_security_policy.policies()
    )
    if had_unsafe_eval:
        for path in pkg.paths(".js"):
            for line, what in string_code_lines(JsFile.parse(path, pkg.text(path))):
                blockers.append(Blocker(path, line, "csp_unconvertible",
                                        f"'unsafe-eval' dropped but {what} is used"))

    files[MANIFEST] = manifest_to_json(new_manifest).encode()
    violations = tuple(validate_v3(new_manifest))
    blockers_t = _sort_blockers(blockers)
    report = ConversionReport(
        status="Fail" if blockers_t or violations else "Success",
        substitutions=_sort_subs(subs),
        blockers=blockers_t,
        loc_changed=sum(file_loc.values()),
        generated_files=tuple(sorted(generated)),
        violations=violations,
        file_loc=file_loc,
    )
    return with_files(pkg, files, new_manifest), report


def assess_v3(pkg: ExtensionPackage) -> ConversionReport:
    """Load check for a package that already targets V3.

    Blockers describe what a V2 to V3 conversion cannot carry over, so none
    apply here; only manifest validity decides the status.
    """
    violations = tuple(validate_v3(pkg.manifest))
    return ConversionReport(status="Fail" if violations else "Success", violations=violations)
