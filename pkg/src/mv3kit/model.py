"""Typed view of an unpacked browser extension and its ``manifest.json``."""

from __future__ import annotations

import hashlib
import json
import os
import posixpath
import re
import zipfile
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

from . import csp
from .errors import Diagnostic, MalformedArchive, ManifestParseError, MissingManifest, WrongVersion

MANIFEST = "manifest.json"

_ID_RE = re.compile(r"^[a-p]{32}$")


@dataclass(frozen=True)
class ExtensionId:
    value: str

    def __post_init__(self):
        if not isinstance(self.value, str) or not _ID_RE.match(self.value):
            raise ValueError(f"not an extension id: {self.value!r}")

    def __str__(self) -> str:
        return self.value

    @staticmethod
    def is_valid(text: str) -> bool:
        return bool(_ID_RE.match(text))

    @classmethod
    def from_digest(cls, data: bytes) -> ExtensionId:
        """Map the first 128 bits of a SHA-256 digest onto the a-p alphabet."""
        digest = hashlib.sha256(data).hexdigest()[:32]
        return cls("".join(chr(ord("a") + int(c, 16)) for c in digest))


@dataclass(frozen=True)
class BackgroundSpec:
    kind: str = "none"  # none | scripts | page | service_worker
    scripts: tuple[str, ...] = ()
    page: str | None = None
    service_worker: str | None = None
    extra: dict = field(default_factory=dict)

    def files(self) -> tuple[str, ...]:
        if self.kind == "scripts":
            return self.scripts
        if self.kind == "page":
            return (self.page,)
        if self.kind == "service_worker":
            return (self.service_worker,)
        return ()


@dataclass(frozen=True)
class CspSpec:
    kind: str = "absent"  # absent | v2_string | v3_object
    value: Any = None

    def policies(self) -> list[tuple[str, str]]:
        """``(label, policy string)`` pairs for every policy the manifest carries."""
        if self.kind == "v2_string":
            return [("content_security_policy", self.value)]
        if self.kind == "v3_object":
            return [(f"content_security_policy.{k}", v) for k, v in self.value.items()]
        return []


@dataclass(frozen=True)
class WarEntry:
    resources: tuple[str, ...]
    matches: tuple[str, ...]
    extra: dict = field(default_factory=dict)


@dataclass(frozen=True)
class WarSpec:
    kind: str = "absent"  # absent | v2_list | v3_list
    resources: tuple[str, ...] = ()
    entries: tuple[WarEntry, ...] = ()

    def all_resources(self) -> tuple[str, ...]:
        if self.kind == "v2_list":
            return self.resources
        return tuple(r for e in self.entries for r in e.resources)


@dataclass(frozen=True)
class ContentScript:
    matches: tuple[str, ...] = ()
    js: tuple[str, ...] = ()
    css: tuple[str, ...] = ()
    extra: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Manifest:
    manifest_version: int
    name: str | None = None
    version: str | None = None
    permissions: tuple[str, ...] | None = None
    host_permissions: tuple[str, ...] | None = None
    background: BackgroundSpec = BackgroundSpec()
    action_kind: str = "none"  # browser_action | page_action | action | none
    action: dict | None = None
    content_security_policy: CspSpec = CspSpec()
    web_accessible_resources: WarSpec = WarSpec()
    content_scripts: tuple[ContentScript, ...] | None = None
    sandbox: dict | None = None
    raw_extra: dict = field(default_factory=dict)
    key_order: tuple[str, ...] = field(default=(), compare=False)
    warnings: tuple[Diagnostic, ...] = field(default=(), compare=False)


@dataclass(frozen=True)
class Violation:
    field: str
    value: Any
    rule: str


@dataclass(frozen=True)
class ExtensionPackage:
    id: ExtensionId
    version: str
    files: Mapping[str, bytes]
    manifest: Manifest
    warnings: tuple[Diagnostic, ...] = field(default=(), compare=False)

    def text(self, path: str) -> str:
        # surrogateescape keeps non-UTF-8 bytes recoverable on re-encode
        return self.files[path].decode("utf-8", errors="surrogateescape")

    def paths(self, suffix: str = "") -> list[str]:
        return sorted(p for p in self.files if p.lower().endswith(suffix))


# ---------------------------------------------------------------- parsing

_RECOGNIZED = (
    "manifest_version", "name", "version", "permissions", "host_permissions",
    "background", "browser_action", "page_action", "action",
    "content_security_policy", "web_accessible_resources", "content_scripts", "sandbox",
)
_ACTION_KEYS = ("browser_action", "page_action", "action")


def _load_json(text: str) -> tuple[Any, list[Diagnostic]]:
    warnings: list[Diagnostic] = []

    def pairs_hook(pairs):
        obj = {}
        for key, value in pairs:
            if key in obj:
                warnings.append(Diagnostic("duplicate_key", f"duplicate key {key!r}; last value kept", MANIFEST))
                del obj[key]  # last occurrence also takes the last position
            obj[key] = value
        return obj

    try:
        return json.loads(text, object_pairs_hook=pairs_hook), warnings
    except (json.JSONDecodeError, RecursionError) as exc:
        raise ManifestParseError(f"manifest is not valid JSON: {exc}") from exc


def _str_list(value, where: str) -> tuple[str, ...]:
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise ManifestParseError(f"{where} must be a list of strings")
    return tuple(value)


def _parse_background(value, version: int) -> BackgroundSpec:
    if not isinstance(value, dict):
        raise ManifestParseError("background must be an object")
    extra = {k: v for k, v in value.items() if k not in ("scripts", "page", "service_worker")}
    present = [k for k in ("scripts", "page", "service_worker") if k in value]
    if len(present) > 1:
        raise ManifestParseError(f"background declares several kinds: {present}")
    if not present:
        return BackgroundSpec(extra=extra)
    kind = present[0]
    if kind == "service_worker":
        if version == 2:
            raise ManifestParseError("background.service_worker requires manifest_version 3")
        if not isinstance(value[kind], str):
            raise ManifestParseError("background.service_worker must be a string")
        return BackgroundSpec("service_worker", service_worker=value[kind], extra=extra)
    if version == 3:
        raise ManifestParseError(f"background.{kind} is not allowed with manifest_version 3")
    if kind == "page":
        if not isinstance(value["page"], str):
            raise ManifestParseError("background.page must be a string")
        return BackgroundSpec("page", page=value["page"], extra=extra)
    return BackgroundSpec("scripts", scripts=_str_list(value["scripts"], "background.scripts"), extra=extra)


def _parse_csp(value, version: int) -> CspSpec:
    if isinstance(value, str):
        return CspSpec("v2_string", value)
    if isinstance(value, dict):
        if version == 2:
            raise ManifestParseError("object-form content_security_policy requires manifest_version 3")
        if not all(isinstance(v, str) for v in value.values()):
            raise ManifestParseError("content_security_policy values must be strings")
        return CspSpec("v3_object", dict(value))
    raise ManifestParseError("content_security_policy must be a string or an object")


def _parse_war(value, version: int) -> WarSpec:
    if not isinstance(value, list):
        raise ManifestParseError("web_accessible_resources must be a list")
    if all(isinstance(v, str) for v in value):
        return WarSpec("v2_list", resources=tuple(value))
    if version == 2 or not all(isinstance(v, dict) for v in value):
        raise ManifestParseError("web_accessible_resources mixes entry shapes or uses objects under V2")
    entries = []
    for i, entry in enumerate(value):
        resources = _str_list(entry.get("resources"), f"web_accessible_resources[{i}].resources")
        matches = _str_list(entry.get("matches"), f"web_accessible_resources[{i}].matches")
        if not resources or not matches:
            raise ManifestParseError(f"web_accessible_resources[{i}] needs non-empty resources and matches")
        extra = {k: v for k, v in entry.items() if k not in ("resources", "matches")}
        entries.append(WarEntry(resources, matches, extra))
    return WarSpec("v3_list", entries=tuple(entries))


def _parse_content_scripts(value) -> tuple[ContentScript, ...]:
    if not isinstance(value, list) or not all(isinstance(v, dict) for v in value):
        raise ManifestParseError("content_scripts must be a list of objects")
    out = []
    for i, cs in enumerate(value):
        out.append(ContentScript(
            matches=_str_list(cs.get("matches", []), f"content_scripts[{i}].matches"),
            js=_str_list(cs.get("js", []), f"content_scripts[{i}].js"),
            css=_str_list(cs.get("css", []), f"content_scripts[{i}].css"),
            extra={k: v for k, v in cs.items() if k not in ("matches", "js", "css")},
        ))
    return tuple(out)


def parse_manifest(text: str) -> Manifest:
    data, warnings = _load_json(text)
    if not isinstance(data, dict):
        raise ManifestParseError("manifest must be a JSON object")
    if "manifest_version" not in data:
        raise ManifestParseError("manifest_version is missing")
    version = data["manifest_version"]
    if isinstance(version, bool) or version not in (2, 3):
        raise ManifestParseError(f"unsupported manifest_version: {version!r}")

    kw: dict[str, Any] = {"manifest_version": version}
    for key in ("name", "version"):
        if key in data:
            if not isinstance(data[key], str):
                raise ManifestParseError(f"{key} must be a string")
            kw[key] = data[key]
    if "permissions" in data:
        kw["permissions"] = _str_list(data["permissions"], "permissions")
    if "host_permissions" in data:
        if version == 2:
            raise ManifestParseError("host_permissions requires manifest_version 3")
        kw["host_permissions"] = _str_list(data["host_permissions"], "host_permissions")
    if "background" in data:
        kw["background"] = _parse_background(data["background"], version)

    actions = [k for k in _ACTION_KEYS if k in data]
    if len(actions) > 1:
        raise ManifestParseError(f"several action keys present: {actions}")
    if actions:
        kind = actions[0]
        if kind == "action" and version == 2:
            raise ManifestParseError("action requires manifest_version 3")
        if not isinstance(data[kind], dict):
            raise ManifestParseError(f"{kind} must be an object")
        kw["action_kind"], kw["action"] = kind, dict(data[kind])

    if "content_security_policy" in data:
        kw["content_security_policy"] = _parse_csp(data["content_security_policy"], version)
    if "web_accessible_resources" in data:
        kw["web_accessible_resources"] = _parse_war(data["web_accessible_resources"], version)
    if "content_scripts" in data:
        kw["content_scripts"] = _parse_content_scripts(data["content_scripts"])
    if "sandbox" in data:
        if not isinstance(data["sandbox"], dict):
            raise ManifestParseError("sandbox must be an object")
        kw["sandbox"] = dict(data["sandbox"])

    kw["raw_extra"] = {k: v for k, v in data.items() if k not in _RECOGNIZED}
    kw["key_order"] = tuple(data)
    kw["warnings"] = tuple(warnings)
    return Manifest(**kw)


# ----------------------------------------------------------- serialization

def _recognized_values(m: Manifest) -> dict[str, Any]:
    out: dict[str, Any] = {"manifest_version": m.manifest_version}
    if m.name is not None:
        out["name"] = m.name
    if m.version is not None:
        out["version"] = m.version
    if m.permissions is not None:
        out["permissions"] = list(m.permissions)
    if m.host_permissions is not None:
        out["host_permissions"] = list(m.host_permissions)
    bg = m.background
    if bg.kind != "none" or bg.extra:
        body: dict[str, Any] = {}
        if bg.kind == "scripts":
            body["scripts"] = list(bg.scripts)
        elif bg.kind == "page":
            body["page"] = bg.page
        elif bg.kind == "service_worker":
            body["service_worker"] = bg.service_worker
        body.update(bg.extra)
        out["background"] = body
    if m.action_kind != "none":
        out[m.action_kind] = dict(m.action or {})
    c = m.content_security_policy
    if c.kind == "v2_string":
        out["content_security_policy"] = c.value
    elif c.kind == "v3_object":
        out["content_security_policy"] = dict(c.value)
    w = m.web_accessible_resources
    if w.kind == "v2_list":
        out["web_accessible_resources"] = list(w.resources)
    elif w.kind == "v3_list":
        out["web_accessible_resources"] = [
            {"resources": list(e.resources), "matches": list(e.matches), **e.extra} for e in w.entries
        ]
    if m.content_scripts is not None:
        scripts = []
        for cs in m.content_scripts:
            entry: dict[str, Any] = {"matches": list(cs.matches)}
            if cs.js:
                entry["js"] = list(cs.js)
            if cs.css:
                entry["css"] = list(cs.css)
            entry.update(cs.extra)
            scripts.append(entry)
        out["content_scripts"] = scripts
    if m.sandbox is not None:
        out["sandbox"] = dict(m.sandbox)
    return out


def manifest_to_dict(m: Manifest) -> dict[str, Any]:
    """Rebuild the JSON object, keeping the original key order where known."""
    values = _recognized_values(m)
    values.update(m.raw_extra)
    ordered = {k: values[k] for k in m.key_order if k in values}
    for k in _RECOGNIZED:
        if k in values and k not in ordered:
            ordered[k] = values[k]
    for k in values:
        ordered.setdefault(k, values[k])
    return ordered


def manifest_to_json(m: Manifest) -> str:
    return json.dumps(manifest_to_dict(m), indent=2, ensure_ascii=False) + "\n"


# --------------------------------------------------------------- validation

def is_match_pattern(perm: str) -> bool:
    return perm == "<all_urls>" or "://" in perm


def validate_v3(m: Manifest) -> list[Violation]:
    if m.manifest_version != 3:
        raise WrongVersion(f"validate_v3 needs manifest_version 3, got {m.manifest_version}")
    out = []
    for perm in m.permissions or ():
        if is_match_pattern(perm):
            out.append(Violation("permissions", perm, "host match patterns belong in host_permissions"))
    if m.background.kind in ("scripts", "page"):
        value = list(m.background.scripts) if m.background.kind == "scripts" else m.background.page
        out.append(Violation("background", value, f"background {m.background.kind} replaced by service_worker"))
    if m.action_kind in ("browser_action", "page_action"):
        out.append(Violation(m.action_kind, m.action, "browser_action/page_action replaced by action"))

    c = m.content_security_policy
    if c.kind == "v2_string":
        out.append(Violation("content_security_policy", c.value, "CSP must be an object keyed by extension_pages"))
    elif c.kind == "v3_object":
        policy = c.value.get("extension_pages")
        if policy is not None:
            for directive, src in csp.disallowed_sources(policy):
                rule = "unsafe-eval is not permitted" if src.lower() == "'unsafe-eval'" else (
                    "only 'self', 'none', localhost and 127.0.0.1 sources are permitted")
                out.append(Violation("content_security_policy", f"{directive} {src}", rule))
    if m.sandbox is not None and isinstance(m.sandbox.get("content_security_policy"), str):
        for directive, src in csp.disallowed_sources(m.sandbox["content_security_policy"]):
            out.append(Violation("sandbox.content_security_policy", f"{directive} {src}",
                                 "only 'self', 'none', localhost and 127.0.0.1 sources are permitted"))

    w = m.web_accessible_resources
    if w.kind == "v2_list":
        out.append(Violation("web_accessible_resources", list(w.resources),
                             "entries must be objects with resources and matches"))
    elif w.kind == "v3_list":
        for i, e in enumerate(w.entries):
            if not e.resources or not e.matches:
                out.append(Violation(f"web_accessible_resources[{i}]", e.resources,
                                     "resources and matches must be non-empty"))
    return out


# ------------------------------------------------------------------ loading

def _normalize_member(name: str) -> str:
    if name.startswith("/") or "\\" in name or re.match(r"^[A-Za-z]:", name):
        raise MalformedArchive(f"absolute or non-posix member path: {name!r}")
    parts = name.split("/")
    if ".." in parts:
        raise MalformedArchive(f"path escapes the package root: {name!r}")
    norm = posixpath.normpath(name)
    if norm in (".", ""):
        raise MalformedArchive(f"empty member path: {name!r}")
    return norm


def _read_directory(root: Path) -> dict[str, bytes]:
    files = {}
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames.sort()
        for name in sorted(filenames):
            full = Path(dirpath) / name
            if full.is_symlink() or not full.is_file():
                continue
            rel = full.relative_to(root).as_posix()
            files[_normalize_member(rel)] = full.read_bytes()
    return files


def _read_zip(path: Path) -> dict[str, bytes]:
    try:
        with zipfile.ZipFile(path) as zf:
            files = {}
            for info in zf.infolist():
                if info.is_dir():
                    continue
                name = _normalize_member(info.filename)
                if name in files:
                    raise MalformedArchive(f"duplicate archive member: {name!r}")
                files[name] = zf.read(info)
            return files
    except (zipfile.BadZipFile, OSError, EOFError) as exc:
        raise MalformedArchive(f"cannot read {path}: {exc}") from exc


def package_from_files(files: Mapping[str, bytes], name: str | None = None) -> ExtensionPackage:
    """Build a package from an in-memory file map."""
    files = {_normalize_member(p): bytes(b) for p, b in files.items()}
    if MANIFEST not in files:
        raise MissingManifest("manifest.json not found at the package root")
    manifest = parse_manifest(files[MANIFEST].decode("utf-8-sig", errors="replace"))
    if name and ExtensionId.is_valid(name):
        ext_id = ExtensionId(name)
    else:
        h = hashlib.sha256()
        for path in sorted(files):
            h.update(path.encode() + b"\0" + hashlib.sha256(files[path]).digest())
        ext_id = ExtensionId.from_digest(h.digest())
    return ExtensionPackage(
        id=ext_id,
        version=manifest.version or "0",
        files=dict(sorted(files.items())),
        manifest=manifest,
        warnings=manifest.warnings,
    )


def load_package(root: str | os.PathLike) -> ExtensionPackage:
    root = Path(root)
    if root.is_dir():
        files = _read_directory(root)
        name = root.name
    elif root.is_file():
        files = _read_zip(root)
        name = root.stem
    else:
        raise FileNotFoundError(root)
    return package_from_files(files, name)


def with_files(pkg: ExtensionPackage, files: Mapping[str, bytes], manifest: Manifest) -> ExtensionPackage:
    return replace(pkg, files=dict(sorted(files.items())), manifest=manifest, version=manifest.version or pkg.version)
