import io
import json
import zipfile

import pytest

from helpers import POC_DIR, make_pkg, v2, v3
from mv3kit.errors import MalformedArchive, ManifestParseError, MissingManifest, WrongVersion
from mv3kit.model import (
    ExtensionId, load_package, manifest_to_json, package_from_files, parse_manifest, validate_v3,
)


def test_extension_id_alphabet():
    assert ExtensionId.is_valid("a" * 32)
    assert not ExtensionId.is_valid("a" * 31)
    assert not ExtensionId.is_valid("q" * 32)
    assert not ExtensionId.is_valid("A" * 32)
    with pytest.raises(ValueError):
        ExtensionId("z" * 32)


def test_placeholder_id_is_deterministic_and_well_formed():
    a = make_pkg({"manifest.json": v2()})
    b = make_pkg({"manifest.json": v2()})
    c = make_pkg({"manifest.json": v2(name="other")})
    assert a.id == b.id != c.id
    assert ExtensionId.is_valid(str(a.id))


def test_minimal_directory(tmp_path):
    (tmp_path / "manifest.json").write_text('{"manifest_version":2,"name":"x","version":"1.0"}')
    pkg = load_package(tmp_path)
    assert not pkg.manifest.content_scripts
    assert pkg.manifest.background.kind == "none"
    assert pkg.version == "1.0"


def test_zip_with_listing_manifest(tmp_path):
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w") as zf:
        for p in POC_DIR.rglob("*"):
            if p.is_file():
                zf.write(p, p.relative_to(POC_DIR).as_posix())
    archive = tmp_path / "poc.zip"
    archive.write_bytes(buf.getvalue())
    war = load_package(archive).manifest.web_accessible_resources
    assert war.kind == "v3_list"
    assert war.entries[0].resources == ("src/injects_3rd_party.js",)
    assert war.entries[0].matches == ("https://*/*",)


def test_directory_without_manifest(tmp_path):
    (tmp_path / "a.js").write_text("x")
    with pytest.raises(MissingManifest):
        load_package(tmp_path)


def test_unreadable_zip(tmp_path):
    bad = tmp_path / "bad.zip"
    bad.write_bytes(b"not a zip")
    with pytest.raises(MalformedArchive):
        load_package(bad)


@pytest.mark.parametrize("member", ["../evil.js", "/abs.js", "a/../../b.js", "a\\b.js"])
def test_adversarial_paths_rejected(member):
    with pytest.raises(MalformedArchive):
        package_from_files({"manifest.json": json.dumps(v2()).encode(), member: b""})


def test_zip_slip_rejected(tmp_path):
    archive = tmp_path / "slip.zip"
    with zipfile.ZipFile(archive, "w") as zf:
        zf.writestr("manifest.json", json.dumps(v2()))
        zf.writestr("../../etc/x", "boom")
    with pytest.raises(MalformedArchive):
        load_package(archive)


def test_background_variants():
    sw = parse_manifest(json.dumps(v3(background={"service_worker": "sw.js"})))
    assert sw.background.kind == "service_worker" and sw.background.service_worker == "sw.js"
    scripts = parse_manifest(json.dumps(v2(background={"scripts": ["a.js", "b.js"]})))
    assert scripts.background.kind == "scripts" and scripts.background.scripts == ("a.js", "b.js")


@pytest.mark.parametrize("text", [
    '{"manifest_version":4,"name":"x","version":"1"}',
    '{"name":"x"}',
    "not json",
    "[1, 2]",
    '{"manifest_version":3,"background":{"scripts":["a.js"]}}',
    '{"manifest_version":2,"background":{"service_worker":"sw.js"}}',
    '{"manifest_version":2,"host_permissions":["https://*/*"]}',
    '{"manifest_version":3,"web_accessible_resources":[{"resources":[],"matches":["<all_urls>"]}]}',
])
def test_parse_errors(text):
    with pytest.raises(ManifestParseError):
        parse_manifest(text)


def test_csp_shapes():
    assert parse_manifest(json.dumps(v2(content_security_policy="script-src 'self'"))).content_security_policy.kind == "v2_string"
    m = parse_manifest(json.dumps(v3(content_security_policy={"extension_pages": "script-src 'self'"})))
    assert m.content_security_policy.kind == "v3_object"


def test_unknown_fields_preserved_verbatim():
    text = json.dumps(v2(vendor_thing={"b": [1, 2.5, None], "a": "é"}, minimum_chrome_version="88"))
    m = parse_manifest(text)
    again = json.loads(manifest_to_json(m))
    assert again["vendor_thing"] == {"b": [1, 2.5, None], "a": "é"}
    assert list(again) == list(json.loads(text))


def test_duplicate_keys_last_wins_with_warning():
    m = parse_manifest('{"manifest_version":2,"name":"a","name":"b","version":"1"}')
    assert m.name == "b"
    assert [w.code for w in m.warnings] == ["duplicate_key"]


def test_round_trip_is_stable():
    text = (POC_DIR / "manifest.json").read_text()
    m = parse_manifest(text)
    assert parse_manifest(manifest_to_json(m)) == m


def test_validate_v3_listing_manifest_clean():
    assert validate_v3(parse_manifest((POC_DIR / "manifest.json").read_text())) == []


def test_validate_v3_unsafe_eval():
    m = parse_manifest(json.dumps(v3(content_security_policy={"extension_pages": "script-src 'self' 'unsafe-eval'"})))
    violations = validate_v3(m)
    assert len(violations) == 1
    assert violations[0].field == "content_security_policy"
    assert "unsafe-eval" in violations[0].rule


def test_validate_v3_remote_source_and_match_pattern_permission():
    m = parse_manifest(json.dumps(v3(
        permissions=["storage", "https://*/*"],
        content_security_policy={"extension_pages": "script-src 'self' https://cdn.x.com"},
    )))
    assert {v.field for v in validate_v3(m)} == {"permissions", "content_security_policy"}


def test_validate_v3_allows_localhost():
    m = parse_manifest(json.dumps(v3(content_security_policy={
        "extension_pages": "script-src 'self' http://localhost:8080 http://127.0.0.1; object-src 'none'"})))
    assert validate_v3(m) == []


def test_validate_v3_rejects_v2():
    with pytest.raises(WrongVersion):
        validate_v3(parse_manifest(json.dumps(v2())))
