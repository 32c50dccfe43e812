import json
from pathlib import Path

from mv3kit.model import package_from_files

FIXTURES = Path(__file__).parent / "fixtures"
POC_ID = "gbdhhmlmcbmlkdjmdkifohnojphkddok"
POC_DIR = FIXTURES / "poc" / POC_ID


def make_pkg(files, name=None):
    """Package from ``{path: str | bytes | dict}``; dicts are dumped as JSON."""
    out = {}
    for path, body in files.items():
        if isinstance(body, dict):
            body = json.dumps(body, indent=2)
        out[path] = body.encode() if isinstance(body, str) else body
    return package_from_files(out, name)


def v2(**fields):
    return {"manifest_version": 2, "name": "t", "version": "1.0", **fields}


def v3(**fields):
    return {"manifest_version": 3, "name": "t", "version": "1.0", **fields}
