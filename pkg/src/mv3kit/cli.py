"""``mv3kit convert|scan|classify|stats``.

Exit codes: 0 ok, 2 I/O error, 3 some conversion failed, 4 bad config or data.
Structured logs go to stderr; stdout only lists the report files written.
"""

from __future__ import annotations

import argparse
import json
import logging
import shutil
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .classifier import Metadata, classify, format_label_summary, label_summary, load_labels
from .converter import assess_v3, convert_package
from .errors import Mv3KitError, MalformedArchive, MetadataError
from .filters import RuleSet, load_blocklist
from .model import MANIFEST, load_package
from .scanner import scan_package
from . import stats

EXIT_OK, EXIT_IO, EXIT_FAIL, EXIT_CONFIG = 0, 2, 3, 4
ARCHIVE_SUFFIXES = (".zip", ".crx")

log = logging.getLogger("mv3kit")


class _JsonFormatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        entry = {"level": record.levelname.lower(), "event": record.getMessage()}
        entry.update(getattr(record, "fields", {}))
        return json.dumps(entry, sort_keys=True)


def _setup_logging(verbose: bool) -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(_JsonFormatter())
    log.handlers[:] = [handler]
    log.setLevel(logging.DEBUG if verbose else logging.INFO)
    log.propagate = False


def _log(level: int, event: str, **fields) -> None:
    log.log(level, event, extra={"fields": fields})


@dataclass(frozen=True)
class RunConfig:
    inputs: tuple[Path, ...]
    output_dir: Path
    blocklists: tuple[Path, ...] = ()
    labels_file: Path | None = None
    metadata_file: Path | None = None
    parallelism: int = 1
    counting_mode: str = "code_only"
    fail_fast: bool = False

    def __post_init__(self):
        if self.parallelism < 1:
            raise ValueError("--jobs must be at least 1")
        out = self.output_dir.resolve()
        for p in self.inputs:
            if p.exists() and p.resolve() == out:
                raise ValueError(f"output directory {out} is also an input")


class ConfigError(Exception):
    pass


# ------------------------------------------------------------------ inputs

def _is_package(path: Path) -> bool:
    return (path.is_dir() and (path / MANIFEST).is_file()) or (
        path.is_file() and path.suffix.lower() in ARCHIVE_SUFFIXES)


def discover(inputs) -> list[tuple[str, Path]]:
    """Expand inputs into ``(name, path)`` pairs; a directory without a manifest is a corpus."""
    found: list[Path] = []
    for path in inputs:
        if not path.exists():
            raise FileNotFoundError(path)
        if _is_package(path):
            found.append(path)
        elif path.is_dir():
            found.extend(child for child in sorted(path.iterdir()) if _is_package(child)
                         or (child.is_dir() and not child.name.startswith(".")))
        else:
            found.append(path)
    named, used = [], set()
    for path in found:
        base = path.stem if path.is_file() else path.name
        name, n = base, 2
        while name in used:
            name, n = f"{base}-{n}", n + 1
        used.add(name)
        named.append((name, path))
    return named


# ------------------------------------------------------------------ workers

def _dump(data: dict) -> bytes:
    return (json.dumps(data, indent=2, ensure_ascii=False) + "\n").encode()


@dataclass
class Outcome:
    name: str
    files: dict = field(default_factory=dict)  # relative output path -> bytes
    error: str | None = None
    error_kind: str | None = None
    status: str | None = None
    part: stats.CorpusAggregate | None = None
    verdict: object = None


def _convert_or_assess(pkg):
    if pkg.manifest.manifest_version == 2:
        return convert_package(pkg)
    return pkg, assess_v3(pkg)


def _load(name: str, path: Path):
    try:
        return load_package(path), None
    except (OSError, MalformedArchive) as exc:
        return None, Outcome(name, error=str(exc), error_kind="io")
    except Mv3KitError as exc:
        return None, Outcome(name, error=str(exc), error_kind="data")


def _work_convert(name: str, path: Path, _args) -> Outcome:
    pkg, failed = _load(name, path)
    if failed:
        return failed
    if pkg.manifest.manifest_version != 2:
        return Outcome(name, error="input already targets Manifest V3", error_kind="data")
    v3, report = convert_package(pkg)
    files = {f"{name}.v3/{p}": data for p, data in v3.files.items()}
    files[f"{name}/conversion_report.json"] = _dump(report.to_dict())
    return Outcome(name, files, status=report.status)


def _work_scan(name: str, path: Path, args) -> Outcome:
    counting_mode, labels = args
    pkg, failed = _load(name, path)
    if failed:
        return failed
    risk = scan_package(pkg, counting_mode=counting_mode)
    _, report = _convert_or_assess(pkg)
    meta = labels.get(str(pkg.id), labels.get(name)) if labels else None
    part = stats.aggregate_one(risk, report, meta.labels if meta else ())
    return Outcome(name, {f"{name}/risk_report.json": _dump(risk.to_dict())}, status=report.status, part=part)


def _work_classify(name: str, path: Path, args) -> Outcome:
    rs, meta = args
    pkg, failed = _load(name, path)
    if failed:
        return failed
    converted, report = _convert_or_assess(pkg)
    verdict = classify(converted, report, rs, meta)
    files = {
        f"{name}/conversion_report.json": _dump(report.to_dict()),
        f"{name}/verdict.json": _dump(verdict.to_dict()),
    }
    return Outcome(name, files, status=report.status, verdict=verdict)


def _run(worker, jobs: list[tuple[str, Path, object]], config: RunConfig) -> list[Outcome]:
    """Run ``worker`` over ``jobs``; results come back in job order whatever the pool size."""
    def stop(o: Outcome) -> bool:
        return config.fail_fast and (o.error is not None or o.status == "Fail")

    results: list[Outcome] = []
    if config.parallelism == 1 or len(jobs) < 2:
        for job in jobs:
            results.append(worker(*job))
            if stop(results[-1]):
                break
        return results
    with ProcessPoolExecutor(max_workers=config.parallelism) as pool:
        futures = [pool.submit(worker, *job) for job in jobs]
        for fut in futures:
            results.append(fut.result())
            if stop(results[-1]):
                for f in futures:
                    f.cancel()
                break
    return results


def _write(out: Path, rel: str, data: bytes) -> Path:
    target = out / rel
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_bytes(data)
    return target


def _emit(out: Path, outcomes: list[Outcome], report_names: tuple[str, ...]) -> None:
    for o in outcomes:
        if o.error:
            _log(logging.ERROR, "package_error", package=o.name, kind=o.error_kind, error=o.error)
            _write(out, f"{o.name}/error.json", _dump({"schema_version": 1, "error": o.error, "kind": o.error_kind}))
            continue
        v3_root = out / f"{o.name}.v3"
        if any(rel.startswith(f"{o.name}.v3/") for rel in o.files) and v3_root.exists():
            shutil.rmtree(v3_root)
        for rel, data in sorted(o.files.items()):
            path = _write(out, rel, data)
            if rel.rsplit("/", 1)[-1] in report_names:
                print(path)
        _log(logging.INFO, "package_done", package=o.name, status=o.status)


def _error_code(outcomes: list[Outcome]) -> int:
    if any(o.error_kind == "io" for o in outcomes):
        return EXIT_IO
    if any(o.error_kind == "data" for o in outcomes):
        return EXIT_CONFIG
    return EXIT_OK


def _write_aggregate(out: Path, outcomes: list[Outcome], extra_md: str = "") -> None:
    total = stats.CorpusAggregate()
    for o in outcomes:
        if o.part is not None:
            total = total.merge(o.part)
    md = "\n".join([
        stats.render_api_table(total), stats.render_outcome_table(total),
        stats.render_label_table(total.label_counts), stats.render_loc_table(total),
    ]) + extra_md
    for rel, data in (("aggregate.json", total.to_json()), ("aggregate.csv", total.to_csv()), ("aggregate.md", md)):
        print(_write(out, rel, data.encode()))


# ----------------------------------------------------------------- commands

def _jobs(config: RunConfig, args) -> list[tuple[str, Path, object]]:
    return [(name, path, args) for name, path in discover(config.inputs)]


def cmd_convert(config: RunConfig) -> int:
    outcomes = _run(_work_convert, _jobs(config, None), config)
    _emit(config.output_dir, outcomes, ("conversion_report.json",))
    code = _error_code(outcomes)
    if code == EXIT_OK and any(o.status == "Fail" for o in outcomes):
        code = EXIT_FAIL
    return code


def cmd_scan(config: RunConfig) -> int:
    labels = load_labels(config.labels_file) if config.labels_file else {}
    outcomes = _run(_work_scan, _jobs(config, (config.counting_mode, labels)), config)
    _emit(config.output_dir, outcomes, ("risk_report.json",))
    _write_aggregate(config.output_dir, outcomes)
    return _error_code(outcomes)


def _ruleset(paths) -> RuleSet:
    rs = RuleSet()
    for path in paths:
        part, warnings = load_blocklist(path)
        for w in warnings:
            _log(logging.DEBUG, "filter_warning", file=str(path), line=w.line, code=w.code, message=w.message)
        rs = rs + part
    return rs


def cmd_classify(config: RunConfig) -> int:
    if not config.blocklists or config.labels_file is None:
        raise ConfigError("classify needs --blocklist and --labels")
    rs = _ruleset(config.blocklists)
    labels = load_labels(config.labels_file)
    jobs = []
    missing = []
    for name, path in discover(config.inputs):
        try:
            key = str(load_package(path).id)
        except Exception:
            key = name
        meta = labels.get(key, labels.get(name))
        if meta is None:
            missing.append(name)
        jobs.append((name, path, (rs, meta or Metadata())))
    if missing:
        _log(logging.ERROR, "labels_missing", packages=missing)
        return EXIT_CONFIG
    outcomes = _run(_work_classify, jobs, config)
    _emit(config.output_dir, outcomes, ("verdict.json",))
    counts = label_summary(o.verdict for o in outcomes if o.verdict is not None)
    summary = format_label_summary(counts)
    print(_write(config.output_dir, "summary.txt", summary.encode()))
    sys.stderr.write(summary)
    return _error_code(outcomes)


def cmd_stats(config: RunConfig) -> int:
    if config.metadata_file is None:
        raise ConfigError("stats needs --metadata")
    warnings: list = []
    records = stats.load_metadata(config.metadata_file, warnings=warnings)
    for w in warnings:
        _log(logging.WARNING, "metadata_row_skipped", line=w.line, message=w.message)
    out = config.output_dir
    series = stats.adoption_series(records)
    rollback = stats.rollback_report(records)
    print(_write(out, "adoption.csv", stats.render_adoption_csv(series).encode()))
    print(_write(out, "rollback.json", _dump(rollback)))
    md = "\n".join([
        stats.render_rollback_table(rollback),
        stats._table(("Month", "V3 share (%)"), [(m, f"{p:.1f}") for m, p in series]),
    ])
    print(_write(out, "stats.md", md.encode()))
    return EXIT_OK


COMMANDS = {"convert": cmd_convert, "scan": cmd_scan, "classify": cmd_classify, "stats": cmd_stats}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mv3kit", description="Manifest V2 to V3 conversion and risk analysis")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("inputs", nargs="*", type=Path, help="package directories, zips, or corpus directories")
        p.add_argument("--out", type=Path, default=Path("mv3kit-out"))
        p.add_argument("--blocklist", action="append", type=Path, default=[])
        p.add_argument("--labels", type=Path)
        p.add_argument("--metadata", type=Path)
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--counting-mode", choices=("code_only", "permissive"), default="code_only")
        p.add_argument("--fail-fast", action="store_true")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _setup_logging(args.verbose)
    try:
        config = RunConfig(
            inputs=tuple(args.inputs),
            output_dir=args.out,
            blocklists=tuple(args.blocklist),
            labels_file=args.labels,
            metadata_file=args.metadata,
            parallelism=args.jobs,
            counting_mode=args.counting_mode,
            fail_fast=args.fail_fast,
        )
        if args.command != "stats" and not config.inputs:
            raise ConfigError(f"{args.command} needs at least one input")
        config.output_dir.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](config)
    except (ConfigError, MetadataError, ValueError) as exc:
        _log(logging.ERROR, "config_error", error=str(exc))
        return EXIT_CONFIG
    except OSError as exc:
        _log(logging.ERROR, "io_error", error=str(exc))
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
