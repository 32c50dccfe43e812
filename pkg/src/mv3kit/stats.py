"""Corpus-level tables, adoption series and rollback detection."""

from __future__ import annotations

import csv
import io
import json
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import date, datetime
from decimal import ROUND_HALF_UP, Decimal

from .classifier import LABEL_TITLES, LABELS, parse_label
from .errors import Diagnostic, MetadataError
from .model import ExtensionId
from .scanner import TAXONOMY_APIS

SCHEMA_VERSION = 1

LOC_BUCKETS = ("0-19", "20-200", "201-10000", ">10000")


def percent(numerator: int, denominator: int) -> float:
    """``numerator / denominator`` as a percentage, rounded half-up to one decimal."""
    if denominator == 0:
        return 0.0
    value = Decimal(numerator) * 100 / Decimal(denominator)
    return float(value.quantize(Decimal("0.1"), rounding=ROUND_HALF_UP))


def loc_bucket(loc: int) -> str:
    if loc < 20:
        return LOC_BUCKETS[0]
    if loc <= 200:
        return LOC_BUCKETS[1]
    if loc <= 10000:
        return LOC_BUCKETS[2]
    return LOC_BUCKETS[3]


def _zeros(keys) -> dict[str, int]:
    return dict.fromkeys(keys, 0)


@dataclass(frozen=True)
class CorpusAggregate:
    """Counts only; every percentage is derived on output so merging stays exact."""

    total_extensions: int = 0
    total_hits: dict = field(default_factory=lambda: _zeros(TAXONOMY_APIS))
    unique_extensions: dict = field(default_factory=lambda: _zeros(TAXONOMY_APIS))
    success_initial: int = 0
    success_after_war: int = 0
    label_counts: dict = field(default_factory=lambda: _zeros(LABELS))
    loc_histogram: dict = field(default_factory=lambda: _zeros(LOC_BUCKETS))

    @property
    def fail_initial(self) -> int:
        return self.total_extensions - self.success_initial

    @property
    def fail_final(self) -> int:
        return self.total_extensions - self.success_after_war

    def merge(self, other: CorpusAggregate) -> CorpusAggregate:
        def add(a, b):
            return {k: a.get(k, 0) + b.get(k, 0) for k in sorted(set(a) | set(b))}
        return CorpusAggregate(
            self.total_extensions + other.total_extensions,
            add(self.total_hits, other.total_hits),
            add(self.unique_extensions, other.unique_extensions),
            self.success_initial + other.success_initial,
            self.success_after_war + other.success_after_war,
            add(self.label_counts, other.label_counts),
            add(self.loc_histogram, other.loc_histogram),
        )

    __add__ = merge

    def per_api(self) -> dict:
        n = self.total_extensions
        return {
            api: {
                "total_hits": self.total_hits[api],
                "unique_extensions": self.unique_extensions[api],
                "percent": percent(self.unique_extensions[api], n),
            }
            for api in sorted(self.total_hits)
        }

    def conversion(self) -> dict:
        n = self.total_extensions
        rows = {
            "success_initial": self.success_initial,
            "fail_initial": self.fail_initial,
            "success_after_war": self.success_after_war,
            "fail_final": self.fail_final,
        }
        return {k: {"count": v, "percent": percent(v, n)} for k, v in rows.items()}

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "total_extensions": self.total_extensions,
            "per_api": self.per_api(),
            "conversion": self.conversion(),
            "label_counts": {k: self.label_counts.get(k, 0) for k in LABELS},
            "loc_histogram": {k: self.loc_histogram.get(k, 0) for k in LOC_BUCKETS},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["section", "key", "count", "total_hits", "percent"])
        for api, row in self.per_api().items():
            w.writerow(["api", api, row["unique_extensions"], row["total_hits"], row["percent"]])
        for key, row in self.conversion().items():
            w.writerow(["conversion", key, row["count"], "", row["percent"]])
        for key in LABELS:
            w.writerow(["label", key, self.label_counts.get(key, 0), "", ""])
        for key in LOC_BUCKETS:
            w.writerow(["loc_changed", key, self.loc_histogram.get(key, 0), "", ""])
        return buf.getvalue()


def aggregate_one(risk, conversion, labels=(), success_after_war: bool | None = None) -> CorpusAggregate:
    """Aggregate of a single extension.

    ``success_after_war`` defaults to the initial status; callers that re-run
    an extension after fixing its web-accessible resources pass the new outcome.
    """
    hits = _zeros(TAXONOMY_APIS)
    unique = _zeros(TAXONOMY_APIS)
    for api in TAXONOMY_APIS:
        n = risk.per_api[api].hits if api in risk.per_api else 0
        hits[api] = n
        unique[api] = 1 if n else 0
    ok = conversion.status == "Success"
    after = ok if success_after_war is None else bool(success_after_war)
    label_counts = _zeros(LABELS)
    for label in set(labels):
        label_counts[parse_label(label)] += 1
    histogram = _zeros(LOC_BUCKETS)
    histogram[loc_bucket(conversion.loc_changed)] += 1
    return CorpusAggregate(1, hits, unique, int(ok), int(after), label_counts, histogram)


def aggregate(results) -> CorpusAggregate:
    """Fold ``(RiskReport, ConversionReport, labels[, success_after_war])`` tuples."""
    total = CorpusAggregate()
    for item in results:
        total = total.merge(aggregate_one(*item))
    return total


# ----------------------------------------------------------------- metadata

@dataclass(frozen=True)
class MetadataRecord:
    id: str
    version: str
    timestamp: date
    manifest_version: int
    online: bool

    def __post_init__(self):
        if self.manifest_version not in (2, 3):
            raise ValueError(f"manifest_version must be 2 or 3, got {self.manifest_version}")


def _version_key(version: str):
    return tuple(int(p) if p.isdigit() else -1 for p in version.split("."))


def _parse_timestamp(text: str) -> date:
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    try:
        return datetime.fromisoformat(text).date() if "T" in text or " " in text else date.fromisoformat(text)
    except ValueError as exc:
        raise ValueError(f"bad timestamp {text!r}") from exc


def _parse_online(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "online"):
        return True
    if low in ("0", "false", "no", "offline"):
        return False
    raise ValueError(f"bad online flag {text!r}")


def parse_metadata(text: str, tolerance: float = 0.01, warnings: list | None = None) -> list[MetadataRecord]:
    """Parse ``metadata.csv``; malformed rows are skipped while they stay within ``tolerance``."""
    reader = csv.DictReader(io.StringIO(text))
    required = {"id", "version", "timestamp", "manifest_version", "online"}
    if reader.fieldnames is None or not required <= set(reader.fieldnames):
        raise MetadataError(f"metadata needs columns {sorted(required)}")
    records, bad = [], []
    rows = 0
    for n, row in enumerate(reader, start=2):
        rows += 1
        try:
            records.append(MetadataRecord(
                str(ExtensionId(row["id"].strip())),
                row["version"].strip(),
                _parse_timestamp(row["timestamp"]),
                int(row["manifest_version"]),
                _parse_online(row["online"]),
            ))
        except (ValueError, TypeError, AttributeError) as exc:
            bad.append(Diagnostic("malformed_row", str(exc), line=n))
    if rows == 0:
        raise MetadataError("metadata has no rows")
    if len(bad) > rows * tolerance:
        raise MetadataError(f"{len(bad)} of {rows} metadata rows are malformed (first: line {bad[0].line}: {bad[0].message})")
    if warnings is not None:
        warnings.extend(bad)
    return records


def load_metadata(path, tolerance: float = 0.01, warnings: list | None = None) -> list[MetadataRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        return parse_metadata(fh.read(), tolerance, warnings)


def adoption_series(records, granularity: str = "month") -> list[tuple[str, float]]:
    """Share of update records per calendar month that declare Manifest V3."""
    if granularity != "month":
        raise ValueError("only monthly granularity is supported")
    totals: dict[str, list[int]] = defaultdict(lambda: [0, 0])
    for r in records:
        bucket = totals[f"{r.timestamp.year:04d}-{r.timestamp.month:02d}"]
        bucket[0] += r.manifest_version == 3
        bucket[1] += 1
    return [(month, percent(v3, n)) for month, (v3, n) in sorted(totals.items())]


def _history(records) -> dict[str, list[MetadataRecord]]:
    by_id: dict[str, list[MetadataRecord]] = defaultdict(list)
    for r in records:
        by_id[r.id].append(r)
    for seq in by_id.values():
        seq.sort(key=lambda r: (r.timestamp, _version_key(r.version)))
    return by_id


def is_rolled_back(history) -> bool:
    seen_v3 = False
    for r in history:
        if r.manifest_version == 3:
            seen_v3 = True
        elif seen_v3:
            return True
    return False


def rollback_report(records) -> dict:
    rolled = sorted(i for i, seq in _history(records).items() if is_rolled_back(seq))
    history = _history(records)
    online = sum(1 for i in rolled if history[i][-1].online)
    offline = len(rolled) - online
    return {
        "schema_version": SCHEMA_VERSION,
        "rolled_back_ids": rolled,
        "total": len(rolled),
        "online": {"count": online, "percent": percent(online, len(rolled))},
        "offline": {"count": offline, "percent": percent(offline, len(rolled))},
    }


# ---------------------------------------------------------------- markdown

def _table(header, rows) -> str:
    lines = ["| " + " | ".join(header) + " |", "|" + "|".join("---" for _ in header) + "|"]
    lines += ["| " + " | ".join(str(c) for c in row) + " |" for row in rows]
    return "\n".join(lines) + "\n"


def _count_pct(count: int, pct: float) -> str:
    return f"{count:,} ({pct:.1f}%)"


def render_api_table(agg: CorpusAggregate) -> str:
    rows = [(api, f"{r['total_hits']:,}", _count_pct(r["unique_extensions"], r["percent"]))
            for api, r in agg.per_api().items()]
    return _table(("API", "Total hits", "Unique extensions"), rows)


def render_outcome_table(agg: CorpusAggregate) -> str:
    c = agg.conversion()
    rows = [
        ("Success (Initial)", _count_pct(c["success_initial"]["count"], c["success_initial"]["percent"])),
        ("Fail (Initial)", _count_pct(c["fail_initial"]["count"], c["fail_initial"]["percent"])),
        ("Success (after WAR fix)", _count_pct(c["success_after_war"]["count"], c["success_after_war"]["percent"])),
        ("Fail (Final)", _count_pct(c["fail_final"]["count"], c["fail_final"]["percent"])),
    ]
    return _table(("Outcome", "Extensions"), rows)


def render_label_table(counts: dict) -> str:
    return _table(("Category", "Extensions"), [(LABEL_TITLES[k], counts.get(k, 0)) for k in LABELS])


def render_loc_table(agg: CorpusAggregate) -> str:
    return _table(("LoC changed", "Extensions"), [(k, agg.loc_histogram.get(k, 0)) for k in LOC_BUCKETS])


def render_rollback_table(report: dict) -> str:
    rows = [
        ("Online", _count_pct(report["online"]["count"], report["online"]["percent"])),
        ("Offline", _count_pct(report["offline"]["count"], report["offline"]["percent"])),
    ]
    return _table(("Rolled back V3 to V2", "Extensions"), rows)


def render_adoption_csv(series) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["month", "percent_v3"])
    w.writerows(series)
    return buf.getvalue()
