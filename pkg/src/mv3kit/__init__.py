"""Manifest V2 to V3 conversion, API risk scanning and corpus statistics for browser extensions."""

from .classifier import ActivityVerdict, Metadata, RequestTarget, classify, extract_request_targets
from .converter import Blocker, ConversionReport, Substitution, convert_manifest, convert_package, rewrite_api_calls
from .filters import RuleSet, classify_url, parse_filter_list
from .lexer import count_api_hits, find_api_hits, loc_changed, normalize_lines, tokenize
from .model import ExtensionPackage, Manifest, load_package, parse_manifest, validate_v3
from .scanner import RiskReport, detect_war_injection, scan_package
from .stats import CorpusAggregate, adoption_series, aggregate, percent, rollback_report

__version__ = "0.1.0"
