"""Lossless JavaScript lexer, member-chain extraction and API hit counting.

The lexer never fails: every input character lands in exactly one token, so
``"".join(t.text for t in tokenize(s)) == s`` for any string.  It is not a
parser; the only context it tracks is what is needed to tell code apart
from strings, comments and regex literals.
"""

from __future__ import annotations

import difflib
import re
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import Diagnostic

IDENTIFIER = "identifier"
PUNCTUATION = "punctuation"
STRING = "string_literal"
TEMPLATE = "template_literal"
NUMERIC = "numeric"
REGEX = "regex_literal"
COMMENT = "comment"
WHITESPACE = "whitespace"
OTHER = "other"

NON_CODE = frozenset((STRING, TEMPLATE, COMMENT))
TRIVIA = frozenset((WHITESPACE, COMMENT))


@dataclass(frozen=True, slots=True)
class Token:
    kind: str
    text: str
    span: tuple[int, int]
    line: int


@dataclass(frozen=True, slots=True)
class ApiChain:
    segments: tuple[str, ...]
    span: tuple[int, int]
    line: int
    token_indices: tuple[int, ...] = ()
    # member access on a computed receiver, e.g. ``(a || b).appendChild``
    leading_dot: bool = False

    @property
    def dotted(self) -> str:
        return ".".join(self.segments)


@dataclass(frozen=True, slots=True)
class ApiHit:
    api: str
    line: int
    span: tuple[int, int]
    alias_matched: bool = False
    context: str = "code"


_PUNCTUATORS = sorted(
    """>>>= ... === !== **= <<= >>= >>> &&= ||= ??= => == != <= >= && || ?? ++ -- += -= *= %= &= |= ^= **
    /= << >> { } ( ) [ ] ; , < > + - * / % & | ^ ! ~ ? : = . @ #""".split(),
    key=len,
    reverse=True,
)

_SIMPLE = re.compile(
    r"(?P<ws>\s+)"
    r"|(?P<id>(?:[^\W\d]|\$)(?:\w|\$)*)"
    r"|(?P<num>0[xX][0-9a-fA-F_]+n?|0[oO][0-7_]+n?|0[bB][01_]+n?"
    r"|(?:\d[\d_]*(?:\.[\d_]*)?|\.\d[\d_]*)(?:[eE][+-]?\d[\d_]*)?n?)"
    r"|(?P<punct>\?\.(?!\d)|" + "|".join(re.escape(p) for p in _PUNCTUATORS if p != "?.") + ")"
)
_KIND_OF_GROUP = {"ws": WHITESPACE, "id": IDENTIFIER, "num": NUMERIC, "punct": PUNCTUATION}

_STRINGS = {
    '"': re.compile(r'"[^"\\]*(?:\\.[^"\\]*)*"', re.S),
    "'": re.compile(r"'[^'\\]*(?:\\.[^'\\]*)*'", re.S),
}
_LINE_COMMENT = re.compile(r"//[^\n\r\u2028\u2029]*")
_REGEX_FLAGS = re.compile(r"[A-Za-z]*")

# Identifiers after which a ``/`` starts a regex literal rather than a division.
_EXPR_KEYWORDS = frozenset(
    "return typeof instanceof in of new delete void throw case do else yield await".split()
)
_DIVISION_PUNCT = frozenset((")", "]", "}", "++", "--"))


def _scan_template(src: str, i: int) -> tuple[int, bool]:
    """Scan from an opening backtick; return (end, terminated)."""
    n = len(src)
    j = i + 1
    while j < n:
        c = src[j]
        if c == "\\":
            j += 2
        elif c == "`":
            return j + 1, True
        elif c == "$" and src.startswith("{", j + 1):
            j, ok = _scan_substitution(src, j + 2)
            if not ok:
                return n, False
        else:
            j += 1
    return n, False


def _scan_substitution(src: str, j: int) -> tuple[int, bool]:
    """Skip a ``${ ... }`` body, honouring nested strings and templates."""
    n = len(src)
    depth = 1
    while j < n:
        c = src[j]
        if c in _STRINGS:
            m = _STRINGS[c].match(src, j)
            if not m:
                return n, False
            j = m.end()
            continue
        if c == "`":
            j, ok = _scan_template(src, j)
            if not ok:
                return n, False
            continue
        if c == "/" and src.startswith("/", j + 1):
            j = _LINE_COMMENT.match(src, j).end()
            continue
        if c == "/" and src.startswith("*", j + 1):
            end = src.find("*/", j + 2)
            if end < 0:
                return n, False
            j = end + 2
            continue
        if c == "{":
            depth += 1
        elif c == "}":
            depth -= 1
            if depth == 0:
                return j + 1, True
        j += 1
    return n, False


def _scan_regex(src: str, i: int) -> int | None:
    """Return the end of a regex literal starting at ``i``, or None."""
    n = len(src)
    j = i + 1
    in_class = False
    while j < n:
        c = src[j]
        if c in "\n\r\u2028\u2029":
            return None
        if c == "\\":
            j += 2
            continue
        if in_class:
            if c == "]":
                in_class = False
        elif c == "[":
            in_class = True
        elif c == "/":
            if j == i + 1:
                return None
            return _REGEX_FLAGS.match(src, j + 1).end()
        j += 1
    return None


def _regex_allowed(prev: Token | None) -> bool:
    if prev is None:
        return True
    if prev.kind == PUNCTUATION:
        return prev.text not in _DIVISION_PUNCT
    if prev.kind == IDENTIFIER:
        return prev.text in _EXPR_KEYWORDS
    return False


def tokenize(source: str, warnings: list[Diagnostic] | None = None) -> list[Token]:
    tokens: list[Token] = []
    append = tokens.append
    n = len(source)
    i = 0
    line = 1
    prev_sig: Token | None = None

    def warn(code: str, msg: str) -> None:
        if warnings is not None:
            warnings.append(Diagnostic(code, msg, line=line))

    while i < n:
        c = source[i]
        kind = None
        end = i + 1
        if c in _STRINGS:
            m = _STRINGS[c].match(source, i)
            kind = STRING
            if m:
                end = m.end()
            else:
                end = n
                warn("unterminated_string", "string literal closed at end of input")
        elif c == "`":
            kind = TEMPLATE
            end, ok = _scan_template(source, i)
            end = min(end, n)
            if not ok:
                warn("unterminated_template", "template literal closed at end of input")
        elif c == "/":
            nxt = source[i + 1] if i + 1 < n else ""
            if nxt == "/":
                kind, end = COMMENT, _LINE_COMMENT.match(source, i).end()
            elif nxt == "*":
                close = source.find("*/", i + 2)
                kind = COMMENT
                if close < 0:
                    end = n
                    warn("unterminated_comment", "block comment closed at end of input")
                else:
                    end = close + 2
            elif _regex_allowed(prev_sig):
                rx_end = _scan_regex(source, i)
                if rx_end is not None:
                    kind, end = REGEX, rx_end
        if kind is None:
            m = _SIMPLE.match(source, i)
            if m:
                kind, end = _KIND_OF_GROUP[m.lastgroup], m.end()
            else:
                kind, end = OTHER, i + 1
        text = source[i:end]
        tok = Token(kind, text, (i, end), line)
        append(tok)
        if kind not in TRIVIA:
            prev_sig = tok
        line += text.count("\n")
        i = end
    return tokens


def significant(tokens: Sequence[Token]) -> list[int]:
    """Indices of tokens that are neither whitespace nor comments."""
    return [i for i, t in enumerate(tokens) if t.kind not in TRIVIA]


def _is_dot(tok: Token) -> bool:
    return tok.kind == PUNCTUATION and tok.text in (".", "?.")


def extract_chains(tokens: Sequence[Token]) -> list[ApiChain]:
    sig = significant(tokens)
    chains = []
    k = 0
    while k < len(sig):
        tok = tokens[sig[k]]
        if tok.kind != IDENTIFIER:
            k += 1
            continue
        leading = k > 0 and _is_dot(tokens[sig[k - 1]])
        idxs = [sig[k]]
        m = k + 1
        while m + 1 < len(sig) and _is_dot(tokens[sig[m]]) and tokens[sig[m + 1]].kind == IDENTIFIER:
            idxs.append(sig[m + 1])
            m += 2
        first, last = tokens[idxs[0]], tokens[idxs[-1]]
        chains.append(ApiChain(
            segments=tuple(tokens[x].text for x in idxs),
            span=(first.span[0], last.span[1]),
            line=first.line,
            token_indices=tuple(idxs),
            leading_dot=leading,
        ))
        k = m
    return chains


def next_significant(tokens: Sequence[Token], index: int) -> int | None:
    for j in range(index + 1, len(tokens)):
        if tokens[j].kind not in TRIVIA:
            return j
    return None


def call_arguments(tokens: Sequence[Token], open_index: int) -> range:
    """Token index range strictly inside the parenthesis opened at ``open_index``."""
    depth = 0
    for j in range(open_index, len(tokens)):
        t = tokens[j]
        if t.kind == PUNCTUATION:
            if t.text in "([{":
                depth += 1
            elif t.text in ")]}":
                depth -= 1
                if depth == 0:
                    return range(open_index + 1, j)
    return range(open_index + 1, len(tokens))


def _is_call(tokens: Sequence[Token], chain: ApiChain) -> bool:
    j = next_significant(tokens, chain.token_indices[-1])
    return j is not None and tokens[j].kind == PUNCTUATION and tokens[j].text == "("


def _word_re(target: str) -> re.Pattern:
    if target == "eval":
        return re.compile(r"(?<![\w$.])eval\s*\(")
    body = r"\s*\.\s*".join(re.escape(s) for s in target.split("."))
    return re.compile(r"(?<![\w$])" + body + r"(?![\w$])")


def find_api_hits(
    source: str | Sequence[Token],
    targets: Iterable[str],
    mode: str = "code_only",
) -> list[ApiHit]:
    """Locate every occurrence of the target API names.

    Dotted targets match on trailing chain segments so ``browser.*`` aliases
    count; those hits carry ``alias_matched``.  ``mode="permissive"`` also
    reports textual occurrences inside strings and comments.
    """
    tokens = tokenize(source) if isinstance(source, str) else source
    targets = list(dict.fromkeys(targets))
    chains = extract_chains(tokens)
    hits = []
    for target in targets:
        segs = tuple(target.split("."))
        for ch in chains:
            if target == "eval":
                if ch.segments == ("eval",) and not ch.leading_dot and _is_call(tokens, ch):
                    hits.append(ApiHit(target, ch.line, ch.span))
            elif len(segs) > 1:
                if ch.segments[-len(segs):] == segs:
                    alias = len(ch.segments) == len(segs) or ch.segments[0] != "chrome"
                    hits.append(ApiHit(target, ch.line, ch.span, alias_matched=alias))
            else:
                for idx, seg in zip(ch.token_indices, ch.segments):
                    if seg == target:
                        hits.append(ApiHit(target, tokens[idx].line, tokens[idx].span))
        if mode == "permissive":
            rx = _word_re(target)
            for tok in tokens:
                if tok.kind in NON_CODE:
                    for m in rx.finditer(tok.text):
                        pos = tok.span[0] + m.start()
                        line = tok.line + tok.text.count("\n", 0, m.start())
                        hits.append(ApiHit(target, line, (pos, pos + len(m.group())), context=tok.kind))
    hits.sort(key=lambda h: (h.span, h.api))
    return hits


def count_api_hits(source: str | Sequence[Token], targets: Iterable[str], mode: str = "code_only") -> dict[str, int]:
    targets = list(dict.fromkeys(targets))
    counts = dict.fromkeys(targets, 0)
    for hit in find_api_hits(source, targets, mode):
        counts[hit.api] += 1
    return counts


def _render_lines(tokens: Sequence[Token], keep_breaks: bool) -> str:
    lines: list[list[str]] = []
    current: list[str] = []
    pending = ""
    for tok in tokens:
        if tok.kind in TRIVIA:
            if current:
                brk = keep_breaks and ("\n" in tok.text or "\r" in tok.text)
                pending = "\n" if brk or pending == "\n" else " "
            continue
        if pending == "\n":
            lines.append(current)
            current = []
        elif pending:
            current.append(" ")
        pending = ""
        current.append(tok.text)
        if tok.kind == PUNCTUATION and tok.text in (";", "{", "}"):
            lines.append(current)
            current = []
    if current:
        lines.append(current)
    return "\n".join("".join(parts) for parts in lines)


def _code_tokens(tokens: Sequence[Token]) -> list[tuple[str, str]]:
    return [(t.kind, t.text) for t in tokens if t.kind not in TRIVIA]


def normalize_lines(source: str) -> str:
    """Re-emit code with one line per ``;``, ``{`` or ``}``.

    Comments are dropped and whitespace runs collapse to one space, which is
    the line-count normalization used for the changed-LoC metric.  When
    dropping a line break would let a ``/`` start a regex that previously
    could not close, breaks from the source are kept instead.
    """
    tokens = tokenize(source)
    flat = _render_lines(tokens, keep_breaks=False)
    if _code_tokens(tokenize(flat)) == _code_tokens(tokens):
        return flat
    return _render_lines(tokens, keep_breaks=True)


def _diff_lines(text: str) -> list[str]:
    return [s for s in (line.strip() for line in text.splitlines()) if s]


def loc_changed(original: str, converted: str) -> int:
    """Inserted plus deleted lines between a raw file and its normalized rewrite.

    An unchanged file costs nothing; any touched file is normalized first, so
    a one-line minified bundle counts every statement it contains.
    """
    if original == converted:
        return 0
    a = _diff_lines(original)
    b = _diff_lines(normalize_lines(converted))
    total = 0
    for op, i1, i2, j1, j2 in difflib.SequenceMatcher(None, a, b, autojunk=False).get_opcodes():
        if op != "equal":
            total += (i2 - i1) + (j2 - j1)
    return total
