"""Shallow constant resolution over a token stream.

Handles exactly two things: ``var|let|const NAME = "literal"`` bindings and
``operand + operand + ...`` runs whose operands are literals or such names.
Anything deeper (calls, members, reassignment) stays unresolved.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence

from .lexer import IDENTIFIER, PUNCTUATION, STRING, TEMPLATE, Token, significant

_DECL = frozenset(("var", "let", "const"))
_URL_PREFIX = re.compile(r"^(?:https?:)?//", re.IGNORECASE)
_TERMINATORS = frozenset((";", ",", ")", "]", "}"))


_ESCAPE = re.compile(r"\\(u\{[0-9a-fA-F]+\}|u[0-9a-fA-F]{4}|x[0-9a-fA-F]{2}|\r\n|[\s\S])")
_SIMPLE_ESCAPES = {"n": "\n", "t": "\t", "r": "\r", "b": "\b", "f": "\f", "v": "\v", "0": "\0"}


def _unescape(match: re.Match) -> str:
    esc = match.group(1)
    if esc[0] in "ux" and len(esc) > 1:
        digits = esc[2:-1] if esc.startswith("u{") else esc[1:]
        try:
            return chr(int(digits, 16))
        except (ValueError, OverflowError):
            return esc
    if esc in ("\n", "\r", "\r\n", "\u2028", "\u2029"):
        return ""  # line continuation
    return _SIMPLE_ESCAPES.get(esc, esc)


def literal_value(tok: Token) -> str | None:
    """Decoded value of a string literal or a substitution-free template."""
    if tok.kind == STRING and len(tok.text) >= 2 and tok.text[-1] == tok.text[0]:
        body = tok.text[1:-1]
    elif tok.kind == TEMPLATE and len(tok.text) >= 2 and tok.text.endswith("`") and "${" not in tok.text:
        body = tok.text[1:-1]
    else:
        return None
    return _ESCAPE.sub(_unescape, body) if "\\" in body else body


def is_url(text: str) -> bool:
    return bool(_URL_PREFIX.match(text))


@dataclass(frozen=True)
class Operand:
    kind: str  # lit | name | opaque
    text: str
    value: str | None
    index: int


@dataclass(frozen=True)
class Concat:
    operands: tuple[Operand, ...]
    start: int  # token index of the first operand
    end: int  # token index of the last operand token
    line: int

    @property
    def resolved(self) -> bool:
        return all(op.value is not None for op in self.operands)

    @property
    def value(self) -> str | None:
        return "".join(op.value for op in self.operands) if self.resolved else None

    def render(self) -> str:
        """Literal fragments joined, unresolved operands shown as ``{name}``."""
        return "".join(op.value if op.value is not None else "{" + op.text + "}" for op in self.operands)

    @property
    def literal_count(self) -> int:
        return sum(op.kind == "lit" for op in self.operands)

    def mentions_remote(self) -> bool:
        """True if any fragment names an absolute or scheme-relative location."""
        for op in self.operands:
            v = op.value
            if v is None:
                continue
            low = v.lower()
            if "http:" in low or "https:" in low or v.startswith("//"):
                return True
        return False


def bindings(tokens: Sequence[Token]) -> dict[str, tuple[str, int]]:
    """Names declared once with a single literal initializer.

    Maps name -> (value, token index of the literal).  Names declared more
    than once are dropped as ambiguous.
    """
    sig = significant(tokens)
    found: dict[str, tuple[str, int]] = {}
    seen: set[str] = set()
    for k in range(1, len(sig) - 2):
        name, eq, lit = (tokens[sig[k + d]] for d in range(3))
        if name.kind != IDENTIFIER or eq.kind != PUNCTUATION or eq.text != "=":
            continue
        prev = tokens[sig[k - 1]]
        if not (prev.text in _DECL and prev.kind == IDENTIFIER
                or prev.text == "," and _in_declaration(tokens, sig, k - 1)):
            continue
        if name.text in seen:
            found.pop(name.text, None)
            continue
        seen.add(name.text)
        value = literal_value(lit)
        after = tokens[sig[k + 3]] if k + 3 < len(sig) else None
        if value is not None and (after is None or after.text in _TERMINATORS or after.kind == IDENTIFIER):
            found[name.text] = (value, sig[k + 2])
    return found


def _in_declaration(tokens: Sequence[Token], sig: list[int], k: int) -> bool:
    # walk back from a comma to the statement start looking for var/let/const
    depth = 0
    for m in range(k - 1, -1, -1):
        t = tokens[sig[m]]
        if t.kind == PUNCTUATION:
            if t.text in ")]}":
                depth += 1
            elif t.text in "([{":
                if depth == 0:
                    return False
                depth -= 1
            elif t.text == ";" and depth == 0:
                return False
        elif t.kind == IDENTIFIER and depth == 0 and t.text in _DECL:
            return True
    return False


def _operand_at(tokens: Sequence[Token], sig: list[int], k: int, env: dict) -> tuple[Operand, int] | None:
    """Parse one operand at significant position k; return it and the next position."""
    t = tokens[sig[k]]
    value = literal_value(t)
    if value is not None:
        return Operand("lit", t.text, value, sig[k]), k + 1
    if t.kind == TEMPLATE:
        return Operand("opaque", t.text, None, sig[k]), k + 1
    if t.kind != IDENTIFIER:
        return None
    m = k + 1
    parts = [t.text]
    while m + 1 < len(sig) and tokens[sig[m]].text in (".", "?.") and tokens[sig[m + 1]].kind == IDENTIFIER:
        parts.append(tokens[sig[m + 1]].text)
        m += 2
    nxt = tokens[sig[m]].text if m < len(sig) else None
    if len(parts) == 1 and nxt not in ("(", "[") and parts[0] in env:
        return Operand("name", parts[0], env[parts[0]][0], sig[k]), m
    return Operand("opaque", ".".join(parts), None, sig[k]), m


def concat_at(tokens: Sequence[Token], sig: list[int], k: int, env: dict) -> tuple[Concat, int] | None:
    """Parse a ``+`` run starting at significant position k.

    Returns the run and the significant position just past it.
    """
    ops = []
    pos = k
    while pos < len(sig):
        parsed = _operand_at(tokens, sig, pos, env)
        if parsed is None:
            break
        op, pos = parsed
        ops.append(op)
        if op.kind == "opaque" and pos < len(sig) and tokens[sig[pos]].text in ("(", "["):
            break
        if pos + 1 < len(sig) and tokens[sig[pos]].kind == PUNCTUATION and tokens[sig[pos]].text == "+":
            pos += 1
            continue
        break
    if not ops:
        return None
    return Concat(tuple(ops), ops[0].index, ops[-1].index, tokens[ops[0].index].line), pos


def concat_runs(tokens: Sequence[Token], env: dict | None = None) -> list[Concat]:
    """Every maximal ``+`` run that contains at least one literal operand."""
    env = bindings(tokens) if env is None else env
    sig = significant(tokens)
    out = []
    k = 0
    while k < len(sig):
        t = tokens[sig[k]]
        prev = tokens[sig[k - 1]] if k else None
        after_op = prev is not None and prev.kind == PUNCTUATION and prev.text in ("+", ".", "?.")
        if not after_op and t.kind in (STRING, TEMPLATE, IDENTIFIER):
            parsed = concat_at(tokens, sig, k, env)
            if parsed is not None:
                run, k_next = parsed
                if run.literal_count:
                    out.append(run)
                k = max(k_next, k + 1)
                continue
        k += 1
    return out
