"""Token-level detectors for the code shapes the converter and scanner care about."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence

from .lexer import (
    IDENTIFIER, PUNCTUATION, STRING, ApiChain, Token, call_arguments, extract_chains,
    next_significant, significant, tokenize,
)
from .literals import Concat, bindings, concat_at, literal_value


@dataclass
class JsFile:
    """A lexed source file with its chains and constant bindings cached."""

    path: str
    source: str
    tokens: list[Token]
    chains: list[ApiChain]
    env: dict

    @classmethod
    def parse(cls, path: str, source: str) -> JsFile:
        tokens = tokenize(source)
        return cls(path, source, tokens, extract_chains(tokens), bindings(tokens))

    def call_args(self, chain: ApiChain) -> range | None:
        j = next_significant(self.tokens, chain.token_indices[-1])
        if j is None or self.tokens[j].kind != PUNCTUATION or self.tokens[j].text != "(":
            return None
        return call_arguments(self.tokens, j)


def script_element_lines(js: JsFile) -> list[int]:
    """Lines of ``*.createElement("script")`` calls."""
    out = []
    for ch in js.chains:
        if ch.segments[-1] != "createElement":
            continue
        args = js.call_args(ch)
        if args is None:
            continue
        for j in args:
            tok = js.tokens[j]
            if tok.kind == STRING and (literal_value(tok) or "").strip().lower() == "script":
                out.append(ch.line)
                break
    return out


def append_lines(js: JsFile) -> list[int]:
    return [ch.line for ch in js.chains
            if ch.segments[-1] in ("appendChild", "append") and (len(ch.segments) > 1 or ch.leading_dot)]


def src_assignments(js: JsFile) -> list[Concat]:
    """Right-hand sides assigned to a ``.src`` property or via ``setAttribute("src", ...)``."""
    tokens = js.tokens
    sig = significant(tokens)
    pos_of = {idx: k for k, idx in enumerate(sig)}
    out = []
    for ch in js.chains:
        last = ch.token_indices[-1]
        if ch.segments[-1] == "src" and (len(ch.segments) > 1 or ch.leading_dot):
            k = pos_of[last] + 1
            if k + 1 < len(sig) and tokens[sig[k]].kind == PUNCTUATION and tokens[sig[k]].text == "=":
                parsed = concat_at(tokens, sig, k + 1, js.env)
                if parsed:
                    out.append(parsed[0])
        elif ch.segments[-1] == "setAttribute":
            args = js.call_args(ch)
            if not args:
                continue
            first = [j for j in args if tokens[j].kind not in ("whitespace", "comment")]
            if (len(first) >= 3 and literal_value(tokens[first[0]]) == "src"
                    and tokens[first[1]].text == ","):
                parsed = concat_at(tokens, sig, pos_of[first[2]], js.env)
                if parsed:
                    out.append(parsed[0])
    return out


def remote_src_assignments(js: JsFile) -> list[Concat]:
    return [c for c in src_assignments(js) if c.mentions_remote()]


def string_code_lines(js: JsFile) -> list[tuple[int, str]]:
    """``eval(`` and ``new Function(`` call sites in code context."""
    tokens = js.tokens
    sig = significant(tokens)
    out = []
    for k, idx in enumerate(sig):
        tok = tokens[idx]
        if tok.kind != IDENTIFIER or tok.text not in ("eval", "Function"):
            continue
        nxt = tokens[sig[k + 1]] if k + 1 < len(sig) else None
        if nxt is None or nxt.text != "(":
            continue
        prev = tokens[sig[k - 1]] if k else None
        if tok.text == "eval" and not (prev is not None and prev.text in (".", "?.")):
            out.append((tok.line, "eval"))
        elif tok.text == "Function" and prev is not None and prev.text == "new":
            out.append((tok.line, "new Function"))
    return out


def blocking_listener_lines(js: JsFile) -> list[int]:
    """webRequest listener registrations that request the ``"blocking"`` option."""
    out = []
    for ch in js.chains:
        if "webRequest" not in ch.segments:
            continue
        args = js.call_args(ch)
        if args is None:
            continue
        if any(js.tokens[j].kind == STRING and literal_value(js.tokens[j]) == "blocking" for j in args):
            out.append(ch.line)
    return out


def has_code_property(tokens: Sequence[Token], args: range) -> bool:
    """True if an object literal key ``code`` appears in the argument tokens."""
    idxs = [j for j in args if tokens[j].kind not in ("whitespace", "comment")]
    for a, b in zip(idxs, idxs[1:]):
        key = tokens[a]
        if tokens[b].text != ":":
            continue
        if key.kind == IDENTIFIER and key.text == "code":
            return True
        if key.kind == STRING and literal_value(key) == "code":
            return True
    return False


# ------------------------------------------------------------------- HTML

_SCRIPT_TAG = re.compile(r"<script\b([^>]*)>(.*?)</script\s*>", re.IGNORECASE | re.DOTALL)
_SRC_ATTR = re.compile(r"""\bsrc\s*=\s*(?:"([^"]*)"|'([^']*)'|([^\s>]+))""", re.IGNORECASE)
_REMOTE = re.compile(r"^(?:https?:)?//", re.IGNORECASE)


@dataclass(frozen=True)
class ScriptTag:
    src: str | None
    body: str
    line: int  # line of the opening tag
    body_line: int  # line on which the body starts


def script_tags(html: str) -> list[ScriptTag]:
    out = []
    for m in _SCRIPT_TAG.finditer(html):
        attr = _SRC_ATTR.search(m.group(1))
        src = None
        if attr:
            src = next(g for g in attr.groups() if g is not None)
        out.append(ScriptTag(
            src=src,
            body=m.group(2),
            line=html.count("\n", 0, m.start()) + 1,
            body_line=html.count("\n", 0, m.start(2)) + 1,
        ))
    return out


def is_remote(url: str) -> bool:
    return bool(_REMOTE.match(url.strip()))
