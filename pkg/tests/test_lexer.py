import random

from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import FIXTURES
from mv3kit.lexer import (
    COMMENT, IDENTIFIER, NON_CODE, PUNCTUATION, REGEX, STRING, count_api_hits, extract_chains, find_api_hits, loc_changed, normalize_lines, tokenize,
)
from mv3kit.scanner import TAXONOMY_APIS

ADVERSARIAL = (FIXTURES / "adversarial" / "strings_comments.js").read_text()


def kinds(src):
    return [(t.kind, t.text) for t in tokenize(src) if t.kind != "whitespace"]


def test_eval_call_tokens():
    assert kinds('eval("x")') == [(IDENTIFIER, "eval"), (PUNCTUATION, "("), (STRING, '"x"'), (PUNCTUATION, ")")]


def test_comment_hides_identifiers():
    toks = tokenize("// eval\nfetch(u)")
    assert toks[0].kind == COMMENT and "eval" in toks[0].text
    assert [t.text for t in toks if t.kind == IDENTIFIER] == ["fetch", "u"]


def test_no_chain_from_string():
    toks = tokenize('var s = "chrome.tabs.executeScript"')
    assert any(t.kind == STRING for t in toks)
    assert all("executeScript" not in ch.segments for ch in extract_chains(toks))


def test_spans_and_lines():
    src = "a\n  b /* c\n d */ e"
    toks = tokenize(src)
    for t in toks:
        assert src[t.span[0]:t.span[1]] == t.text
    assert {t.text: t.line for t in toks if t.kind == IDENTIFIER} == {"a": 1, "b": 2, "e": 3}


def test_chains():
    assert [c.segments for c in extract_chains(tokenize("chrome.runtime.sendMessage(m)"))] == [
        ("chrome", "runtime", "sendMessage"), ("m",)]
    chains = extract_chains(tokenize("chrome  .  tabs\n.executeScript(x)"))
    assert chains[0].segments == ("chrome", "tabs", "executeScript")
    assert chains[0].line == 1
    assert extract_chains(tokenize("a.eval(x)"))[0].segments == ("a", "eval")


def test_chain_through_comment():
    assert extract_chains(tokenize("chrome./* c */runtime.connect()"))[0].segments == ("chrome", "runtime", "connect")


def test_computed_receiver_marks_leading_dot():
    chains = extract_chains(tokenize("x[0].runtime.connect()"))
    tail = [c for c in chains if "connect" in c.segments][0]
    assert tail.leading_dot


def test_eval_counts():
    assert count_api_hits("eval(a); eval(b)", ["eval"]) == {"eval": 2}
    assert count_api_hits("/* eval */ \"eval\"", ["eval"]) == {"eval": 0}
    assert count_api_hits("a.eval(x); var eval2 = eval", ["eval"]) == {"eval": 0}


def test_fetch_counts_both_forms():
    assert count_api_hits("window.fetch(u); fetch(v)", ["fetch"]) == {"fetch": 2}


def test_trailing_segment_alias():
    hits = find_api_hits("chrome.runtime.sendMessage(a); browser.runtime.sendMessage(b)", ["runtime.sendMessage"])
    assert len(hits) == 2
    assert [h.alias_matched for h in hits] == [False, True]


def test_listener_chain_needs_full_tail():
    src = "chrome.runtime.onMessage.addListener(f); chrome.runtime.onMessage.removeListener(f)"
    assert count_api_hits(src, ["runtime.onMessage.addListener"]) == {"runtime.onMessage.addListener": 1}


def test_adversarial_fixture_has_no_code_hits():
    assert set(count_api_hits(ADVERSARIAL, TAXONOMY_APIS).values()) == {0}
    assert sum(count_api_hits(ADVERSARIAL, TAXONOMY_APIS, mode="permissive").values()) > 0


def test_adversarial_fixture_regexes():
    regexes = [t.text for t in tokenize(ADVERSARIAL) if t.kind == REGEX]
    assert regexes == ["/eval\\(|fetch\\//g", "/[/]eval(/"]


def test_division_is_not_regex():
    assert not [t for t in tokenize("a = b / c / d; e = (f) / 2") if t.kind == REGEX]
    assert [t.text for t in tokenize("x = /ab+c/i.test(s)") if t.kind == REGEX] == ["/ab+c/i"]
    assert [t.text for t in tokenize("return /x/") if t.kind == REGEX] == ["/x/"]


def test_unterminated_constructs_warn():
    for src in ['"abc', "/* open", "`tpl ${ x", "'q\n"]:
        warnings = []
        toks = tokenize(src, warnings)
        assert "".join(t.text for t in toks) == src
        if src != "'q\n":
            assert warnings


def test_normalize_examples():
    assert normalize_lines("a();b();") == "a();\nb();"
    assert normalize_lines("a(); b(); c();").splitlines() == ["a();", "b();", "c();"]
    assert normalize_lines("if (x) { y(); } // done") == "if (x) {\ny();\n}"


def test_loc_changed_examples():
    original = "a();b();c();"
    assert loc_changed(original, original) == 0
    assert loc_changed(original, "a();x();c();") == 4


def test_loc_changed_nonnegative_on_noise():
    assert loc_changed("", "") == 0
    assert loc_changed("x\n", "y\n") >= 0


# ----------------------------------------------------------------- properties

JS_PIECES = [
    "var", " ", "\n", "\t", "x", "y1", "$_", "chrome", ".", "runtime", "eval", "fetch", "(", ")", "{", "}",
    "[", "]", ";", ",", "=", "+", "-", "*", "/", "%", "<", ">", "!", "?", ":", "&&", "||", "=>", "===",
    '"', "'", "`", "${", "\\", "//", "/*", "*/", "0", "1.5e3", "0x1F", ".5", " ", "\r\n", "é", "😀",
    "return", "typeof", "/re/g", "'s'", '"d"', "`t`", "\x00",
]


def fuzz_corpus(n=10_000, seed=20240517):
    rng = random.Random(seed)
    for _ in range(n):
        k = rng.randint(0, 40)
        if rng.random() < 0.1:
            yield "".join(chr(rng.randint(0, 0x2FFF)) for _ in range(k))
        else:
            yield "".join(rng.choice(JS_PIECES) for _ in range(k))


def test_lossless_on_fuzz_corpus():
    count = 0
    for src in fuzz_corpus():
        toks = tokenize(src)
        assert "".join(t.text for t in toks) == src
        assert all(t.text for t in toks)
        count += 1
    assert count == 10_000


def test_no_hits_inside_non_code_on_fuzz_corpus():
    for src in fuzz_corpus(2_000, seed=7):
        toks = tokenize(src)
        for hit in find_api_hits(toks, TAXONOMY_APIS):
            covering = [t for t in toks if t.span[0] <= hit.span[0] < t.span[1]]
            assert covering[0].kind not in NON_CODE


@settings(max_examples=300, deadline=None)
@given(st.text(max_size=200))
def test_lossless_arbitrary_text(src):
    assert "".join(t.text for t in tokenize(src)) == src


TOKEN_CHOICES = [
    ["x", "chrome", "eval", "fetch", "a1", "$", "return", "typeof"],
    ["(", ")", "{", "}", ";", ",", ".", "=", "+", "[", "]", "/", "*", "=>"],
    ["1", "2.5", "0x10"],
    ['"a;b"', "'{x}'", "`t ${y} ;`", "/*c;*/", "//c {\n", "/re+/g"],
    [" ", "  ", "\n", "\t", " \n "],
]


def well_formed_corpus(n, seed):
    """Seeded sequences of complete tokens; whitespace may sit anywhere."""
    rng = random.Random(seed)
    for _ in range(n):
        yield " ".join(rng.choice(rng.choice(TOKEN_CHOICES)) for _ in range(rng.randint(0, 40)))


WELL_FORMED = st.one_of(
    st.sampled_from(["x", "chrome", "eval", "fetch", "a1", "$"]),
    st.sampled_from(["(", ")", "{", "}", ";", ",", ".", "=", "+", "[", "]", "/"]),
    st.sampled_from(["1", "2.5", "0x10"]),
    st.text(alphabet="ab ;{}", max_size=5).map(lambda s: '"' + s + '"'),
    st.text(alphabet="ab ;{}", max_size=5).map(lambda s: "'" + s + "'"),
    st.text(alphabet="ab ;{}", max_size=5).map(lambda s: "`" + s + "`"),
    st.text(alphabet="ab ;{}", max_size=5).map(lambda s: "/*" + s + "*/"),
    st.text(alphabet="ab ;{}", max_size=5).map(lambda s: "//" + s + "\n"),
    st.sampled_from([" ", "  ", "\n", "\t", " \n "]),
)


@settings(max_examples=400, deadline=None)
@given(st.lists(WELL_FORMED, max_size=40))
def test_normalize_idempotent(pieces):
    src = " ".join(pieces)
    once = normalize_lines(src)
    assert normalize_lines(once) == once


def test_normalize_idempotent_seeded():
    for src in well_formed_corpus(3_000, seed=11):
        once = normalize_lines(src)
        assert normalize_lines(once) == once, repr(src)


@settings(max_examples=200, deadline=None)
@given(st.lists(WELL_FORMED, max_size=30), st.lists(WELL_FORMED, max_size=30))
def test_hit_counts_add_over_concatenation(a, b):
    s1, s2 = " ".join(a) + ";", ";" + " ".join(b)
    whole = count_api_hits(s1 + "\n" + s2, TAXONOMY_APIS)
    parts = count_api_hits(s1, TAXONOMY_APIS)
    for api, n in count_api_hits(s2, TAXONOMY_APIS).items():
        parts[api] += n
    # only when the boundary does not fall inside a string or comment
    if all(t.kind not in NON_CODE or "\n" not in t.text for t in tokenize(s1 + "\n" + s2)):
        assert whole == parts


def test_normalize_keeps_break_that_stops_a_regex():
    src = "a ) / re + / g\n`t` + /"
    once = normalize_lines(src)
    assert [t.kind for t in tokenize(once) if t.kind == "regex_literal"] == []
    assert normalize_lines(once) == once
