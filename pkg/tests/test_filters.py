import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import oracle_rule_matches, oracle_verdict
from mv3kit.errors import MalformedUrl
from mv3kit.filters import classify_url, matches, parse_filter_list, parse_rule, serialize
from mv3kit.suffixes import registrable_domain

# expected values produced by oracles.oracle_rule_matches and frozen here
FROZEN = [
    ('||malicious_site.com^', 'https://malicious_site.com/js/malicious_3rd_party_payload.js', True),
    ('||malicious_site.com^', 'https://notmalicious_site.com/', False),
    ('||malicious_site.com^', 'https://cdn.malicious_site.com/x.js', True),
    ('||malicious_site.com^', 'https://malicious_site.com.evil.io/', False),
    ('||malicious_site.com^', 'https://user@malicious_site.com/', True),
    ('||malicious_site.com^', 'https://malicious_site.com:8443/', True),
    ('||malicious_site.com^', 'https://malicious_site.com', True),
    ('|https://a.b/x|', 'https://a.b/x', True),
    ('|https://a.b/x|', 'https://a.b/xy', False),
    ('|http://', 'https://a.b/', False),
    ('ads*banner', 'http://ads.example.com/img/banner.png', True),
    ('ads*banner', 'http://example.com/banner/ads', False),
    ('/track^', 'https://site.com/track?x=1', True),
    ('/track^', 'https://site.com/tracker', False),
    ('/track^', 'https://site.com/track', True),
    ('*.js|', 'https://cdn.site.com/app.js', True),
    ('*.js|', 'https://cdn.site.com/app.js?v=2', False),
    ('||evil.net', 'https://evil.network/', True),
    ('||evil.net^', 'https://evil.network/', False),
    ('||co.uk^', 'https://news.co.uk/', True),
    ('.gif^', 'https://site.com/img.gif', True),
    ('.gif^', 'https://site.com/img.gifx', False),
    ('^foo^', 'http://foo.bar/foo/', True),
    ('^foo^', 'http://foobar/', False),
    ('||a.com*b^', 'https://a.com/zzzb', True),
    ('||example.org/path^*q=', 'https://example.org/path/?q=1', True),
    ('||example.org/path^*q=', 'https://example.org/pathq=1', False),
    ('BANNER', 'https://x.com/Banner.png', True),
    ('||sub.example.com^$third-party', 'https://sub.example.com/a', True),
    ('@@||good.cdn.com^', 'https://good.cdn.com/lib.js', True),
    ('swf|', 'http://site.com/banner.swf', True),
    ('a^b', 'https://x.com/a%b', False),
    ('a^b', 'https://x.com/a~b', True),
]


@pytest.mark.parametrize("rule,url,expected", FROZEN)
def test_frozen_pairs(rule, url, expected):
    assert matches(parse_rule(rule), url) is expected
    assert oracle_rule_matches(rule, url) is expected


def test_comment_and_empty_lines():
    rs, warnings = parse_filter_list("! comment\n\n[Adblock Plus 2.0]\n")
    assert len(rs) == 0 and warnings == []


def test_domain_anchored_rule():
    rule = parse_rule("||malicious_site.com^")
    assert rule.anchor == "domain" and not rule.exception


def test_exception_with_third_party():
    rs, _ = parse_filter_list("@@||good.cdn.com^$third-party")
    assert len(rs.exception_rules) == 1 and not rs.block_rules
    assert rs.exception_rules[0].third_party is True


def test_partition_and_warnings():
    text = "\n".join([
        "||a.com^", "@@||b.com^", "example.##.ad", "example.com#@#.banner", "/ads\\d+/",
        "||c.com^$script,popup", "plain-domain.org", "0.0.0.0 hosts.example", "# hosts comment",
    ])
    rs, warnings = parse_filter_list(text)
    assert len(rs.block_rules) == 2 and len(rs.exception_rules) == 1
    assert rs.plain_domains == {"plain-domain.org", "hosts.example"}
    codes = [w.code for w in warnings]
    assert codes.count("element_hiding") == 2
    assert "regex_filter" in codes and codes.count("ignored_option") == 2
    assert rs.block_rules[1].unknown_options == ("script", "popup")


def test_classify_examples():
    rs, _ = parse_filter_list("||x.com^")
    assert classify_url(rs, "https://x.com/a").kind == "blocked"
    rs, _ = parse_filter_list("||x.com^\n@@||x.com/safe^")
    assert classify_url(rs, "https://x.com/safe/r").kind == "excepted"
    empty, _ = parse_filter_list("")
    assert classify_url(empty, "https://anything.example/").kind == "clean"


def test_plain_domain_blocks_subdomains():
    rs, _ = parse_filter_list("evil.net\n")
    assert classify_url(rs, "https://a.b.evil.net/x").domain == "evil.net"
    assert classify_url(rs, "https://notevil.net/").kind == "clean"


def test_third_party_and_domain_options():
    rule = parse_rule("||track.io^$third-party,domain=news.com|~blog.news.com")
    assert matches(rule, "https://track.io/p", {"origin_host": "www.news.com"})
    assert not matches(rule, "https://track.io/p", {"origin_host": "blog.news.com"})
    assert not matches(rule, "https://track.io/p", {"origin_host": "other.com"})
    assert not matches(rule, "https://track.io/p", {"origin_host": "cdn.track.io"})
    assert matches(rule, "https://track.io/p")  # no context: options ignored


@pytest.mark.parametrize("url", ["not a url", "//host/path", "mailto:", "https://"])
def test_malformed_url(url):
    with pytest.raises(MalformedUrl):
        matches(parse_rule("x"), url)


@pytest.mark.parametrize("line", [r[0] for r in FROZEN] + ["||a.com^$third-party,domain=b.com|~c.b.com", "@@|x*y^|"])
def test_serialize_round_trip(line):
    rule = parse_rule(line)
    assert parse_rule(serialize(rule)) == rule


@pytest.mark.parametrize("host,expected", [
    ("example.com", "example.com"), ("a.b.example.co.uk", "example.co.uk"), ("bar.github.io", "bar.github.io"),
    ("localhost", "localhost"), ("127.0.0.1", "127.0.0.1"), ("x.unknowntld", "x.unknowntld"),
])
def test_registrable_domain(host, expected):
    assert registrable_domain(host) == expected


# ---------------------------------------------------------------- properties

PIECES = ["a", "b", "x.com", ".", "/", "^", "*", "-", "ads", "?q=", "1"]
URLS = [
    "https://x.com/ads/a.b", "http://a.x.com/b?q=1", "https://b.a/x.com/", "http://ads.b/1-a",
    "https://x.com", "https://a.b.x.com:81/ads^", "http://q.io/a*b", "https://b-ads.x.com/x.com/ads",
]


def random_rule(rng):
    body = "".join(rng.choice(PIECES) for _ in range(rng.randint(1, 5)))
    prefix = rng.choice(["", "", "|", "||", "@@", "@@||"])
    suffix = rng.choice(["", "", "|"])
    return prefix + body + suffix


def test_random_rules_agree_with_oracle():
    rng = random.Random(99)
    for _ in range(2000):
        rule, url = random_rule(rng), rng.choice(URLS)
        parsed = parse_rule(rule)
        if parsed is None:
            continue
        assert matches(parsed, url) == oracle_rule_matches(rule, url), (rule, url)


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32), st.randoms(use_true_random=False))
def test_verdict_class_permutation_invariant(seed, shuffler):
    rng = random.Random(seed)
    lines = [random_rule(rng) for _ in range(rng.randint(1, 12))]
    lines = [l for l in lines if parse_rule(l) is not None]
    domains = ["x.com"] if rng.random() < 0.3 else []
    shuffled = lines[:]
    shuffler.shuffle(shuffled)
    rs1, _ = parse_filter_list("\n".join(lines + domains))
    rs2, _ = parse_filter_list("\n".join(domains + shuffled))
    for url in URLS:
        assert classify_url(rs1, url).kind == classify_url(rs2, url).kind == oracle_verdict(lines, url, domains)


def test_trailing_dot_fqdn_is_plain_domain():
    rs, _ = parse_filter_list("x.com.")
    assert rs.plain_domains == frozenset({"x.com"})
    assert classify_url(rs, "https://a.x.com/").kind == "blocked"
    assert oracle_verdict(["x.com."], "https://a.x.com/") == "blocked"
