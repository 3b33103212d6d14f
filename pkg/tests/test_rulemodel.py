import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import hdr, prefixes, rulesets
from tuplespace.rulemodel import (
    IpPrefix, Rule, RuleSet, RuleSyntaxError, TtlBand, Tuple, format_ruleset, match_key,
    match_order, parse_ruleset, rule_matches, tuple_of_rule,
)

P = lambda s: IpPrefix.parse(s)[0]  # noqa: E731
ANY = IpPrefix()


def test_parse_full_line():
    rs = parse_ruleset("10 192.168.1.0/24 10.0.0.0/8 udp low 46 1")
    (r,) = rs.rules
    assert r == Rule(1, 10, P("192.168.1.0/24"), P("10.0.0.0/8"), 17, TtlBand.LOW, 46, 1)
    assert rs.ttl_threshold == 64
    assert rs.warnings == ()


def test_parse_wildcards():
    (r,) = parse_ruleset("5 * * tcp any * 4").rules
    assert r.src == r.dst == IpPrefix(0, 0)
    assert (r.proto, r.ttl, r.tos, r.flow) == (6, TtlBand.ANY, None, 4)


def test_duplicate_priority_names_second_line():
    text = "# header\n7 * * tcp any * 1\n\n7 * * udp any * 2\n"
    with pytest.raises(RuleSyntaxError) as exc:
        parse_ruleset(text)
    assert exc.value.lineno == 4
    assert "duplicate priority 7" in str(exc.value)


def test_parse_threshold_directive_and_numeric_proto():
    rs = parse_ruleset("!ttl_threshold 100\n1 * * 1 high * 2  # icmp\n")
    assert rs.ttl_threshold == 100
    assert rs.rules[0].proto == 1


def test_non_canonical_prefix_is_fixed_with_warning():
    rs = parse_ruleset("1 10.1.2.3/8 * * any * 1\n2 * 10.0.0.0/8 * any * 1\n")
    assert rs.rules[0].src == P("10.0.0.0/8")
    assert rs.warnings == (1,)


@pytest.mark.parametrize("line, reason", [
    ("1 * * tcp any *", "expected 7 fields"),
    ("x * * tcp any * 1", "invalid literal"),
    ("1 * * tcp 10-20 * 1", "ttl must be"),
    ("1 10.0.0.0/33 * tcp any * 1", "out of range"),
    ("1 * * 300 any * 1", "0..255"),
    ("1 * * tcp any * 0", "positive"),
    ("!bogus 3", "unknown directive"),
])
def test_syntax_errors(line, reason):
    with pytest.raises(RuleSyntaxError) as exc:
        parse_ruleset("\n" + line)
    assert exc.value.lineno == 2
    assert reason in str(exc.value)


def test_rule_matches_examples():
    r = Rule(1, 1, P("192.168.1.0/24"), ANY, None, TtlBand.ANY, None, 1)
    assert rule_matches(r, hdr(src="192.168.1.77"))
    low = Rule(1, 1, ANY, ANY, None, TtlBand.LOW, None, 1)
    assert not rule_matches(low, hdr(ttl=200), 64)
    assert rule_matches(low, hdr(ttl=64), 64)
    udp = Rule(1, 1, ANY, ANY, 17, TtlBand.ANY, None, 1)
    assert not rule_matches(udp, hdr(proto=6))


def test_tuple_of_rule_examples():
    r = Rule(1, 1, P("1.2.3.0/24"), P("1.2.0.0/16"), 6, TtlBand.ANY, None, 1)
    assert tuple_of_rule(r) == Tuple(16, 24, True, False, False)
    assert tuple_of_rule(Rule(1, 1, ANY, ANY, None, TtlBand.ANY, None, 1)) == Tuple(0, 0, False, False, False)
    full = Rule(1, 1, P("1.2.3.4/32"), P("5.6.7.8/32"), 17, TtlBand.HIGH, 0, 1)
    assert tuple_of_rule(full) == Tuple(32, 32, True, True, True)


def test_match_order_examples():
    a = (Tuple(24, 0, False, False, False), 9)
    b = (Tuple(16, 32, True, True, True), 1)
    assert match_order(a, b) == -1 and match_order(b, a) == 1
    t = Tuple(8, 8, True, False, False)
    assert match_order((t, 3), (t, 8)) == -1
    assert match_order((Tuple(8, 8, True, True, True), 5), (Tuple(8, 8, True, False, False), 1)) == -1


@given(prefixes())
def test_canonicalisation_idempotent(p):
    assert IpPrefix.canonical(p.value, p.length) == p
    assert IpPrefix.parse(str(p)) == (p, False)


def test_non_canonical_constructor_rejected():
    with pytest.raises(ValueError):
        IpPrefix(0x0A000001, 8)


@given(rulesets())
def test_format_parse_round_trip(rs):
    back = parse_ruleset(format_ruleset(rs))
    assert back == rs
    assert back.warnings == ()


@given(rulesets(), st.integers(0, 0xFFFFFFFF), st.integers(0, 0xFFFFFFFF), st.integers(0, 255))
def test_tuple_ignores_field_values(rs, a, b, v):
    for r in rs.rules:
        other = Rule(r.id, r.priority, IpPrefix.canonical(a, r.src.length),
                     IpPrefix.canonical(b, r.dst.length),
                     None if r.proto is None else v, r.ttl,
                     None if r.tos is None else 255 - v, r.flow)
        assert tuple_of_rule(other) == tuple_of_rule(r)


tuples = st.builds(Tuple, st.sampled_from((0, 8, 16, 24, 32)), st.sampled_from((0, 8, 16, 24, 32)),
                   st.booleans(), st.booleans(), st.booleans())
pairs = st.tuples(tuples, st.integers(1, 50))


@given(pairs, pairs, pairs)
def test_match_order_is_strict_total_order(a, b, c):
    if a[1] == b[1] and a != b:
        return  # priorities are unique within a ruleset
    ab, ba = match_order(a, b), match_order(b, a)
    assert ab == -ba
    assert (ab == 0) == (a[1] == b[1] and a[0].rank == b[0].rank)
    if a[1] != b[1]:
        assert ab != 0
    if match_order(a, b) == -1 and match_order(b, c) == -1:
        assert match_order(a, c) == -1


def test_ruleset_rejects_duplicate_priorities_and_bad_threshold():
    r = Rule(1, 1, ANY, ANY, None, TtlBand.ANY, None, 1)
    with pytest.raises(ValueError):
        RuleSet((r, Rule(2, 1, ANY, ANY, None, TtlBand.ANY, None, 1)))
    with pytest.raises(ValueError):
        RuleSet((r,), ttl_threshold=255)


def test_match_key_prefers_maximum():
    keys = [match_key(Tuple(8, 0, False, False, False), 1), match_key(Tuple(8, 0, False, False, False), 2)]
    assert max(keys) == keys[0]
