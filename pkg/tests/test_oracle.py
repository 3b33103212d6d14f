from hypothesis import given
from hypothesis import strategies as st

from conftest import hdr, headers, rulesets
from tuplespace.oracle import MatchResult, classify_linear, classify_linear_batch
from tuplespace.rulemodel import IpPrefix, Rule, RuleSet, TtlBand


def test_longer_destination_prefix_wins(three_rules):
    # by hand: R1 (10/8) and R2 (10.1/16) and R3 (*) all match; R2 has dst_len 16
    r = classify_linear(three_rules, hdr(dst="10.1.2.3"))
    assert (r.rule_id, r.flow, r.probes) == (2, 2, 3)


def test_only_wildcard_matches(three_rules):
    # 192.0.2.1 is outside 10/8, so only R3 matches
    r = classify_linear(three_rules, hdr(dst="192.0.2.1"))
    assert (r.rule_id, r.flow, r.probes) == (3, 3, 3)


def test_single_rule():
    rs = RuleSet((Rule(1, 1, IpPrefix(), IpPrefix(), None, TtlBand.ANY, None, 7),))
    assert classify_linear(rs, hdr()) == MatchResult(1, 7, probes=1)


def test_no_match_is_empty_result():
    rs = RuleSet((Rule(1, 1, IpPrefix(), IpPrefix(), 6, TtlBand.ANY, None, 7),))
    r = classify_linear(rs, hdr(proto=17))
    assert not r.matched and r.flow is None and r.probes == 1


@given(rulesets(catch_all=False), headers())
def test_probes_always_n(rs, h):
    assert classify_linear(rs, h).probes == len(rs)


@given(rulesets(max_size=15), st.lists(headers(), min_size=1, max_size=30))
def test_batch_scan_agrees_with_scalar_scan(rs, hs):
    batch = classify_linear_batch(rs, hs, chunk=7)
    for h, got in zip(hs, batch):
        assert classify_linear(rs, h).rule_id == (got or None)


def test_deterministic(three_rules):
    h = hdr(dst="10.9.9.9")
    assert classify_linear(three_rules, h) == classify_linear(three_rules, h)
