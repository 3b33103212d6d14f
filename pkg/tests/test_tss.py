import pytest
from hypothesis import given

from conftest import hdr, headers, rulesets
from tuplespace.oracle import classify_linear, classify_linear_batch
from tuplespace.rulemodel import IpPrefix, Rule, RuleSet, TtlBand, Tuple, tuple_of_rule
from tuplespace.traffic import generate_ruleset, random_headers
from tuplespace.tss import Fnv1a64, TupleTable, build_tss, classify_tss, key_of

P = lambda s: IpPrefix.parse(s)[0]  # noqa: E731
ANY = IpPrefix()


@pytest.mark.parametrize("data, expected", [
    # published FNV-1a 64-bit test vectors
    (b"", 0xCBF29CE484222325),
    (b"a", 0xAF63DC4C8601EC8C),
    (b"foobar", 0x85944171F73967E8),
])
def test_fnv1a_vectors(data, expected):
    assert Fnv1a64()(data) == expected


def test_fnv_seed_changes_hash():
    assert Fnv1a64(1)(b"abc") != Fnv1a64()(b"abc")


def test_key_masks_destination():
    k = key_of(hdr(dst="10.1.2.3"), Tuple(8, 0, False, False, False), 64)
    assert len(k) == 11
    assert k[:4] == bytes([10, 0, 0, 0])


def test_key_all_zero_for_wildcard_tuple():
    k = key_of(hdr(src="1.2.3.4", dst="5.6.7.8", proto=6, ttl=9, tos=46),
               Tuple(0, 0, False, False, False), 64)
    assert k == bytes(11)


def test_key_ttl_band_byte():
    t = Tuple(0, 0, False, True, False)
    assert key_of(hdr(ttl=200), t, 64)[9] == 2
    assert key_of(hdr(ttl=64), t, 64)[9] == 1
    assert key_of(hdr(ttl=200), Tuple(0, 0, False, False, False), 64)[9] == 0


def test_grouping_two_tuples():
    rs = RuleSet((
        Rule(1, 1, ANY, P("10.0.0.0/8"), None, TtlBand.ANY, None, 1),
        Rule(2, 2, ANY, P("11.0.0.0/8"), None, TtlBand.ANY, None, 1),
        Rule(3, 3, ANY, ANY, None, TtlBand.ANY, None, 2),
    ))
    c = build_tss(rs)
    assert [len(t) for t in c.tables] == [2, 1]


def test_entries_sum_to_n():
    rs = generate_ruleset(3, 100)
    c = build_tss(rs)
    assert c.entry_count() == 100
    assert c.table_count <= 100


def test_protocol_partition_splits_tables():
    rs = RuleSet((
        Rule(1, 1, ANY, ANY, 17, TtlBand.ANY, None, 1),
        Rule(2, 2, ANY, ANY, 6, TtlBand.ANY, None, 2),
        Rule(3, 3, ANY, ANY, None, TtlBand.ANY, None, 3),
    ))
    assert build_tss(rs, proto_partition=True).table_count == 3
    assert build_tss(rs, proto_partition=False).table_count == 2
    c = build_tss(rs)
    # udp header reaches the udp table and the proto-any table only
    assert classify_tss(c, hdr(proto=17)).probes == 2


def test_matches_oracle_on_three_rules(three_rules):
    c = build_tss(three_rules)
    h = hdr(dst="10.1.2.3")
    assert classify_tss(c, h).flow == classify_linear(three_rules, h).flow == 2


def test_probe_count_constant_without_partition():
    rules = []
    for i, (d, s) in enumerate([(0, 0), (8, 0), (16, 0), (8, 8), (24, 16)], 1):
        rules.append(Rule(i, i, IpPrefix.canonical(0xC0A80000, s), IpPrefix.canonical(0x0A010100, d),
                          None, TtlBand.ANY, None, 1))
    rs = RuleSet(tuple(rules))
    c = build_tss(rs, proto_partition=False)
    assert c.table_count == 5
    for h in random_headers(rs, 200, seed=4):
        assert classify_tss(c, h).probes == 5


def test_table_rejects_foreign_tuple():
    t = TupleTable(Tuple(8, 0, False, False, False))
    with pytest.raises(ValueError):
        t.insert(Rule(1, 1, ANY, ANY, None, TtlBand.ANY, None, 1))


def test_duplicate_keys_resolved_by_priority():
    rs = RuleSet((
        Rule(1, 9, ANY, P("10.0.0.0/8"), None, TtlBand.ANY, None, 1),
        Rule(2, 3, ANY, P("10.0.0.0/8"), None, TtlBand.ANY, None, 2),
    ))
    r = build_tss(rs).classify(hdr(dst="10.2.3.4"))
    assert (r.rule_id, r.flow) == (2, 2)


@pytest.mark.parametrize("partition", [True, False])
def test_oracle_cross_check_10k(partition):
    rs = generate_ruleset(21, 300, length_distribution=(2, 1, 1, 1, 1))
    hs = random_headers(rs, 10_000, seed=8)
    ref = classify_linear_batch(rs, hs)
    c = build_tss(rs, partition)
    got = [c.classify(h).rule_id or 0 for h in hs]
    assert got == ref.tolist()


@given(rulesets(), headers())
def test_oracle_equivalence_property(rs, h):
    want = classify_linear(rs, h)
    for part in (True, False):
        got = build_tss(rs, part).classify(h)
        assert (got.rule_id, got.flow) == (want.rule_id, want.flow)


@given(rulesets(), headers())
def test_collisions_do_not_change_results(rs, h):
    normal = build_tss(rs).classify(h)
    collide = build_tss(rs, hash_fn=lambda key: 0).classify(h)
    assert (collide.rule_id, collide.flow) == (normal.rule_id, normal.flow)


@given(rulesets(), headers())
def test_store_once_and_probe_bound(rs, h):
    c = build_tss(rs)
    assert c.entry_count() == len(rs)
    for t in c.tables:
        assert all(tuple_of_rule(rs.by_id()[e[2]]) == t.tuple for e in t.entries())
    assert c.classify(h).probes <= c.table_count
    distinct = {tuple_of_rule(r) for r in rs.rules}
    assert build_tss(rs, False).table_count == len(distinct) <= len(rs)
