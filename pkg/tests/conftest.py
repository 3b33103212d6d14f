import hypothesis.strategies as st
import pytest
from hypothesis import settings

from tuplespace.rulemodel import IpPrefix, PacketHeader, Rule, RuleSet, TtlBand

settings.register_profile("ci", max_examples=200, deadline=None)
settings.register_profile("dev", max_examples=50, deadline=None)
settings.load_profile("ci")

PROTOS = (None, 6, 17)
TOSES = (None, 0, 34, 46)

# a few fixed base addresses so random prefixes overlap often
BASES = (0x0A000000, 0x0A010000, 0x0A010100, 0xC0A80000, 0xC0A80101)


@st.composite
def prefixes(draw, lengths=(0, 8, 16, 24, 32)):
    length = draw(st.sampled_from(lengths))
    base = draw(st.one_of(st.sampled_from(BASES), st.integers(0, 0xFFFFFFFF)))
    return IpPrefix.canonical(base, length)


@st.composite
def rule_lists(draw, min_size=1, max_size=12, catch_all=True):
    n = draw(st.integers(min_size, max_size))
    prios = draw(st.lists(st.integers(1, 10_000), min_size=n, max_size=n, unique=True))
    rules = []
    for i, prio in enumerate(prios, 1):
        rules.append(Rule(
            i, prio, draw(prefixes()), draw(prefixes()),
            draw(st.sampled_from(PROTOS)), draw(st.sampled_from(list(TtlBand))),
            draw(st.sampled_from(TOSES)), draw(st.integers(1, 8)),
        ))
    if catch_all:
        rules.append(Rule(n + 1, 20_000, IpPrefix(), IpPrefix(), None, TtlBand.ANY, None, 9))
    return rules


@st.composite
def rulesets(draw, **kw):
    thr = draw(st.integers(1, 254))
    return RuleSet(tuple(draw(rule_lists(**kw))), thr)


@st.composite
def headers(draw):
    addr = st.one_of(
        st.sampled_from(BASES).map(lambda b: b | 0x7),
        st.integers(0, 0xFFFFFFFF),
    )
    return PacketHeader(
        draw(addr), draw(addr),
        draw(st.sampled_from((6, 17, 1))),
        draw(st.integers(0, 255)),
        draw(st.sampled_from((0, 34, 46, 8))),
    )


@pytest.fixture
def three_rules():
    """R1: dst 10/8 -> 1, R2: dst 10.1/16 -> 2, R3: wildcard -> 3."""
    anyp = IpPrefix()
    return RuleSet((
        Rule(1, 1, anyp, IpPrefix.parse("10.0.0.0/8")[0], None, TtlBand.ANY, None, 1),
        Rule(2, 2, anyp, IpPrefix.parse("10.1.0.0/16")[0], None, TtlBand.ANY, None, 2),
        Rule(3, 3, anyp, anyp, None, TtlBand.ANY, None, 3),
    ))


def hdr(src="0.0.0.0", dst="0.0.0.0", proto=17, ttl=64, tos=0):
    from tuplespace.rulemodel import parse_addr
    return PacketHeader(parse_addr(src), parse_addr(dst), proto, ttl, tos)


def skewed_scenario(count=10_000, seed=1):
    """Tiered ruleset plus a trace where ~94% of packets hit the most specific tuple."""
    from tuplespace.bench import SKEWED_DST_POOL, SKEWED_MIX
    from tuplespace.traffic import TrafficConfig, generate_trace, tiered_policy_ruleset
    cfg = TrafficConfig(seed=seed, packet_count=count, mix=SKEWED_MIX, dst_pools=(SKEWED_DST_POOL,))
    return tiered_policy_ruleset(), generate_trace(cfg)
