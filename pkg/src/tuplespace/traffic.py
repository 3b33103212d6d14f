"""Synthetic traffic and rulesets.

The default trace is a constant-rate stream of 64-byte packets at
1000 Mb/s with a 96 ns inter-packet gap, drawn evenly from four classes:
RTP (UDP, ToS 46), delay-sensitive UDP with low TTL (ToS 34), UDP with high
TTL, and TCP. :func:`demo_policy_ruleset` maps those classes onto flows 1-4.
"""

from __future__ import annotations

import csv
import io
import random
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

from .rulemodel import (
    DEFAULT_TTL_THRESHOLD, IpPrefix, PacketHeader, Rule, RuleSet, TtlBand, format_addr, parse_addr,
)

PROTO_TCP = 6
PROTO_UDP = 17
TOS_EF = 46  # RTP / expedited forwarding
TOS_AF41 = 34  # delay-sensitive UDP

CLASSES = ("rtp", "udp-low", "udp-high", "tcp")
PREFIX_LENGTHS = (0, 8, 16, 24, 32)

TRACE_COLUMNS = ("arrival_ns", "src", "dst", "proto", "ttl", "tos", "size")


class TraceFormatError(ValueError):
    def __init__(self, lineno: int, reason: str):
        super().__init__(f"line {lineno}: {reason}")
        self.lineno = lineno


@dataclass(frozen=True, slots=True)
class TraceRecord:
    hdr: PacketHeader
    arrival_ns: int
    size_bytes: int = 64


@dataclass
class TrafficConfig:
    seed: int = 1
    packet_count: int = 1000
    size_bytes: int = 64
    rate_mbps: int = 1000
    gap_ns: int = 96
    mix: tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0)
    ttl_threshold: int = DEFAULT_TTL_THRESHOLD
    src_pools: tuple[str, ...] = ("192.168.0.0/16",)
    dst_pools: tuple[str, ...] = ("10.0.0.0/8",)

    def __post_init__(self):
        self.mix = tuple(float(w) for w in self.mix)
        if len(self.mix) != 4:
            raise ValueError("mix needs exactly four weights (rtp, udp-low, udp-high, tcp)")
        if any(w < 0 for w in self.mix) or not any(self.mix):
            raise ValueError("mix weights must be non-negative and not all zero")
        if self.size_bytes < 1 or self.rate_mbps <= 0 or self.gap_ns < 0 or self.packet_count < 0:
            raise ValueError("invalid size, rate, gap or count")
        if not 1 <= self.ttl_threshold <= 254:
            raise ValueError("ttl_threshold must be in 1..254")
        if not self.src_pools or not self.dst_pools:
            raise ValueError("address pools must not be empty")


def wire_time_ns(size_bytes: int, rate_mbps: float) -> Fraction:
    """Serialisation time of ``size_bytes`` at ``rate_mbps``."""
    return Fraction(size_bytes * 8 * 1000) / Fraction(rate_mbps)


def inter_arrival_ns(cfg: TrafficConfig) -> Fraction:
    return wire_time_ns(cfg.size_bytes, cfg.rate_mbps) + cfg.gap_ns


def demo_policy_ruleset(ttl_threshold: int = DEFAULT_TTL_THRESHOLD) -> RuleSet:
    """Four-flow policy plus a catch-all (flow 5)."""
    any_ = IpPrefix()
    rules = [
        Rule(1, 1, any_, any_, PROTO_UDP, TtlBand.ANY, TOS_EF, 1),
        Rule(2, 2, any_, any_, PROTO_UDP, TtlBand.LOW, TOS_AF41, 2),
        Rule(3, 3, any_, any_, PROTO_UDP, TtlBand.HIGH, None, 3),
        Rule(4, 4, any_, any_, PROTO_TCP, TtlBand.ANY, None, 4),
        Rule(5, 5, any_, any_, None, TtlBand.ANY, None, 5),
    ]
    return RuleSet(tuple(rules), ttl_threshold)


def tiered_policy_ruleset(tiers: Sequence[str] = ("10.1.1.0/24", "10.1.0.0/16", "10.0.0.0/8"),
                          ttl_threshold: int = DEFAULT_TTL_THRESHOLD) -> RuleSet:
    """The four-flow policy repeated for each destination tier (most specific
    first), then globally, then the catch-all.

    With three tiers that gives 17 distinct tuples, which is the ruleset the
    skewed benchmark scenario uses.
    """
    base = demo_policy_ruleset(ttl_threshold).rules
    rules: list[Rule] = []
    for text in list(tiers) + ["*"]:
        dst, _ = IpPrefix.parse(text)
        for r in base[:4]:
            n = len(rules) + 1
            rules.append(Rule(n, n, r.src, dst, r.proto, r.ttl, r.tos, r.flow))
    n = len(rules) + 1
    rules.append(Rule(n, n, IpPrefix(), IpPrefix(), None, TtlBand.ANY, None, 5))
    return RuleSet(tuple(rules), ttl_threshold)


def _pick_addr(rng: random.Random, pools: Sequence[IpPrefix]) -> int:
    p = pools[rng.randrange(len(pools))] if len(pools) > 1 else pools[0]
    return p.value | (rng.getrandbits(32) & ~p.mask & 0xFFFFFFFF)


def _make_header(rng: random.Random, cls: int, src: int, dst: int, threshold: int) -> PacketHeader:
    if cls == 0:
        return PacketHeader(src, dst, PROTO_UDP, rng.randint(1, 255), TOS_EF)
    if cls == 1:
        return PacketHeader(src, dst, PROTO_UDP, rng.randint(1, threshold), TOS_AF41)
    if cls == 2:
        return PacketHeader(src, dst, PROTO_UDP, rng.randint(threshold + 1, 255), 0)
    return PacketHeader(src, dst, PROTO_TCP, rng.randint(1, 255), 0)


def generate_trace(cfg: TrafficConfig) -> list[TraceRecord]:
    rng = random.Random(cfg.seed)
    srcs = [IpPrefix.parse(p)[0] for p in cfg.src_pools]
    dsts = [IpPrefix.parse(p)[0] for p in cfg.dst_pools]
    # exact rational spacing, floored per packet so non-integral periods don't drift
    period = inter_arrival_ns(cfg)
    num, den = period.numerator, period.denominator
    classes = rng.choices(range(4), weights=cfg.mix, k=cfg.packet_count)
    out = []
    for i, cls in enumerate(classes):
        hdr = _make_header(rng, cls, _pick_addr(rng, srcs), _pick_addr(rng, dsts), cfg.ttl_threshold)
        out.append(TraceRecord(hdr, (i * num) // den, cfg.size_bytes))
    return out


def class_of(hdr: PacketHeader, ttl_threshold: int = DEFAULT_TTL_THRESHOLD) -> str:
    """Traffic class a generated header was drawn from."""
    if hdr.proto == PROTO_TCP:
        return "tcp"
    if hdr.tos == TOS_EF:
        return "rtp"
    if hdr.tos == TOS_AF41 and hdr.ttl <= ttl_threshold:
        return "udp-low"
    return "udp-high"


def generate_ruleset(seed: int, n_rules: int, length_distribution: Sequence[float] | None = None,
                     ttl_threshold: int = DEFAULT_TTL_THRESHOLD, n_flows: int = 4) -> RuleSet:
    """Random rules with prefix lengths drawn from ``length_distribution``
    (weights over 0, 8, 16, 24, 32); the last rule is a catch-all."""
    if n_rules < 1:
        raise ValueError("n_rules must be at least 1")
    weights = list(length_distribution) if length_distribution is not None else [1.0] * 5
    if len(weights) != len(PREFIX_LENGTHS) or any(w < 0 for w in weights) or not any(weights):
        raise ValueError("length_distribution needs five non-negative weights, not all zero")
    rng = random.Random(seed)
    rules = []
    for i in range(1, n_rules):
        dst_len, src_len = rng.choices(PREFIX_LENGTHS, weights, k=2)
        dst = IpPrefix.canonical(rng.getrandbits(32), dst_len)
        src = IpPrefix.canonical(rng.getrandbits(32), src_len)
        proto = rng.choice((None, PROTO_TCP, PROTO_UDP))
        ttl = rng.choice(list(TtlBand))
        tos = rng.choice((None, 0, TOS_AF41, TOS_EF))
        rules.append(Rule(i, i, src, dst, proto, ttl, tos, rng.randint(1, n_flows)))
    rules.append(Rule(n_rules, n_rules, IpPrefix(), IpPrefix(), None, TtlBand.ANY, None, n_flows + 1))
    return RuleSet(tuple(rules), ttl_threshold)


def random_headers(rules: RuleSet, count: int, seed: int, targeted: float = 0.75) -> list[PacketHeader]:
    """Headers for equivalence testing.

    A ``targeted`` fraction is built inside a randomly chosen rule so that
    specific rules actually get hit; the rest are uniform noise. Fields the
    chosen rule leaves open are randomised, so overlapping rules still
    compete.
    """
    rng = random.Random(seed)
    thr = rules.ttl_threshold
    rs = rules.rules
    protos = (PROTO_TCP, PROTO_UDP, 1)
    toss = (0, TOS_AF41, TOS_EF, 8)
    out = []
    for _ in range(count):
        src, dst = rng.getrandbits(32), rng.getrandbits(32)
        proto, tos, ttl = rng.choice(protos), rng.choice(toss), rng.randint(0, 255)
        if rng.random() < targeted:
            r = rs[rng.randrange(len(rs))]
            src = r.src.value | (src & ~r.src.mask & 0xFFFFFFFF)
            dst = r.dst.value | (dst & ~r.dst.mask & 0xFFFFFFFF)
            if r.proto is not None:
                proto = r.proto
            if r.tos is not None:
                tos = r.tos
            if r.ttl is TtlBand.LOW:
                ttl = rng.randint(0, thr)
            elif r.ttl is TtlBand.HIGH:
                ttl = rng.randint(thr + 1, 255)
        out.append(PacketHeader(src, dst, proto, ttl, tos))
    return out


def format_trace(trace: Iterable[TraceRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for rec in trace:
        h = rec.hdr
        w.writerow((rec.arrival_ns, format_addr(h.src), format_addr(h.dst),
                    h.proto, h.ttl, h.tos, rec.size_bytes))
    return buf.getvalue()


def parse_trace(text: str) -> list[TraceRecord]:
    rows = csv.reader(io.StringIO(text))
    out: list[TraceRecord] = []
    header = next(rows, None)
    if header is None:
        return out
    if tuple(c.strip() for c in header) != TRACE_COLUMNS:
        raise TraceFormatError(1, f"expected header {','.join(TRACE_COLUMNS)}")
    last = 0
    for lineno, row in enumerate(rows, 2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(TRACE_COLUMNS):
            raise TraceFormatError(lineno, f"expected {len(TRACE_COLUMNS)} fields, got {len(row)}")
        try:
            arrival = int(row[0])
            src, dst = parse_addr(row[1].strip()), parse_addr(row[2].strip())
            proto, ttl, tos, size = (int(x) for x in row[3:])
        except ValueError as e:
            raise TraceFormatError(lineno, str(e)) from None
        for name, v in (("proto", proto), ("ttl", ttl), ("tos", tos)):
            if not 0 <= v <= 255:
                raise TraceFormatError(lineno, f"{name}={v} out of range 0..255")
        if arrival < 0 or size < 1:
            raise TraceFormatError(lineno, "arrival must be >= 0 and size >= 1")
        if arrival < last:
            raise TraceFormatError(lineno, "arrival times must be non-decreasing")
        last = arrival
        out.append(TraceRecord(PacketHeader(src, dst, proto, ttl, tos), arrival, size))
    return out


def write_trace(path: str | Path, trace: Iterable[TraceRecord]) -> None:
    Path(path).write_text(format_trace(trace))


def read_trace(path: str | Path) -> list[TraceRecord]:
    return parse_trace(Path(path).read_text())
