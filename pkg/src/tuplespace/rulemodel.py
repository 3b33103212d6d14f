"""Rules, packet headers, tuples and the ruleset text format.

Every classifier in the package shares the definitions here, in particular
:func:`match_key`, which decides which of several matching rules wins.
"""

from __future__ import annotations

import enum
import ipaddress
from dataclasses import dataclass, field
from typing import NamedTuple

DEFAULT_TTL_THRESHOLD = 64

PROTO_NAMES = {"tcp": 6, "udp": 17}
_PROTO_BY_NUM = {v: k for k, v in PROTO_NAMES.items()}


class RuleSyntaxError(ValueError):
    """Raised for a malformed ruleset line."""

    def __init__(self, lineno: int, reason: str):
        super().__init__(f"line {lineno}: {reason}")
        self.lineno = lineno
        self.reason = reason


def mask_of(length: int) -> int:
    return (0xFFFFFFFF << (32 - length)) & 0xFFFFFFFF if length else 0


def format_addr(value: int) -> str:
    return str(ipaddress.IPv4Address(value))


def parse_addr(text: str) -> int:
    return int(ipaddress.IPv4Address(text))


@dataclass(frozen=True, slots=True)
class IpPrefix:
    value: int = 0
    length: int = 0

    def __post_init__(self):
        if not 0 <= self.length <= 32:
            raise ValueError(f"prefix length out of range: {self.length}")
        if not 0 <= self.value <= 0xFFFFFFFF:
            raise ValueError(f"address out of range: {self.value}")
        if self.value & ~mask_of(self.length) & 0xFFFFFFFF:
            raise ValueError(f"non-canonical prefix {format_addr(self.value)}/{self.length}")

    @classmethod
    def canonical(cls, value: int, length: int) -> IpPrefix:
        return cls(value & mask_of(length), length)

    @classmethod
    def parse(cls, text: str) -> tuple[IpPrefix, bool]:
        """Parse ``a.b.c.d/len`` or ``*``; the flag is True if host bits were cleared."""
        if text == "*":
            return cls(), False
        addr, sep, length = text.partition("/")
        value = parse_addr(addr)
        n = int(length) if sep else 32
        if not 0 <= n <= 32:
            raise ValueError(f"prefix length out of range: {n}")
        masked = value & mask_of(n)
        return cls(masked, n), masked != value

    @property
    def mask(self) -> int:
        return mask_of(self.length)

    def contains(self, addr: int) -> bool:
        return (addr & self.mask) == self.value

    def __str__(self):
        if self.length == 0:
            return "*"
        return f"{format_addr(self.value)}/{self.length}"


class TtlBand(enum.IntEnum):
    """TTL match class. The integer values double as the key byte for the band."""

    ANY = 0
    LOW = 1
    HIGH = 2


def ttl_band_of(ttl: int, ttl_threshold: int) -> TtlBand:
    return TtlBand.LOW if ttl <= ttl_threshold else TtlBand.HIGH


class PacketHeader(NamedTuple):
    src: int
    dst: int
    proto: int
    ttl: int
    tos: int

    def __str__(self):
        return (f"{format_addr(self.src)} -> {format_addr(self.dst)} "
                f"proto={self.proto} ttl={self.ttl} tos={self.tos}")


class Tuple(NamedTuple):
    """Specificity signature of a rule: which bits/fields it pins down."""

    dst_len: int
    src_len: int
    proto_spec: bool
    ttl_spec: bool
    tos_spec: bool

    @property
    def spec_count(self) -> int:
        return self.proto_spec + self.ttl_spec + self.tos_spec

    @property
    def rank(self) -> tuple[int, int, int]:
        return (self.dst_len, self.src_len, self.spec_count)


@dataclass(frozen=True, slots=True)
class Rule:
    id: int
    priority: int
    src: IpPrefix
    dst: IpPrefix
    proto: int | None  # None = any
    ttl: TtlBand
    tos: int | None  # None = any
    flow: int

    def __post_init__(self):
        if self.flow < 1:
            raise ValueError(f"flow id must be positive, got {self.flow}")
        for name in ("proto", "tos"):
            v = getattr(self, name)
            if v is not None and not 0 <= v <= 255:
                raise ValueError(f"{name} out of range: {v}")


def rule_matches(rule: Rule, hdr: PacketHeader, ttl_threshold: int = DEFAULT_TTL_THRESHOLD) -> bool:
    if (hdr.src & rule.src.mask) != rule.src.value:
        return False
    if (hdr.dst & rule.dst.mask) != rule.dst.value:
        return False
    if rule.proto is not None and hdr.proto != rule.proto:
        return False
    if rule.tos is not None and hdr.tos != rule.tos:
        return False
    if rule.ttl is not TtlBand.ANY and ttl_band_of(hdr.ttl, ttl_threshold) is not rule.ttl:
        return False
    return True


def tuple_of_rule(rule: Rule) -> Tuple:
    return Tuple(
        rule.dst.length,
        rule.src.length,
        rule.proto is not None,
        rule.ttl is not TtlBand.ANY,
        rule.tos is not None,
    )


def match_key(tup: Tuple, priority: int) -> tuple[int, int, int, int]:
    """Sort key under which the best match is the *maximum*.

    Longer destination prefix wins, then longer source prefix, then the
    number of exact/banded fields; the lower priority number breaks ties.
    """
    return (tup.dst_len, tup.src_len, tup.spec_count, -priority)


def match_order(a: tuple[Tuple, int], b: tuple[Tuple, int]) -> int:
    """cmp-style comparison of (tuple, priority) pairs: -1 if ``a`` is preferred."""
    ka, kb = match_key(*a), match_key(*b)
    return -1 if ka > kb else (1 if ka < kb else 0)


@dataclass(frozen=True)
class RuleSet:
    rules: tuple[Rule, ...]
    ttl_threshold: int = DEFAULT_TTL_THRESHOLD
    # line numbers whose prefixes had host bits cleared while parsing
    warnings: tuple[int, ...] = field(default=(), compare=False)

    def __post_init__(self):
        object.__setattr__(self, "rules", tuple(self.rules))
        if not 1 <= self.ttl_threshold <= 254:
            raise ValueError(f"ttl_threshold must be in 1..254, got {self.ttl_threshold}")
        ids = [r.id for r in self.rules]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate rule ids")
        prios = [r.priority for r in self.rules]
        if len(set(prios)) != len(prios):
            raise ValueError("duplicate rule priorities")

    def __len__(self):
        return len(self.rules)

    def __iter__(self):
        return iter(self.rules)

    def by_id(self) -> dict[int, Rule]:
        return {r.id: r for r in self.rules}

    def tuples(self) -> set[Tuple]:
        return {tuple_of_rule(r) for r in self.rules}


def _parse_exact(tok: str, names: dict[str, int] | None = None) -> int | None:
    if tok == "*":
        return None
    if names and tok.lower() in names:
        return names[tok.lower()]
    v = int(tok)
    if not 0 <= v <= 255:
        raise ValueError(f"value out of 0..255: {v}")
    return v


def parse_ruleset(text: str) -> RuleSet:
    """Parse the line-oriented ruleset format.

    ``<priority> <src|*> <dst|*> <proto|*> <low|high|any> <tos|*> <flow>``,
    ``#`` starts a comment and ``!ttl_threshold <n>`` sets the TTL band
    boundary. Rule ids are assigned 1, 2, ... in file order.
    """
    rules: list[Rule] = []
    warnings: list[int] = []
    seen_prio: dict[int, int] = {}
    threshold = DEFAULT_TTL_THRESHOLD
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        toks = line.split()
        if toks[0].startswith("!"):
            if toks[0] != "!ttl_threshold" or len(toks) != 2:
                raise RuleSyntaxError(lineno, f"unknown directive {line!r}")
            try:
                threshold = int(toks[1])
            except ValueError:
                raise RuleSyntaxError(lineno, f"bad ttl_threshold {toks[1]!r}") from None
            if not 1 <= threshold <= 254:
                raise RuleSyntaxError(lineno, "ttl_threshold must be in 1..254")
            continue
        if len(toks) != 7:
            raise RuleSyntaxError(lineno, f"expected 7 fields, got {len(toks)}")
        prio_s, src_s, dst_s, proto_s, ttl_s, tos_s, flow_s = toks
        try:
            priority = int(prio_s)
            src, fixed_src = IpPrefix.parse(src_s)
            dst, fixed_dst = IpPrefix.parse(dst_s)
            proto = _parse_exact(proto_s, PROTO_NAMES)
            tos = _parse_exact(tos_s)
            flow = int(flow_s)
        except ValueError as e:
            raise RuleSyntaxError(lineno, str(e)) from None
        try:
            ttl = TtlBand[ttl_s.upper()]
        except KeyError:
            raise RuleSyntaxError(lineno, f"ttl must be low, high or any, got {ttl_s!r}") from None
        if flow < 1:
            raise RuleSyntaxError(lineno, f"flow id must be positive, got {flow}")
        if priority in seen_prio:
            raise RuleSyntaxError(
                lineno, f"duplicate priority {priority} (first used on line {seen_prio[priority]})")
        seen_prio[priority] = lineno
        if fixed_src or fixed_dst:
            warnings.append(lineno)
        rules.append(Rule(len(rules) + 1, priority, src, dst, proto, ttl, tos, flow))
    return RuleSet(tuple(rules), threshold, tuple(warnings))


def format_rule(rule: Rule) -> str:
    proto = "*" if rule.proto is None else _PROTO_BY_NUM.get(rule.proto, str(rule.proto))
    tos = "*" if rule.tos is None else str(rule.tos)
    return f"{rule.priority} {rule.src} {rule.dst} {proto} {rule.ttl.name.lower()} {tos} {rule.flow}"


def format_ruleset(rs: RuleSet) -> str:
    lines = [f"!ttl_threshold {rs.ttl_threshold}"]
    lines.extend(format_rule(r) for r in rs.rules)
    return "\n".join(lines) + "\n"
