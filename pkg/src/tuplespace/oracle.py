"""Linear-search reference classifier.

Deliberately naive: every rule is compared against the header. All other
classifiers are checked against this one.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .rulemodel import PacketHeader, RuleSet, TtlBand, match_key, rule_matches, tuple_of_rule


@dataclass(frozen=True, slots=True)
class MatchResult:
    rule_id: int | None = None
    flow: int | None = None
    # hash tables (or rules, for linear search) examined
    probes: int = 0
    # tuple descriptors / trie elements read to locate those tables
    node_reads: int = 0

    def __post_init__(self):
        if (self.rule_id is None) != (self.flow is None):
            raise ValueError("rule_id and flow must be both set or both None")
        if self.probes < 0 or self.node_reads < 0:
            raise ValueError("negative probe count")

    @property
    def matched(self) -> bool:
        return self.rule_id is not None


NO_MATCH = MatchResult()


def classify_linear(rules: RuleSet, hdr: PacketHeader) -> MatchResult:
    best = None
    best_key = None
    for rule in rules.rules:
        if rule_matches(rule, hdr, rules.ttl_threshold):
            key = match_key(tuple_of_rule(rule), rule.priority)
            if best_key is None or key > best_key:
                best, best_key = rule, key
    n = len(rules.rules)
    if best is None:
        return MatchResult(probes=n)
    return MatchResult(best.id, best.flow, probes=n)


class LinearClassifier:
    """Object wrapper so linear search plugs in wherever a classifier is expected."""

    name = "linear"

    def __init__(self, rules: RuleSet):
        self.rules = rules
        self.ttl_threshold = rules.ttl_threshold

    def classify(self, hdr: PacketHeader) -> MatchResult:
        return classify_linear(self.rules, hdr)

    def entry_count(self) -> int:
        return len(self.rules)

    @property
    def table_count(self) -> int:
        return 0


def classify_linear_batch(rules: RuleSet, headers: Sequence[PacketHeader] | Iterable[PacketHeader],
                          chunk: int = 512) -> np.ndarray:
    """Matched rule id per header (0 when nothing matches), computed as a
    vectorised linear scan.

    Rules are pre-sorted best-first, so the answer for a header is the first
    matching column.
    """
    order = sorted(rules.rules, key=lambda r: match_key(tuple_of_rule(r), r.priority), reverse=True)
    thr = rules.ttl_threshold
    src_mask = np.array([r.src.mask for r in order], dtype=np.uint32)
    src_val = np.array([r.src.value for r in order], dtype=np.uint32)
    dst_mask = np.array([r.dst.mask for r in order], dtype=np.uint32)
    dst_val = np.array([r.dst.value for r in order], dtype=np.uint32)
    proto_any = np.array([r.proto is None for r in order])
    proto_val = np.array([-1 if r.proto is None else r.proto for r in order], dtype=np.int16)
    tos_any = np.array([r.tos is None for r in order])
    tos_val = np.array([-1 if r.tos is None else r.tos for r in order], dtype=np.int16)
    ttl_band = np.array([int(r.ttl) for r in order], dtype=np.int8)
    ids = np.array([0] + [r.id for r in order], dtype=np.int64)

    hdrs = np.array([tuple(h) for h in headers], dtype=np.int64).reshape(-1, 5)
    out = np.zeros(len(hdrs), dtype=np.int64)
    for lo in range(0, len(hdrs), chunk):
        h = hdrs[lo:lo + chunk]
        src = h[:, 0:1].astype(np.uint32)
        dst = h[:, 1:2].astype(np.uint32)
        proto = h[:, 2:3]
        band = np.where(h[:, 3:4] <= thr, int(TtlBand.LOW), int(TtlBand.HIGH))
        tos = h[:, 4:5]
        m = (src & src_mask) == src_val
        m &= (dst & dst_mask) == dst_val
        m &= proto_any | (proto == proto_val)
        m &= tos_any | (tos == tos_val)
        m &= (ttl_band == int(TtlBand.ANY)) | (band == ttl_band)
        hit = m.any(axis=1)
        first = m.argmax(axis=1)
        out[lo:lo + chunk] = np.where(hit, ids[first + 1], 0)
    return out
