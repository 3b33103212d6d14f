"""Trie-based Tuple Space Search.

The tuple tables hang off a two-level, length-indexed trie: the root has one
element per destination prefix length present in the ruleset, each of those
points at a node with one element per source prefix length, and each of
those holds the tuple tables for that length pair ordered by how many of
proto/TTL/ToS they pin down.

``V1`` lays every node out longest-first. Because :func:`match_key` ranks
matches by (dst_len, src_len, spec_count) before priority, the first rank
group that produces a hit holds the answer and the search stops there.
``V2`` lays nodes out shortest-first, so nothing seen early can rule out a
later, better match: it probes every reachable table.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Union

from .oracle import MatchResult
from .rulemodel import PacketHeader, RuleSet, Tuple, mask_of
from .tss import HashFn, TupleTable, group_rules


class Version(enum.Enum):
    V1 = "v1"
    V2 = "v2"


@dataclass(slots=True)
class TtssElement:
    length: int
    mask: int
    # TtssNode below the root, list of TupleTables below a second-level node
    child: Union["TtssNode", list[TupleTable]]


@dataclass(slots=True)
class TtssNode:
    elements: list[TtssElement] = field(default_factory=list)

    @property
    def lengths(self) -> list[int]:
        return [e.length for e in self.elements]


def _leaf_order(t: TupleTable):
    tup = t.tuple
    return (tup.spec_count, tup.proto_spec, tup.ttl_spec, tup.tos_spec,
            -1 if t.proto is None else t.proto)


class TtssClassifier:
    def __init__(self, version: Version, root: TtssNode, proto_partition: bool, ttl_threshold: int):
        self.version = version
        self.root = root
        self.proto_partition = proto_partition
        self.ttl_threshold = ttl_threshold

    @property
    def name(self) -> str:
        return f"ttss-{self.version.value}"

    def leaves(self) -> Iterable[tuple[int, int, list[TupleTable]]]:
        for e1 in self.root.elements:
            for e2 in e1.child.elements:
                yield e1.length, e2.length, e2.child

    @property
    def tables(self) -> list[TupleTable]:
        return [t for _, _, leaf in self.leaves() for t in leaf]

    @property
    def table_count(self) -> int:
        return len(self.tables)

    def entry_count(self) -> int:
        return sum(len(t) for t in self.tables)

    def tuple_order(self) -> list[Tuple]:
        """Tuples in traversal order, collapsing per-protocol tables."""
        out: list[Tuple] = []
        for t in self.tables:
            if not out or out[-1] != t.tuple:
                out.append(t.tuple)
        return out

    def classify(self, hdr: PacketHeader) -> MatchResult:
        if self.version is Version.V1:
            return self._classify_first_hit(hdr)
        return self._classify_scan(hdr)

    def _classify_first_hit(self, hdr: PacketHeader) -> MatchResult:
        thr = self.ttl_threshold
        proto = hdr.proto
        probes = reads = 0
        best = None
        best_rank = None
        for e1 in self.root.elements:
            reads += 1
            dst = hdr.dst & e1.mask
            for e2 in e1.child.elements:
                reads += 1
                src = hdr.src & e2.mask
                for tbl in e2.child:
                    if tbl.proto is not None and tbl.proto != proto:
                        continue
                    if best is not None and tbl.rank != best_rank:
                        # left the winning rank group: nothing later can beat it
                        return MatchResult(best[2], best[3], probes, reads)
                    probes += 1
                    hit = tbl.probe(tbl.key_for(hdr, thr, dst, src))
                    if hit is not None and (best is None or hit[1] < best[1]):
                        best, best_rank = hit, tbl.rank
                if best is not None:
                    return MatchResult(best[2], best[3], probes, reads)
        return MatchResult(probes=probes, node_reads=reads)

    def _classify_scan(self, hdr: PacketHeader) -> MatchResult:
        thr = self.ttl_threshold
        proto = hdr.proto
        probes = reads = 0
        best = None
        best_key = None
        for e1 in self.root.elements:
            reads += 1
            dst = hdr.dst & e1.mask
            for e2 in e1.child.elements:
                reads += 1
                src = hdr.src & e2.mask
                for tbl in e2.child:
                    if tbl.proto is not None and tbl.proto != proto:
                        continue
                    probes += 1
                    hit = tbl.probe(tbl.key_for(hdr, thr, dst, src))
                    if hit is not None:
                        k = (tbl.rank, -hit[1])
                        if best_key is None or k > best_key:
                            best, best_key = hit, k
        if best is None:
            return MatchResult(probes=probes, node_reads=reads)
        return MatchResult(best[2], best[3], probes, reads)


def build_ttss(rules: RuleSet, version: Version | str = Version.V1, proto_partition: bool = True,
               hash_fn: HashFn | None = None) -> TtssClassifier:
    version = Version(version) if not isinstance(version, Version) else version
    desc = version is Version.V1
    by_len: dict[int, dict[int, list[TupleTable]]] = {}
    for tbl in group_rules(rules, proto_partition, hash_fn):
        by_len.setdefault(tbl.tuple.dst_len, {}).setdefault(tbl.tuple.src_len, []).append(tbl)
    root = TtssNode()
    for d in sorted(by_len, reverse=desc):
        node = TtssNode()
        for s in sorted(by_len[d], reverse=desc):
            leaf = sorted(by_len[d][s], key=_leaf_order, reverse=desc)
            node.elements.append(TtssElement(s, mask_of(s), leaf))
        root.elements.append(TtssElement(d, mask_of(d), node))
    return TtssClassifier(version, root, proto_partition, rules.ttl_threshold)


def classify_ttss(c: TtssClassifier, hdr: PacketHeader) -> MatchResult:
    return c.classify(hdr)


@dataclass
class ProbeSummary:
    count: int = 0
    min: int = 0
    mean: float = 0.0
    max: int = 0
    mean_node_reads: float = 0.0
    # matched tuple -> packets; None counts unmatched packets
    tuple_hits: dict[Tuple | None, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "count": self.count, "min": self.min, "mean": self.mean, "max": self.max,
            "mean_node_reads": self.mean_node_reads,
            "tuple_hits": [[list(t) if t is not None else None, n]
                           for t, n in sorted(self.tuple_hits.items(),
                                              key=lambda kv: (kv[0] is None, kv[0] or ()))],
        }


def probe_stats(c, trace: Iterable) -> ProbeSummary:
    """Probe-count summary of classifier ``c`` over a trace of headers or
    trace records. Works for any classifier exposing ``classify`` and
    ``tables``."""
    id_tuple = {e[2]: t.tuple for t in c.tables for e in t.entries()}
    n = total = reads = 0
    lo = hi = 0
    hits: dict[Tuple | None, int] = {}
    for item in trace:
        hdr = getattr(item, "hdr", item)
        r = c.classify(hdr)
        if n == 0:
            lo = hi = r.probes
        else:
            lo, hi = min(lo, r.probes), max(hi, r.probes)
        n += 1
        total += r.probes
        reads += r.node_reads
        tup = id_tuple.get(r.rule_id) if r.matched else None
        hits[tup] = hits.get(tup, 0) + 1
    if n == 0:
        return ProbeSummary()
    return ProbeSummary(n, lo, total / n, hi, reads / n, hits)
