"""Tuple Space Search.

Rules are grouped by tuple; each group lives in its own hash table keyed by
the rule's fields masked to that tuple. Classification masks the header once
per table, probes every table and keeps the best hit.
"""

from __future__ import annotations

import struct
from typing import Callable

from .oracle import MatchResult
from .rulemodel import PacketHeader, Rule, RuleSet, Tuple, TtlBand, mask_of, tuple_of_rule

KEY_WIDTH = 11
FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_M64 = 0xFFFFFFFFFFFFFFFF

_pack_key = struct.Struct(">IIBBB").pack


class Fnv1a64:
    """FNV-1a over the key bytes; ``seed`` is XORed into the offset basis."""

    __slots__ = ("seed", "_basis")

    def __init__(self, seed: int = 0):
        self.seed = seed
        self._basis = (FNV_OFFSET ^ seed) & _M64

    def __call__(self, data: bytes) -> int:
        h = self._basis
        for b in data:
            h = ((h ^ b) * FNV_PRIME) & _M64
        return h

    def __eq__(self, other):
        return isinstance(other, Fnv1a64) and other.seed == self.seed

    def __hash__(self):
        return hash(("fnv1a64", self.seed))

    def __reduce__(self):
        return (Fnv1a64, (self.seed,))


HashFn = Callable[[bytes], int]


def key_of(hdr: PacketHeader, tup: Tuple, ttl_threshold: int) -> bytes:
    """The header projected onto ``tup``: 11 bytes, unspecified fields zero."""
    band = 0
    if tup.ttl_spec:
        band = TtlBand.LOW if hdr.ttl <= ttl_threshold else TtlBand.HIGH
    return _pack_key(
        hdr.dst & mask_of(tup.dst_len),
        hdr.src & mask_of(tup.src_len),
        hdr.proto if tup.proto_spec else 0,
        band,
        hdr.tos if tup.tos_spec else 0,
    )


def rule_key(rule: Rule) -> bytes:
    return _pack_key(
        rule.dst.value,
        rule.src.value,
        0 if rule.proto is None else rule.proto,
        int(rule.ttl),
        0 if rule.tos is None else rule.tos,
    )


class TupleTable:
    """Chained hash table holding every rule of one tuple (and, when
    partitioning, one protocol value)."""

    __slots__ = ("tuple", "proto", "hash_fn", "buckets", "size",
                 "rank", "dst_mask", "src_mask")

    def __init__(self, tup: Tuple, proto: int | None = None, hash_fn: HashFn | None = None):
        self.tuple = tup
        self.proto = proto
        self.hash_fn = hash_fn if hash_fn is not None else Fnv1a64()
        self.buckets: dict[int, list[tuple[bytes, int, int, int]]] = {}
        self.size = 0
        self.rank = tup.rank
        self.dst_mask = mask_of(tup.dst_len)
        self.src_mask = mask_of(tup.src_len)

    def __len__(self):
        return self.size

    def insert(self, rule: Rule) -> None:
        if tuple_of_rule(rule) != self.tuple:
            raise ValueError(f"rule {rule.id} does not belong to tuple {self.tuple}")
        key = rule_key(rule)
        self.buckets.setdefault(self.hash_fn(key), []).append(
            (key, rule.priority, rule.id, rule.flow))
        self.size += 1

    def probe(self, key: bytes) -> tuple[bytes, int, int, int] | None:
        """Best (lowest priority number) entry whose full key equals ``key``."""
        chain = self.buckets.get(self.hash_fn(key))
        if not chain:
            return None
        best = None
        for entry in chain:
            if entry[0] == key and (best is None or entry[1] < best[1]):
                best = entry
        return best

    def key_for(self, hdr: PacketHeader, ttl_threshold: int, dst_masked: int | None = None,
                src_masked: int | None = None) -> bytes:
        tup = self.tuple
        if dst_masked is None:
            dst_masked = hdr.dst & self.dst_mask
        if src_masked is None:
            src_masked = hdr.src & self.src_mask
        band = 0
        if tup.ttl_spec:
            band = 1 if hdr.ttl <= ttl_threshold else 2
        return _pack_key(dst_masked, src_masked,
                         hdr.proto if tup.proto_spec else 0,
                         band,
                         hdr.tos if tup.tos_spec else 0)

    def entries(self):
        for chain in self.buckets.values():
            yield from chain


def group_rules(rules: RuleSet, proto_partition: bool, hash_fn: HashFn | None = None) -> list[TupleTable]:
    """One table per distinct tuple (split by protocol value when
    partitioning), in order of first appearance."""
    tables: dict[tuple[Tuple, int | None], TupleTable] = {}
    for rule in rules.rules:
        tup = tuple_of_rule(rule)
        proto = rule.proto if proto_partition else None
        tbl = tables.get((tup, proto))
        if tbl is None:
            tbl = tables[(tup, proto)] = TupleTable(tup, proto, hash_fn)
        tbl.insert(rule)
    return list(tables.values())


class TssClassifier:
    name = "tss"

    def __init__(self, tables: list[TupleTable], proto_partition: bool, ttl_threshold: int):
        self.tables = tables
        self.proto_partition = proto_partition
        self.ttl_threshold = ttl_threshold
        self._wild = [t for t in tables if t.proto is None]
        self._by_proto: dict[int, list[TupleTable]] = {}
        for t in tables:
            if t.proto is not None:
                self._by_proto.setdefault(t.proto, []).append(t)
        for p, group in self._by_proto.items():
            self._by_proto[p] = group + self._wild

    @property
    def table_count(self) -> int:
        return len(self.tables)

    def entry_count(self) -> int:
        return sum(len(t) for t in self.tables)

    def tables_for(self, proto: int) -> list[TupleTable]:
        return self._by_proto.get(proto, self._wild)

    def classify(self, hdr: PacketHeader) -> MatchResult:
        thr = self.ttl_threshold
        best = None
        best_key = None
        tables = self._by_proto.get(hdr.proto, self._wild)
        for tbl in tables:
            hit = tbl.probe(tbl.key_for(hdr, thr))
            if hit is not None:
                k = (tbl.rank, -hit[1])
                if best_key is None or k > best_key:
                    best, best_key = hit, k
        n = len(tables)
        if best is None:
            return MatchResult(probes=n, node_reads=n)
        return MatchResult(best[2], best[3], probes=n, node_reads=n)


def build_tss(rules: RuleSet, proto_partition: bool = True, hash_fn: HashFn | None = None) -> TssClassifier:
    return TssClassifier(group_rules(rules, proto_partition, hash_fn), proto_partition,
                         rules.ttl_threshold)


def classify_tss(c: TssClassifier, hdr: PacketHeader) -> MatchResult:
    return c.classify(hdr)
