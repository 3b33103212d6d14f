"""Command-line front end.

Exit codes: 0 ok, 1 I/O error, 2 usage error, 3 classifiers disagree.
``TTSS_SEED`` overrides the default seed of every generator.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import statistics
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, fields
from pathlib import Path
from typing import Sequence

from .oracle import LinearClassifier, MatchResult
from .pipesim import SimConfig, run_sim
from .rulemodel import RuleSet, RuleSyntaxError, format_ruleset, parse_ruleset
from .traffic import (
    TraceFormatError, TraceRecord, TrafficConfig, demo_policy_ruleset, format_trace,
    generate_ruleset, generate_trace, parse_trace, tiered_policy_ruleset,
)
from .tss import build_tss
from .ttss import Version, build_ttss, probe_stats

log = logging.getLogger("tuplespace")

ALGOS = ("linear", "tss", "ttss-v1", "ttss-v2")
SCHEMA = 1

EXIT_IO = 1
EXIT_USAGE = 2
EXIT_MISMATCH = 3

SKEWED_MIX = (0.02, 0.94, 0.02, 0.02)
SKEWED_DST_POOL = "10.1.1.0/24"
SKEWED_C_PROBE_NS = 400


class Mismatch(Exception):
    def __init__(self, index: int, detail: str):
        super().__init__(f"classifiers disagree at packet {index}: {detail}")
        self.index = index


def default_seed() -> int:
    return int(os.environ.get("TTSS_SEED", "1"))


def build(algo: str, rules: RuleSet, proto_partition: bool = True):
    if algo == "linear":
        return LinearClassifier(rules)
    if algo == "tss":
        return build_tss(rules, proto_partition)
    if algo in ("ttss-v1", "ttss-v2"):
        return build_ttss(rules, Version(algo[-2:]), proto_partition)
    raise ValueError(f"unknown algorithm {algo!r}")


def inject_fault(classifier) -> None:
    """Test hook: corrupt stored flows so the oracle check must fail."""
    if isinstance(classifier, LinearClassifier):
        r = classifier.rules.rules[0]
        rules = list(classifier.rules.rules)
        rules[0] = type(r)(r.id, r.priority, r.src, r.dst, r.proto, r.ttl, r.tos, r.flow + 1)
        classifier.rules = RuleSet(tuple(rules), classifier.rules.ttl_threshold)
        return
    # one entry per table, so the fault shows whichever table decides
    for tbl in classifier.tables:
        chain = next(iter(tbl.buckets.values()))
        key, prio, rid, flow = chain[0]
        chain[0] = (key, prio, rid, flow + 1)


def classify_all(classifier, headers: Sequence, jobs: int = 1) -> list[MatchResult]:
    """Classify in ``jobs`` contiguous shards; the result is independent of ``jobs``."""
    if jobs <= 1 or len(headers) < 2:
        return [classifier.classify(h) for h in headers]
    step = -(-len(headers) // jobs)
    shards = [headers[i:i + step] for i in range(0, len(headers), step)]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        parts = pool.map(lambda shard: [classifier.classify(h) for h in shard], shards)
    return [r for part in parts for r in part]


def timed_classify(classifier, headers, repeat: int, jobs: int) -> tuple[list[MatchResult], float]:
    """Results plus median packets/second over ``repeat`` runs."""
    rates = []
    results = None
    for _ in range(max(1, repeat)):
        t0 = time.perf_counter()
        results = classify_all(classifier, headers, jobs)
        dt = time.perf_counter() - t0
        rates.append(len(headers) / dt if dt > 0 else 0.0)
    return results, statistics.median(rates)


def first_divergence(a: Sequence[MatchResult], b: Sequence[MatchResult]) -> int | None:
    for i, (x, y) in enumerate(zip(a, b)):
        if x.flow != y.flow or x.rule_id != y.rule_id:
            return i
    return None


def digest(path: str | Path) -> str:
    return "sha256:" + hashlib.sha256(Path(path).read_bytes()).hexdigest()


def flow_counts(results: Sequence[MatchResult]) -> dict[str, int]:
    out: dict[str, int] = {}
    for r in results:
        k = "none" if r.flow is None else str(r.flow)
        out[k] = out.get(k, 0) + 1
    return dict(sorted(out.items()))


# -- argument types -----------------------------------------------------------

def _weights(n: int):
    def parse(text: str) -> tuple[float, ...]:
        try:
            w = tuple(float(x) for x in text.split(","))
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}")
        if len(w) != n or any(x < 0 for x in w) or not any(w):
            raise argparse.ArgumentTypeError(f"need {n} non-negative weights, not all zero")
        return w
    return parse


def _positive(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _load_inputs(args) -> tuple[RuleSet, list[TraceRecord]]:
    rules = parse_ruleset(Path(args.rules).read_text())
    if rules.warnings:
        log.warning("host bits cleared in prefixes on lines %s", list(rules.warnings))
    if not rules.rules:
        raise RuleSyntaxError(0, "ruleset is empty")
    trace = parse_trace(Path(args.trace).read_text())
    return rules, trace


def load_sim_config(path: str | None, overrides: dict) -> SimConfig:
    """Flat ``key = value`` file (keys are SimConfig fields), then CLI overrides."""
    values: dict[str, int] = {}
    names = {f.name for f in fields(SimConfig)}
    if path:
        for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, val = (s.strip() for s in line.partition("="))
            if not sep or key not in names:
                raise ValueError(f"{path}:{lineno}: expected <simconfig-field> = <int>")
            values[key] = int(val)
    values.update({k: v for k, v in overrides.items() if v is not None})
    return SimConfig(**values)


def _sim_overrides(args) -> dict:
    return {
        "c0_ns": args.c0, "c_probe_ns": args.c_probe, "c_node_ns": args.c_node,
        "rx_workers": args.rx_workers, "cls_workers": args.cls_workers, "tx_workers": args.tx_workers,
        "ring1_capacity": args.ring1, "ring2_capacity": args.ring2,
        "tbuf_threshold": args.tbuf_threshold, "n_ports": args.ports,
    }


def _duration(args, trace: Sequence[TraceRecord]) -> int | None:
    if args.duration == "drain":
        return None
    if args.duration is None:
        # observe the window in which the trace is offered
        return trace[-1].arrival_ns + 1 if trace else 0
    return int(args.duration)


# -- commands -------------------------------------------------------------------

def cmd_gen_rules(args) -> int:
    if args.policy == "demo":
        rs = demo_policy_ruleset(args.ttl_threshold)
    elif args.policy == "tiered":
        rs = tiered_policy_ruleset(ttl_threshold=args.ttl_threshold)
    else:
        seed = args.seed if args.seed is not None else default_seed()
        rs = generate_ruleset(seed, args.n, args.dist, args.ttl_threshold)
    _write(args.out, format_ruleset(rs))
    return 0


def _traffic_config(args) -> TrafficConfig:
    return TrafficConfig(
        seed=args.seed if args.seed is not None else default_seed(),
        packet_count=args.count, size_bytes=args.size, rate_mbps=args.rate, gap_ns=args.gap,
        mix=args.mix, ttl_threshold=args.ttl_threshold,
        src_pools=tuple(args.src_pool or TrafficConfig.src_pools),
        dst_pools=tuple(args.dst_pool or TrafficConfig.dst_pools),
    )


def cmd_gen_trace(args) -> int:
    try:
        cfg = _traffic_config(args)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    _write(args.out, format_trace(generate_trace(cfg)))
    return 0


def cmd_scenario(args) -> int:
    """Write the skewed benchmark scenario: tiered ruleset plus a trace in
    which 94% of packets hit the most specific tuple."""
    out = Path(args.dir)
    out.mkdir(parents=True, exist_ok=True)
    seed = args.seed if args.seed is not None else default_seed()
    cfg = TrafficConfig(seed=seed, packet_count=args.count, mix=SKEWED_MIX, dst_pools=(SKEWED_DST_POOL,))
    (out / "rules.txt").write_text(format_ruleset(tiered_policy_ruleset()))
    (out / "trace.csv").write_text(format_trace(generate_trace(cfg)))
    (out / "sim.conf").write_text(f"c_probe_ns = {SKEWED_C_PROBE_NS}\n")
    return 0


def cmd_classify(args) -> int:
    rules, trace = _load_inputs(args)
    headers = [r.hdr for r in trace]
    t0 = time.perf_counter_ns()
    c = build(args.algo, rules, not args.no_partition)
    build_ns = time.perf_counter_ns() - t0
    if args.inject_fault:
        inject_fault(c)
    results, pps = timed_classify(c, headers, args.repeat, args.jobs)
    if args.check_oracle:
        ref = classify_all(LinearClassifier(rules), headers)
        i = first_divergence(results, ref)
        if i is not None:
            print(f"mismatch at packet {i}: {args.algo} -> flow {results[i].flow} "
                  f"(rule {results[i].rule_id}), linear -> flow {ref[i].flow} (rule {ref[i].rule_id})",
                  file=sys.stderr)
            return EXIT_MISMATCH
    probes = [r.probes for r in results]
    report = {
        "schema": SCHEMA,
        "algo": args.algo,
        "proto_partition": not args.no_partition,
        "packets": len(results),
        "build_ns": build_ns,
        "classify_throughput_pps": pps,
        "probes": {"min": min(probes, default=0), "max": max(probes, default=0),
                   "mean": sum(probes) / len(probes) if probes else 0.0},
        "flow_counts": flow_counts(results),
        "entries": c.entry_count(),
        "tables": c.table_count,
        "oracle_checked": bool(args.check_oracle),
        "inputs": {"rules": digest(args.rules), "trace": digest(args.trace)},
    }
    _write(args.report, json.dumps(report, indent=2, sort_keys=True) + "\n")
    return 0


def compare(rules: RuleSet, trace: Sequence[TraceRecord], *, repeat: int = 3, jobs: int = 1,
            proto_partition: bool = True, simulate: bool = False, sim_cfg: SimConfig | None = None,
            duration_ns: int | None = None) -> dict:
    """Run all four classifiers on the same inputs. Raises :class:`Mismatch`
    before producing anything if any decision differs from linear search."""
    headers = [r.hdr for r in trace]
    built = {}
    for algo in ALGOS:
        t0 = time.perf_counter_ns()
        built[algo] = (build(algo, rules, proto_partition), time.perf_counter_ns() - t0)
    outputs = {algo: timed_classify(c, headers, repeat, jobs) for algo, (c, _) in built.items()}
    ref = outputs["linear"][0]
    for algo in ALGOS[1:]:
        i = first_divergence(outputs[algo][0], ref)
        if i is not None:
            raise Mismatch(i, f"{algo} flow {outputs[algo][0][i].flow} vs linear flow {ref[i].flow}")
    per = {}
    for algo, (c, build_ns) in built.items():
        results, pps = outputs[algo]
        probes = [r.probes for r in results]
        reads = [r.node_reads for r in results]
        entry = {
            "build_ns": build_ns,
            "classify_throughput_pps": pps,
            "mean_probes": sum(probes) / len(probes) if probes else 0.0,
            "max_probes": max(probes, default=0),
            "mean_node_reads": sum(reads) / len(reads) if reads else 0.0,
            "entries": c.entry_count(),
            "tables": c.table_count,
        }
        if algo != "linear":
            entry["tuple_hits"] = probe_stats(c, headers).to_dict()["tuple_hits"]
        if simulate:
            rep = run_sim(trace, c, sim_cfg, duration_ns=duration_ns)
            entry["sim"] = rep.to_dict()
            entry["transmit_rate_mbps"] = rep.transmit_rate_mbps
            entry["sent_over_received"] = rep.sent_over_received
        per[algo] = entry
    return {
        "schema": SCHEMA,
        "classifiers": per,
        "flow_counts": flow_counts(ref),
        "tuple_count": len(rules.tuples()),
        "rule_count": len(rules),
        "config": {
            "proto_partition": proto_partition, "repeat": repeat, "jobs": jobs,
            "simulate": simulate, "duration_ns": duration_ns,
            "sim": asdict(sim_cfg) if simulate and sim_cfg else None,
        },
    }


FIGURE_COLUMNS = ("algo", "classify_throughput_pps", "mean_probes", "mean_node_reads",
                  "classify_idle_ns", "classify_blocked_ns", "transmit_rate_mbps", "sent_over_received")


def figure_rows(report: dict) -> list[dict]:
    rows = []
    for algo, e in report["classifiers"].items():
        sim = e.get("sim")
        cls = sim["stages"]["classify"] if sim else {}
        rows.append({
            "algo": algo,
            "classify_throughput_pps": e["classify_throughput_pps"],
            "mean_probes": e["mean_probes"],
            "mean_node_reads": e["mean_node_reads"],
            "classify_idle_ns": cls.get("idle_ns", ""),
            "classify_blocked_ns": cls.get("blocked_ns", ""),
            "transmit_rate_mbps": e.get("transmit_rate_mbps", ""),
            "sent_over_received": e.get("sent_over_received", ""),
        })
    return rows


def cmd_compare(args) -> int:
    rules, trace = _load_inputs(args)
    sim_cfg = load_sim_config(args.sim_config, _sim_overrides(args)) if args.simulate else None
    try:
        report = compare(rules, trace, repeat=args.repeat, jobs=args.jobs,
                         proto_partition=not args.no_partition, simulate=args.simulate,
                         sim_cfg=sim_cfg, duration_ns=_duration(args, trace))
    except Mismatch as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_MISMATCH
    report["inputs"] = {"rules": digest(args.rules), "trace": digest(args.trace)}
    _write(args.out, json.dumps(report, indent=2, sort_keys=True) + "\n")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.DictWriter(fh, FIGURE_COLUMNS, lineterminator="\n")
            w.writeheader()
            w.writerows(figure_rows(report))
    return 0


def cmd_simulate(args) -> int:
    rules, trace = _load_inputs(args)
    c = build(args.algo, rules, not args.no_partition)
    cfg = load_sim_config(args.sim_config, _sim_overrides(args))
    rep = run_sim(trace, c, cfg, duration_ns=_duration(args, trace))
    out = rep.to_dict()
    out["algo"] = args.algo
    out["config"] = asdict(cfg)
    out["inputs"] = {"rules": digest(args.rules), "trace": digest(args.trace)}
    _write(args.out, json.dumps(out, indent=2, sort_keys=True) + "\n")
    return 0


def _add_sim_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("simulation")
    g.add_argument("--sim-config", help="flat key = value file of SimConfig fields")
    g.add_argument("--c0", type=int, help="classify compute cost per packet, ns")
    g.add_argument("--c-probe", type=int, help="cost per hash-table probe, ns")
    g.add_argument("--c-node", type=int, help="cost per tuple descriptor / trie element read, ns")
    g.add_argument("--rx-workers", type=_positive)
    g.add_argument("--cls-workers", type=_positive)
    g.add_argument("--tx-workers", type=_positive)
    g.add_argument("--ring1", type=_positive, help="receive->classify ring capacity")
    g.add_argument("--ring2", type=_positive, help="classify->transmit ring capacity")
    g.add_argument("--tbuf-threshold", type=int)
    g.add_argument("--ports", type=_positive)
    g.add_argument("--duration", help="ns, or 'drain'; default: until the last arrival")


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tuplespace", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("gen-rules", help="write a ruleset")
    p.add_argument("--policy", choices=("random", "demo", "tiered"), default="random")
    p.add_argument("--n", type=_positive, default=100)
    p.add_argument("--seed", type=int)
    p.add_argument("--dist", type=_weights(5), default=None,
                   help="weights for prefix lengths 0,8,16,24,32 (default uniform)")
    p.add_argument("--ttl-threshold", type=int, default=64)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen_rules)

    p = sub.add_parser("gen-trace", help="write a trace CSV")
    p.add_argument("--count", type=int, default=1000)
    p.add_argument("--seed", type=int)
    p.add_argument("--mix", type=_weights(4), default=(1.0, 1.0, 1.0, 1.0),
                   help="weights for rtp,udp-low,udp-high,tcp")
    p.add_argument("--size", type=_positive, default=64)
    p.add_argument("--rate", type=_positive, default=1000, help="Mb/s")
    p.add_argument("--gap", type=int, default=96, help="inter-packet gap, ns")
    p.add_argument("--src-pool", action="append", help="source prefix pool (repeatable)")
    p.add_argument("--dst-pool", action="append", help="destination prefix pool (repeatable)")
    p.add_argument("--ttl-threshold", type=int, default=64)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen_trace)

    p = sub.add_parser("scenario", help="write the skewed benchmark scenario files")
    p.add_argument("--dir", required=True)
    p.add_argument("--count", type=_positive, default=10000)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_scenario)

    p = sub.add_parser("classify", help="classify a trace with one algorithm")
    p.add_argument("--rules", required=True)
    p.add_argument("--trace", required=True)
    p.add_argument("--algo", choices=ALGOS, default="ttss-v1")
    p.add_argument("--check-oracle", action="store_true")
    p.add_argument("--report")
    p.add_argument("--repeat", type=_positive, default=3)
    p.add_argument("--jobs", type=_positive, default=1)
    p.add_argument("--no-partition", action="store_true", help="disable protocol partitioning")
    p.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("compare", help="run every algorithm on the same inputs")
    p.add_argument("--rules", required=True)
    p.add_argument("--trace", required=True)
    p.add_argument("--simulate", action="store_true")
    p.add_argument("--out")
    p.add_argument("--csv", help="also write the per-figure series as CSV")
    p.add_argument("--repeat", type=_positive, default=3)
    p.add_argument("--jobs", type=_positive, default=1)
    p.add_argument("--no-partition", action="store_true")
    _add_sim_flags(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("simulate", help="run the pipeline simulation for one algorithm")
    p.add_argument("--rules", required=True)
    p.add_argument("--trace", required=True)
    p.add_argument("--algo", choices=ALGOS, default="ttss-v1")
    p.add_argument("--out")
    p.add_argument("--no-partition", action="store_true")
    _add_sim_flags(p)
    p.set_defaults(func=cmd_simulate)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (RuleSyntaxError, TraceFormatError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
