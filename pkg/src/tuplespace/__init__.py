"""Multi-field packet classification by tuple space search.

Linear search, Tuple Space Search and the trie-organised variant (longest
prefix first with early exit, or shortest first with a full scan), plus a
traffic generator and a receive/classify/transmit pipeline simulator.
"""

from .oracle import LinearClassifier, MatchResult, classify_linear, classify_linear_batch
from .pipesim import SimConfig, SimReport, run_sim, segment
from .rulemodel import (
    IpPrefix, PacketHeader, Rule, RuleSet, RuleSyntaxError, TtlBand, Tuple, format_ruleset,
    match_key, match_order, parse_ruleset, rule_matches, tuple_of_rule,
)
from .traffic import (
    TraceRecord, TrafficConfig, demo_policy_ruleset, generate_ruleset, generate_trace,
    read_trace, tiered_policy_ruleset, write_trace,
)
from .tss import TssClassifier, TupleTable, build_tss, classify_tss, key_of
from .ttss import ProbeSummary, TtssClassifier, Version, build_ttss, classify_ttss, probe_stats

__version__ = "0.1.0"

__all__ = [
    "LinearClassifier",
    "MatchResult",
    "classify_linear",
    "classify_linear_batch",
    "SimConfig",
    "SimReport",
    "run_sim",
    "segment",
    "IpPrefix",
    "PacketHeader",
    "Rule",
    "RuleSet",
    "RuleSyntaxError",
    "TtlBand",
    "Tuple",
    "format_ruleset",
    "match_key",
    "match_order",
    "parse_ruleset",
    "rule_matches",
    "tuple_of_rule",
    "TraceRecord",
    "TrafficConfig",
    "demo_policy_ruleset",
    "generate_ruleset",
    "generate_trace",
    "read_trace",
    "tiered_policy_ruleset",
    "write_trace",
    "TssClassifier",
    "TupleTable",
    "build_tss",
    "classify_tss",
    "key_of",
    "ProbeSummary",
    "TtssClassifier",
    "Version",
    "build_ttss",
    "classify_ttss",
    "probe_stats",
]
