"""Discrete-event model of a receive -> classify -> transmit packet pipeline.

Three stages, each a pool of workers (hardware threads) serving packets in
strict arrival order, joined by bounded scratch rings:

* receive takes packets from the receive buffer (RBUF), charges a cost per
  64-byte m-packet and pushes a handle onto ring 1;
* classify pops ring 1, runs the plugged classifier and pushes onto ring 2;
* transmit pops ring 2 into a per-port request queue, moves packets into the
  port's transmit buffer (TBUF) and drains it at line rate. A port whose
  TBUF holds more than ``tbuf_threshold`` m-packets is skipped until it
  drains.

A worker that has finished a packet but cannot hand it on (predecessor not
yet done, or downstream ring full) holds it; that time is ``blocked_ns``.
Classification time is split into compute (``c0_ns``, counted as busy) and
memory wait (hash probes and tuple-descriptor reads, counted as ``stall_ns``),
so a thread waiting on table memory is not counted as doing work. ``idle_ns``
is worker time not spent busy and includes stall and blocked time.

Times are integer nanoseconds; a 600 MHz engine cycle is about 1.67 ns.
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import asdict, dataclass, field
from typing import Sequence

from .traffic import TraceRecord

MPACKET_BYTES = 64

_ARRIVE, _RX_DONE, _CLS_DONE, _TX_DONE, _WIRE_DONE = range(5)


def segment(size_bytes: int) -> int:
    """Number of 64-byte m-packets a packet occupies."""
    if size_bytes < 1:
        raise ValueError("packet size must be at least 1 byte")
    return -(-size_bytes // MPACKET_BYTES)


@dataclass
class SimConfig:
    rx_workers: int = 8
    cls_workers: int = 8
    tx_workers: int = 8
    rx_cost_ns: int = 40  # per m-packet
    tx_cost_ns: int = 40  # per m-packet
    c0_ns: int = 50
    c_probe_ns: int = 100
    c_node_ns: int = 20
    ring1_capacity: int = 128
    ring2_capacity: int = 128
    rbuf_mpackets: int = 128  # 8 KB
    n_ports: int = 4
    port_rate_mbps: int = 1000
    tbuf_threshold: int = 16  # m-packets per port
    port_queue_capacity: int = 64

    def __post_init__(self):
        for name in ("rx_workers", "cls_workers", "tx_workers", "n_ports",
                     "rbuf_mpackets", "port_queue_capacity", "port_rate_mbps"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("rx_cost_ns", "tx_cost_ns", "c0_ns"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.c_probe_ns < 0 or self.c_node_ns < 0 or self.tbuf_threshold < 0:
            raise ValueError("negative cost or threshold")
        for name in ("ring1_capacity", "ring2_capacity"):
            cap = getattr(self, name)
            if cap < 1 or cap & (cap - 1):
                raise ValueError(f"{name} must be a power of two, got {cap}")

    def classify_cost(self, probes: int, node_reads: int) -> tuple[int, int]:
        """(compute, memory-wait) nanoseconds for one classification."""
        return self.c0_ns, self.c_probe_ns * probes + self.c_node_ns * node_reads


@dataclass
class StageMetrics:
    workers: int
    busy_ns: int = 0
    idle_ns: int = 0
    stall_ns: int = 0
    blocked_ns: int = 0
    processed_count: int = 0
    dropped_count: int = 0


@dataclass
class FlowCounts:
    received: int = 0
    sent: int = 0
    dropped: int = 0
    in_flight: int = 0
    max_queue: int = 0


@dataclass
class SimReport:
    wall_ns: int
    received_count: int
    sent_count: int
    dropped_count: int
    in_flight_count: int
    sent_bytes: int
    transmit_rate_mbps: float
    receive_rate_mbps: float
    sent_over_received: float
    stages: dict[str, StageMetrics]
    port_sent: list[int]
    flows: dict[int, FlowCounts]
    fifo_ok: bool
    mean_probes: float
    # flow -> sent packet indices, in send order; kept out of the JSON form
    send_order: dict[int, list[int]] = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("send_order")
        d["flows"] = {str(k): v for k, v in d["flows"].items()}
        d["schema"] = 1
        return d


def _clip(a: float, b: float, end: float) -> int:
    return int(max(0.0, min(b, end) - min(a, end)))


class _OrderedStage:
    """Worker pool that starts packets in FIFO order and releases them in the
    same order."""

    def __init__(self, name: str, workers: int, inq: deque):
        self.name = name
        self.metrics = StageMetrics(workers)
        self.free = workers
        self.inq = inq
        # [idx, done, finish_time]
        self.pending: deque[list] = deque()


class _Sim:
    def __init__(self, trace: Sequence[TraceRecord], results, cfg: SimConfig, end: float):
        self.trace = trace
        self.results = results
        self.cfg = cfg
        self.end = end
        self.now = 0
        self.events: list = []
        self.seq = 0

        self.rbuf_used = 0
        self.ring1: deque[int] = deque()
        self.ring2: deque[int] = deque()
        self.rx = _OrderedStage("receive", cfg.rx_workers, deque())
        self.cls = _OrderedStage("classify", cfg.cls_workers, self.ring1)
        self.tx_metrics = StageMetrics(cfg.tx_workers)
        self.tx_free = cfg.tx_workers
        self.tx_rr = 0
        self.tx_in_service: set[int] = set()

        n = cfg.n_ports
        self.port_q: list[deque[int]] = [deque() for _ in range(n)]
        self.port_locked = [False] * n
        self.tbuf = [0] * n
        self.wire_q: list[deque[list]] = [deque() for _ in range(n)]
        self.wire_busy = [False] * n
        self.port_sent = [0] * n

        self.flows: dict[int, FlowCounts] = {}
        self.queue_occ: dict[int, int] = {}
        self.send_order: dict[int, list[int]] = {}
        self.received = self.sent = self.sent_bytes = self.recv_bytes = 0
        self.last_time = 0

    # -- helpers ---------------------------------------------------------

    def push(self, t: int, kind: int, data) -> None:
        heapq.heappush(self.events, (t, self.seq, kind, data))
        self.seq += 1

    def flow_of(self, idx: int) -> int:
        f = self.results[idx].flow
        return 0 if f is None else f

    def port_of(self, idx: int) -> int:
        return (self.flow_of(idx) - 1) % self.cfg.n_ports

    def fc(self, flow: int) -> FlowCounts:
        c = self.flows.get(flow)
        if c is None:
            c = self.flows[flow] = FlowCounts()
        return c

    # -- ordered stages --------------------------------------------------

    def _service(self, stage: _OrderedStage, idx: int) -> tuple[int, int]:
        m = segment(self.trace[idx].size_bytes)
        if stage is self.rx:
            return self.cfg.rx_cost_ns * m, 0
        r = self.results[idx]
        return self.cfg.classify_cost(r.probes, r.node_reads)

    def _downstream_ok(self, stage: _OrderedStage) -> bool:
        if stage is self.rx:
            return len(self.ring1) < self.cfg.ring1_capacity
        return len(self.ring2) < self.cfg.ring2_capacity

    def _emit(self, stage: _OrderedStage, idx: int) -> None:
        if stage is self.rx:
            self.ring1.append(idx)
            return
        flow = self.flow_of(idx)
        if flow == 0:
            # no rule matched: nowhere to send it
            stage.metrics.dropped_count += 1
            self.fc(0).dropped += 1
            return
        self.ring2.append(idx)
        occ = self.queue_occ.get(flow, 0) + 1
        self.queue_occ[flow] = occ
        c = self.fc(flow)
        c.max_queue = max(c.max_queue, occ)

    def _progress_ordered(self, stage: _OrderedStage) -> bool:
        moved = False
        pend = stage.pending
        while pend and pend[0][1] and self._downstream_ok(stage):
            idx, _, finish = pend.popleft()
            stage.metrics.blocked_ns += _clip(finish, self.now, self.end)
            stage.metrics.processed_count += 1
            stage.free += 1
            self._emit(stage, idx)
            moved = True
        while stage.free and stage.inq:
            idx = stage.inq.popleft()
            stage.free -= 1
            compute, wait = self._service(stage, idx)
            t = self.now
            stage.metrics.busy_ns += _clip(t, t + compute, self.end)
            stage.metrics.stall_ns += _clip(t + compute, t + compute + wait, self.end)
            pend.append([idx, False, t + compute + wait])
            self.push(t + compute + wait, _RX_DONE if stage is self.rx else _CLS_DONE, pend[-1])
            moved = True
        return moved

    # -- transmit ----------------------------------------------------------

    def _progress_tx(self) -> bool:
        cfg = self.cfg
        moved = False
        while self.ring2:
            p = self.port_of(self.ring2[0])
            if len(self.port_q[p]) >= cfg.port_queue_capacity:
                break
            self.port_q[p].append(self.ring2.popleft())
            moved = True
        n = cfg.n_ports
        while self.tx_free:
            for k in range(n):
                p = (self.tx_rr + k) % n
                if self.port_q[p] and not self.port_locked[p] and self.tbuf[p] <= cfg.tbuf_threshold:
                    break
            else:
                break
            self.tx_rr = (p + 1) % n
            idx = self.port_q[p].popleft()
            self.port_locked[p] = True
            self.tx_in_service.add(idx)
            self.tx_free -= 1
            cost = cfg.tx_cost_ns * segment(self.trace[idx].size_bytes)
            self.tx_metrics.busy_ns += _clip(self.now, self.now + cost, self.end)
            self.push(self.now + cost, _TX_DONE, (idx, p))
            moved = True
        return moved

    def _wire_next(self, p: int) -> None:
        head = self.wire_q[p][0]
        remaining = head[1]
        nbytes = min(MPACKET_BYTES, remaining)
        dt = -(-nbytes * 8000 // self.cfg.port_rate_mbps)
        self.wire_busy[p] = True
        self.push(self.now + dt, _WIRE_DONE, p)

    def settle(self) -> None:
        while True:
            moved = self._progress_tx()
            moved |= self._progress_ordered(self.cls)
            moved |= self._progress_ordered(self.rx)
            if not moved:
                return

    # -- main loop ---------------------------------------------------------

    def run(self) -> None:
        for i, rec in enumerate(self.trace):
            self.push(rec.arrival_ns, _ARRIVE, i)
        while self.events:
            t, _, kind, data = self.events[0]
            if t > self.end:
                break
            heapq.heappop(self.events)
            self.now = t
            self.last_time = t
            if kind == _ARRIVE:
                self._arrive(data)
            elif kind in (_RX_DONE, _CLS_DONE):
                data[1] = True
                if kind == _RX_DONE:
                    self.rbuf_used -= segment(self.trace[data[0]].size_bytes)
            elif kind == _TX_DONE:
                idx, p = data
                m = segment(self.trace[idx].size_bytes)
                self.tbuf[p] += m
                self.wire_q[p].append([idx, self.trace[idx].size_bytes, m])
                self.port_locked[p] = False
                self.tx_in_service.discard(idx)
                self.tx_free += 1
                self.tx_metrics.processed_count += 1
                if not self.wire_busy[p]:
                    self._wire_next(p)
            else:
                self._wire_done(data)
            self.settle()

    def _arrive(self, idx: int) -> None:
        rec = self.trace[idx]
        flow = self.flow_of(idx)
        self.received += 1
        self.recv_bytes += rec.size_bytes
        self.fc(flow).received += 1
        m = segment(rec.size_bytes)
        if self.rbuf_used + m > self.cfg.rbuf_mpackets:
            self.rx.metrics.dropped_count += 1
            self.fc(flow).dropped += 1
            return
        self.rbuf_used += m
        self.rx.inq.append(idx)

    def _wire_done(self, p: int) -> None:
        head = self.wire_q[p][0]
        head[1] -= min(MPACKET_BYTES, head[1])
        head[2] -= 1
        self.tbuf[p] -= 1
        if head[1] == 0:
            self.wire_q[p].popleft()
            idx = head[0]
            flow = self.flow_of(idx)
            self.sent += 1
            self.sent_bytes += self.trace[idx].size_bytes
            self.port_sent[p] += 1
            self.fc(flow).sent += 1
            self.queue_occ[flow] -= 1
            self.send_order.setdefault(flow, []).append(idx)
        self.wire_busy[p] = False
        if self.wire_q[p]:
            self._wire_next(p)

    def _in_pipeline(self):
        """Every packet index currently held anywhere in the pipeline."""
        yield from self.rx.inq
        for stage in (self.rx, self.cls):
            yield from (entry[0] for entry in stage.pending)
        yield from self.ring1
        yield from self.ring2
        for q in self.port_q:
            yield from q
        yield from self.tx_in_service
        for q in self.wire_q:
            yield from (entry[0] for entry in q)

    def report(self) -> SimReport:
        wall = self.end if math.isfinite(self.end) else self.last_time
        wall = int(wall)
        for stage in (self.rx, self.cls):
            for idx, done, finish in stage.pending:
                if done:
                    stage.metrics.blocked_ns += _clip(finish, wall, wall)
        stages = {"receive": self.rx.metrics, "classify": self.cls.metrics, "transmit": self.tx_metrics}
        for m in stages.values():
            m.idle_ns = m.workers * wall - m.busy_ns
        dropped = sum(c.dropped for c in self.flows.values())
        for idx in self._in_pipeline():
            self.fc(self.flow_of(idx)).in_flight += 1
        fifo_ok = all(all(a < b for a, b in zip(order, order[1:])) for order in self.send_order.values())
        recv = self.received
        probes = [self.results[i].probes for i in range(len(self.trace))]
        return SimReport(
            wall_ns=wall,
            received_count=recv,
            sent_count=self.sent,
            dropped_count=dropped,
            in_flight_count=sum(c.in_flight for c in self.flows.values()),
            sent_bytes=self.sent_bytes,
            transmit_rate_mbps=self.sent_bytes * 8000 / wall if wall else 0.0,
            receive_rate_mbps=self.recv_bytes * 8000 / wall if wall else 0.0,
            sent_over_received=self.sent / recv if recv else 1.0,
            stages=stages,
            port_sent=list(self.port_sent),
            flows=dict(sorted(self.flows.items())),
            fifo_ok=fifo_ok,
            mean_probes=sum(probes) / len(probes) if probes else 0.0,
            send_order=self.send_order,
        )


def run_sim(trace: Sequence[TraceRecord], classifier, cfg: SimConfig | None = None,
            ring_capacities: tuple[int, int] | None = None,
            duration_ns: int | None = None) -> SimReport:
    """Simulate ``trace`` through the pipeline with ``classifier`` plugged
    into the classify stage.

    With ``duration_ns`` the run is cut off at that time (packets still in
    the pipeline are reported as in flight); otherwise it runs until the
    pipeline drains.
    """
    cfg = cfg or SimConfig()
    if ring_capacities is not None:
        cfg = SimConfig(**{**asdict(cfg), "ring1_capacity": ring_capacities[0],
                           "ring2_capacity": ring_capacities[1]})
    prev = -1
    for rec in trace:
        if rec.arrival_ns < prev:
            raise ValueError("trace must be sorted by arrival time")
        prev = rec.arrival_ns
    results = [classifier.classify(rec.hdr) for rec in trace]
    end = math.inf if duration_ns is None else duration_ns
    sim = _Sim(trace, results, cfg, end)
    sim.run()
    return sim.report()
