"""Schedule augmentation over a transmission graph and latency verification.

Operations are visited in topological order.  ``C`` holds the earliest
transmission start of every operation and ``theta`` the worst-case start
on every port given the elevated traffic admitted by the port's token
bucket.  Each visit emits the GCL and PSFP entries of one frame-hop and then
pushes its successors' earliest starts forward.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping

from .core import (Instant, OpKey, Port, Schedule, ScheduleError, Stream, ceil_frac,
                   hypercycle)
from .tgraph import SINK, SOURCE, OpNode, TransmissionGraph, topo_sort
from .augment_port import SlotTiming, blocking_terms, earliest_start, gate_tables, surely_ahead
from .token_bucket import TokenBucket
from .weakly_hard import eligible


@dataclass
class AugState:
    C: dict[object, Instant] = field(default_factory=dict)
    theta: dict[Port, Instant] = field(default_factory=dict)
    latest: dict[OpKey, Instant] = field(default_factory=dict)


def overlap_increment(dmax: int, rate: int, tb: TokenBucket) -> int:
    """Time the port stays busy for a slot of length ``dmax`` plus the tokens
    refilled meanwhile: ``dmax * R / (R - r)``."""
    if tb.r == 0:
        return dmax
    return ceil_frac(Fraction(dmax) * rate / (rate - tb.r))


def _augment_pass(graph: TransmissionGraph, buckets: Mapping[Port, TokenBucket],
                  streams: Mapping[str, Stream], blocking: Mapping[OpKey, int],
                  st: AugState) -> Schedule:
    net = graph.network
    sched = Schedule(hypercycle(streams.values()))
    st.C.clear()
    st.theta.clear()
    st.latest.clear()
    # starts from the input schedule act as lower bounds so that a zero
    # bucket reproduces the input exactly
    for key, node in graph.nodes.items():
        st.C[node] = graph.starts.get(key, 0)
    done: set[object] = set()
    for node in topo_sort(graph):
        done.add(node)
        if not isinstance(node, OpNode):
            if node == SOURCE:
                for e in graph.out_edges(node):
                    st.C[e.dst] = max(st.C[e.dst], e.weight)
            continue
        s = streams[node.frame.stream]
        port = node.port
        link = net.link(*port)
        tb = buckets.get(port) or TokenBucket(port, 0)
        tb.check(link.rate)
        c = st.C[node]
        theta = max(st.theta.get(port, 0), c + tb.burst_time(link.rate))
        theta += blocking.get(node.key, 0)
        st.theta[port] = theta
        st.latest[node.key] = theta
        sched.starts[node.key] = c
        sched.latest[node.key] = theta
        dmax = link.dmax(s.size)
        sched.add_gcl(port, s.pcp, c, theta + dmax)

        overlap = False
        for e in graph.out_edges(node):
            if e.dst == SINK:
                continue
            if e.dst in done:
                raise ScheduleError(f"{e.dst} updated after being emitted")
            if e.kind == "disjunctive" and streams[e.dst.frame.stream].pcp <= s.pcp:
                st.C[e.dst] = max(st.C[e.dst], c + e.weight)
                overlap = True
            else:
                st.C[e.dst] = max(st.C[e.dst], theta + e.weight)
        if overlap:
            st.theta[port] = theta + overlap_increment(dmax, link.rate, tb)
    return sched


def _arrivals(graph: TransmissionGraph, sched: Schedule, E: Mapping[OpKey, Instant],
              node: OpNode) -> tuple[Instant, Instant]:
    """Earliest and latest instant the frame can enter the port's queue."""
    sid, idx, hop = node.key
    if hop == 1:
        return node.frame.release, node.frame.release
    prev = graph.nodes[(sid, idx, hop - 1)]
    link = graph.network.link(*prev.port)
    size = graph.streams[sid].size
    return E[prev.key] + link.dmin(size), sched.latest[prev.key] + link.dmax(size)


def _timing(graph: TransmissionGraph, sched: Schedule, E: Mapping[OpKey, Instant],
            node: OpNode, earliest: Instant) -> SlotTiming:
    s = graph.streams[node.frame.stream]
    lo, hi = _arrivals(graph, sched, E, node)
    ser = graph.network.link(*node.port).ser(s.size)
    return SlotTiming(s.pcp, lo, hi, sched.starts[node.key], earliest, sched.latest[node.key],
                      ser, node.hop == 1)


def earliest_starts(graph: TransmissionGraph, sched: Schedule) -> dict[OpKey, Instant]:
    """First instant each frame-hop could start under the schedule's gates,
    assuming every upstream hop took ``d_min`` and only frames surely ahead
    of it in its queue were in the way."""
    streams = graph.streams
    gates = {port: gate_tables(sched, port) for port in graph.sequences}
    before: dict[OpKey, list[OpNode]] = {}
    for seq in graph.sequences.values():
        for i, n in enumerate(seq):
            pcp = streams[n.frame.stream].pcp
            before[n.key] = [m for m in seq[:i] if streams[m.frame.stream].pcp == pcp]
    E: dict[OpKey, Instant] = {}
    T: dict[OpKey, SlotTiming] = {}
    for node in topo_sort(graph):
        if not isinstance(node, OpNode):
            continue
        probe = _timing(graph, sched, E, node, 0)
        ahead = [(T[m.key].earliest, T[m.key].ser) for m in before[node.key]
                 if surely_ahead(T[m.key], probe)]
        E[node.key] = earliest_start(gates[node.port][probe.pcp], probe.arrive_min, probe.ser,
                                     probe.start, ahead)
        T[node.key] = _timing(graph, sched, E, node, E[node.key])
    return E


def early_blocking(graph: TransmissionGraph, sched: Schedule, E: Mapping[OpKey, Instant],
                   buckets: Mapping[Port, TokenBucket]) -> dict[OpKey, int]:
    out = {}
    for port, seq in graph.sequences.items():
        link = graph.network.link(*port)
        tb = buckets.get(port) or TokenBucket(port, 0)
        items = [_timing(graph, sched, E, n, E[n.key]) for n in seq]
        for n, extra in zip(seq, blocking_terms(items, link.rate, tb, sched.hypercycle)):
            if extra:
                out[n.key] = extra
    return out


def _emit_psfp(graph: TransmissionGraph, sched: Schedule) -> None:
    net, streams = graph.network, graph.streams
    for key, node in graph.nodes.items():
        port = node.port
        if net.vertices[port[1]] == "end-device":
            continue
        s = streams[node.frame.stream]
        link = net.link(*port)
        dmin, dmax = link.dmin(s.size), link.dmax(s.size)
        f, theta, early = node.frame, sched.latest[key], sched.earliest[key]
        sched.add_psfp(port[1], s.id, early + dmin, theta + dmax + 1, "forward", f.index)
        if eligible(s.mu, f.index):
            # elevated upstream, the frame may show up ahead of schedule
            sched.add_psfp(port[1], s.id, f.release, early + dmin, "elevate", f.index)
            sched.add_psfp(port[1], s.id, theta + dmax + 1, f.deadline, "elevate", f.index)


def augment_multihop(graph: TransmissionGraph, buckets: Mapping[Port, TokenBucket],
                     streams: Mapping[str, Stream] | None = None,
                     state: AugState | None = None, max_rounds: int = 100) -> Schedule:
    streams = dict(streams or graph.streams)
    if graph.network is None:
        raise ValueError("graph carries no network")
    st = state if state is not None else AugState()
    blocking: dict[OpKey, int] = {}
    for _ in range(max_rounds):
        sched = _augment_pass(graph, buckets, streams, blocking, st)
        E = earliest_starts(graph, sched)
        nb = dict(blocking)
        for k, v in early_blocking(graph, sched, E, buckets).items():
            nb[k] = max(nb.get(k, 0), v)
        if nb == blocking:
            break
        blocking = nb
    else:
        raise ScheduleError("early-departure blocking does not settle")
    sched.earliest = E
    _emit_psfp(graph, sched)
    return sched


@dataclass(frozen=True)
class StreamLatency:
    stream: str
    worst_latency: int
    slack: int  # min over frames of deadline - worst arrival; must be > 0
    passed: bool


@dataclass
class LatencyReport:
    streams: dict[str, StreamLatency]
    wrap_conflicts: list[Port] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.streams.values()) and not self.wrap_conflicts

    def first_failure(self) -> str | None:
        for sid in sorted(self.streams):
            if not self.streams[sid].passed:
                return sid
        return None


def worst_arrival(sched: Schedule, graph: TransmissionGraph, key: OpKey) -> Instant:
    node = graph.nodes[key]
    s = graph.streams[node.frame.stream]
    return sched.latest[key] + graph.network.link(*node.port).dmax(s.size)


def verify_latency(sched: Schedule, graph: TransmissionGraph,
                   buckets: Mapping[Port, TokenBucket] | None = None) -> LatencyReport:
    out: dict[str, StreamLatency] = {}
    last_hops: dict[tuple[str, int], int] = {}
    for sid, idx, hop in graph.nodes:
        last_hops[(sid, idx)] = max(last_hops.get((sid, idx), 0), hop)
    per_stream: dict[str, list[tuple[int, int]]] = {}
    for (sid, idx), hop in last_hops.items():
        node = graph.nodes[(sid, idx, hop)]
        arr = worst_arrival(sched, graph, node.key)
        per_stream.setdefault(sid, []).append((arr - node.frame.release, node.frame.deadline - arr))
    for sid, vals in sorted(per_stream.items()):
        worst = max(v[0] for v in vals)
        slack = min(v[1] for v in vals)
        out[sid] = StreamLatency(sid, worst, slack, slack > 0)
    return LatencyReport(out, wrap_conflicts(sched, graph, buckets or {}))


def wrap_conflicts(sched: Schedule, graph: TransmissionGraph,
                   buckets: Mapping[Port, TokenBucket]) -> list[Port]:
    """Ports whose prolonged tail runs into the next hypercycle's first slot."""
    H = sched.hypercycle
    bad = []
    for port, seq in sorted(graph.sequences.items()):
        if len(seq) < 1:
            continue
        first, last = seq[0], seq[-1]
        link = graph.network.link(*port)
        tb = buckets.get(port) or TokenBucket(port, 0)
        s_first = graph.streams[first.frame.stream]
        s_last = graph.streams[last.frame.stream]
        c_first = sched.starts[first.key] + H
        c_last, th_last = sched.starts[last.key], sched.latest[last.key]
        dmax_last = link.dmax(s_last.size)
        if s_first.pcp > s_last.pcp:
            ok = c_first >= th_last + dmax_last
        else:
            ok = (c_first >= c_last + dmax_last and
                  th_last + overlap_increment(dmax_last, link.rate, tb)
                  <= c_first + tb.burst_time(link.rate))
        if not ok:
            bad.append(port)
    return bad


def uncovered_ops(sched: Schedule, graph: TransmissionGraph,
                  buckets: Mapping[Port, TokenBucket]) -> list[OpKey]:
    """Operations whose stored bounds do not account for ``buckets``.

    Re-augments the stored starts: an operation is uncovered if the
    augmentation would defer its start, or if the stored latest start is
    smaller (or the stored earliest start larger) than the recomputed one.
    ``verify_latency`` alone trusts the stored bounds, so a schedule that
    was never augmented would pass it.
    """
    ref = augment_multihop(graph, buckets)
    bad = []
    for key in sorted(graph.nodes):
        if (ref.starts[key] != sched.starts.get(key)
                or sched.latest.get(key, sched.starts.get(key)) < ref.latest[key]
                or sched.earliest.get(key, -1) > ref.earliest[key]):
            bad.append(key)
    return bad
