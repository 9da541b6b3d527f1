"""Greedy ASAP primary scheduler.

Operations (frame-hops) are placed one at a time: the operation that can
start earliest goes next, ties broken by higher PCP, earlier readiness,
earlier deadline, then stream id and frame index.  A port stays reserved
for ``d_max`` after each start, so the transmission graph built from the
result has no negative slack on its disjunctive edges.  The starts are then
normalised to critical costs and checked with the zero-bucket augmentation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from ..augment_multihop import augment_multihop, verify_latency
from ..core import Instant, NetworkGraph, OpKey, Port, Schedule, ScheduleError, Stream, hypercycle
from ..tgraph import TransmissionGraph, build_graph


class InfeasibleSchedule(ScheduleError):
    """Raised when the primary schedule misses a bound; ``stream`` names the
    first stream (by id) that fails."""

    def __init__(self, stream: str | None, reason: str):
        self.stream = stream
        self.reason = reason
        super().__init__(f"{stream}: {reason}" if stream else reason)


@dataclass
class PrimaryResult:
    schedule: Schedule
    graph: TransmissionGraph


def list_schedule(network: NetworkGraph, streams: Iterable[Stream]) -> dict[OpKey, Instant]:
    streams = sorted(streams, key=lambda s: s.id)
    H = hypercycle(streams)
    ready: dict[OpKey, Instant] = {}
    for s in streams:
        network.check_route(s.route)
        for f in s.frames(H):
            ready[(s.id, f.index, 1)] = f.release
    by_id = {s.id: s for s in streams}
    port_free: dict[Port, Instant] = {}
    starts: dict[OpKey, Instant] = {}
    while ready:
        best, best_key = None, None
        for key, r in ready.items():
            sid, idx, hop = key
            s = by_id[sid]
            port = s.hops[hop - 1]
            cand = max(r, port_free.get(port, 0))
            rank = (cand, -s.pcp, r, s.frame(idx).deadline, sid, idx)
            if best is None or rank < best:
                best, best_key = rank, key
        key = best_key
        del ready[key]
        sid, idx, hop = key
        s = by_id[sid]
        port = s.hops[hop - 1]
        start = best[0]
        starts[key] = start
        dmax = network.link(*port).dmax(s.size)
        port_free[port] = start + dmax
        if hop < len(s.hops):
            ready[(sid, idx, hop + 1)] = start + dmax
    return starts


def schedule_primary(network: NetworkGraph, streams: Iterable[Stream]) -> PrimaryResult:
    """Schedule every frame released in one hypercycle and verify it.

    Raises ``InfeasibleSchedule`` when a frame's worst-case arrival reaches
    its deadline, a port's slots spill into the next hypercycle, or the
    queue order cannot be kept.
    """
    streams = list(streams)
    if not streams:
        raise InfeasibleSchedule(None, "no isochronous streams")
    starts = list_schedule(network, streams)
    try:
        graph = build_graph(starts, streams, network)
        sched = augment_multihop(graph, {})
        # re-anchor the graph on the normalised starts
        graph = build_graph(sched.starts, streams, network)
    except InfeasibleSchedule:
        raise
    except ScheduleError as exc:
        sid = _stream_in(str(exc), streams)
        raise InfeasibleSchedule(sid, str(exc)) from None
    report = verify_latency(sched, graph)
    sid = report.first_failure()
    if sid is not None:
        lat = report.streams[sid]
        raise InfeasibleSchedule(sid, f"worst-case latency {lat.worst_latency} ns, "
                                      f"slack {lat.slack} ns")
    if report.wrap_conflicts:
        port = report.wrap_conflicts[0]
        owner = graph.sequences[port][-1].frame.stream
        raise InfeasibleSchedule(owner, f"slots on {port[0]}->{port[1]} spill into the next hypercycle")
    return PrimaryResult(sched, graph)


def _stream_in(msg: str, streams: list[Stream]) -> str | None:
    hits = [s.id for s in streams if s.id in msg]
    return min(hits, key=msg.index) if hits else None
