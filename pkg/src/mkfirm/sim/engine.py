"""Event-driven simulation of bridges with gated priority queues and
per-stream filtering.

Each egress port has eight FIFO queues.  A frame starts transmission when it
heads its queue, the queue's gate stays open for its whole serialization and
no higher-priority queue can transmit at that instant.  Queue 7 is never
gated.  On ingress, a bridge holding filter entries for the frame's stream
matches the local arrival time against them: forward keeps the PCP, elevate
rewrites it to 7 for the rest of the route, no match drops the frame.  All
windows of one frame slot share a quota of a single frame, so a late frame
of one period can take the place of the next one.
"""

from __future__ import annotations

import heapq
import zlib
from bisect import bisect_right
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, NamedTuple

import numpy as np

from ..core import NS_PER_S, Link, NetworkGraph, Port, Schedule, ScheduleError, SporadicStream, Stream
from ..token_bucket import TokenBucket
from ..gates import GateTable
from .delay import DelayModel, DelaySampler

TX_END, WAKE, INGRESS, TRY = 0, 1, 2, 3
RELEASE_BASE = -(1 << 62)


class SimEvent(NamedTuple):
    time: int
    event: str
    stream: str
    frame_index: int
    node: str
    pcp: int
    detail: str = ""


@dataclass
class FrameRecord:
    stream: str
    index: int
    release: int
    arrival: int | None = None
    discarded_at: str | None = None
    elevated: bool = False
    wireless_delay: int = 0
    window_misses: int = 0
    reason: str = ""

    @property
    def latency(self) -> int | None:
        return None if self.arrival is None else self.arrival - self.release

    def met(self, latency_bound: int) -> bool:
        return self.arrival is not None and self.arrival - self.release < latency_bound


@dataclass
class SimTrace:
    hypercycle: int
    cycles: int
    seed: int
    records: dict[str, list[FrameRecord]]
    sporadic: dict[str, list[FrameRecord]]
    events: list[SimEvent] = field(default_factory=list)
    injected: dict[Port, list[tuple[int, int]]] = field(default_factory=dict)


@dataclass
class Adversary:
    """Elevated cross traffic injected straight into queue 7 of the given
    ports, conforming to each port's token bucket.

    At every anchor (gate-open instants by default) and at as many random
    instants, a greedy adversary sends as many frames as the bucket allows
    with probability ``greedy``, otherwise a random feasible number.
    """

    buckets: Mapping[Port, TokenBucket]
    sizes: Mapping[Port, int] = field(default_factory=dict)
    anchors: Mapping[Port, list[int]] | None = None
    greedy: float = 0.5


@dataclass
class _Frame:
    uid: int
    stream: str
    index: int
    release: int
    size: int
    route: tuple[str, ...]
    pcp: int
    kind: str  # "iso" | "sporadic" | "adversary"
    hop: int = 0
    record: FrameRecord | None = None


class _Port:
    def __init__(self, link: Link, order: int, gates: dict[int, GateTable]):
        self.link = link
        self.order = order
        self.gates = gates
        self.queues: list[deque[_Frame]] = [deque() for _ in range(8)]
        self.busy = False
        self.wake_at: int | None = None
        self.try_pending: int | None = None


def _rng(seed: int, *names: str) -> np.random.Generator:
    key = zlib.crc32("|".join(names).encode())
    return np.random.default_rng([seed, key])


class Simulator:
    def __init__(self, network: NetworkGraph, schedule: Schedule, streams: Iterable[Stream],
                 delay_models: Mapping | None = None, sporadics: Iterable[SporadicStream] = (),
                 adversary: Adversary | None = None, clock_skew: Mapping[str, int] | None = None,
                 seed: int = 0, record: bool = False, sporadic_gap: float = 1.0):
        self.net = network
        self.sched = schedule
        self.H = schedule.hypercycle
        self.streams = {s.id: s for s in streams}
        self._rank = {sid: i for i, sid in enumerate(sorted(self.streams))}
        self.sporadics = list(sporadics)
        self.models = dict(delay_models or {})
        self.adversary = adversary
        self.skew = dict(clock_skew or {})
        self.seed = seed
        self.record = record
        self.sporadic_gap = sporadic_gap
        self._check_schedule()

        self.ports: dict[Port, _Port] = {}
        for order, (port, link) in enumerate(sorted(network.links.items())):
            gated = bool(schedule.gcl.get(port))
            gates = {}
            for q in range(8):
                iv = [(0, self.H)] if q == 7 or not gated else schedule.gate_intervals(port, q)
                gates[q] = GateTable(iv, self.H)
            self.ports[port] = _Port(link, order, gates)

        self.psfp: dict[tuple[str, str], list] = {}
        for bridge, entries in schedule.psfp.items():
            for p in entries:
                self.psfp.setdefault((bridge, p.stream), []).append((p.start, p.end, p.action, p.slot))
        for v in self.psfp.values():
            v.sort()
        self._psfp_starts = {k: [e[0] for e in v] for k, v in self.psfp.items()}
        self.quota: dict[tuple, int] = {}  # slot -> last hypercycle it passed a frame

        self.samplers: dict[tuple[Port, str], DelaySampler] = {}
        self.heap: list = []
        self.seq = 0
        self.uid = 0
        self.events: list[SimEvent] = []

    # ---------------------------------------------------------------- setup

    def _check_schedule(self) -> None:
        for port, entries in self.sched.gcl.items():
            for g in entries:
                if not 0 <= g.start < g.end <= self.H:
                    raise ScheduleError(f"GCL window on {port} not normalized to the hypercycle")
        self.sched.validate()

    def _push(self, t: int, cls: int, order: int, kind: str, payload) -> None:
        self.seq += 1
        heapq.heappush(self.heap, (t, cls, order, self.seq, kind, payload))

    def _release_order(self, sid: str, i: int) -> int:
        """Talkers enqueue frames released at the same instant in the order
        of their scheduled first-hop starts; all releases precede port events."""
        s = self.streams[sid]
        slot = i % (self.H // s.period)
        start = self.sched.starts.get((sid, slot, 1))
        if start is None:
            return RELEASE_BASE + self.H + self._rank[sid]
        return RELEASE_BASE + (start - s.phase - slot * s.period)

    def _log(self, t, event, f: _Frame, node, detail="") -> None:
        if self.record:
            self.events.append(SimEvent(t, event, f.stream, f.index, node, f.pcp, detail))

    def _model(self, port: Port, stream: str) -> DelayModel | None:
        return self.models.get((port, stream)) or self.models.get(port)

    def _delay(self, port: Port, f: _Frame, t: int) -> int:
        link = self.ports[port].link
        ser = link.ser(f.size)
        model = self._model(port, f.stream)
        if model is None:
            return link.dmax(f.size)
        key = (port, f.stream)
        sampler = self.samplers.get(key)
        if sampler is None:
            sampler = DelaySampler(model, _rng(self.seed, "delay", *port, f.stream))
            self.samplers[key] = sampler
        return max(sampler.sample(t), ser)

    # ------------------------------------------------------------------ run

    def run(self, cycles: int) -> SimTrace:
        if cycles <= 0:
            raise ValueError("need at least one hypercycle")
        H = self.H
        end_release = cycles * H
        records: dict[str, list[FrameRecord]] = {sid: [] for sid in self.streams}
        spor_records: dict[str, list[FrameRecord]] = {sp.id: [] for sp in self.sporadics}
        self._records, self._spor_records = records, spor_records
        self._end_release = end_release
        for s in self.streams.values():
            if s.phase < end_release:
                self._push(s.phase, INGRESS, self._release_order(s.id, 0), "release", (s.id, 0))
        self._spor_rng = {sp.id: _rng(self.seed, "sporadic", sp.id) for sp in self.sporadics}
        for sp in self.sporadics:
            first = int(self._spor_rng[sp.id].integers(0, sp.min_inter_event))
            self._push(first, INGRESS, -1, "sporadic", sp)
        injected: dict[Port, list[tuple[int, int]]] = {}
        if self.adversary is not None:
            self._plan_adversary(cycles, injected)

        horizon = end_release + 2 * H + max((s.latency for s in self.streams.values()), default=0)
        inflight: dict[int, _Frame] = {}
        self._inflight = inflight
        while self.heap:
            t, cls, order, _, kind, payload = heapq.heappop(self.heap)
            if t > horizon:
                break
            if kind == "tx_end":
                port = self.ports[payload]
                port.busy = False
                self._try(payload, t)
            elif kind == "wake":
                port = self.ports[payload]
                if port.wake_at == t:
                    port.wake_at = None
                    self._try(payload, t)
            elif kind == "try":
                port = self.ports[payload]
                port.try_pending = None
                self._try(payload, t)
            elif kind == "release":
                self._release(t, *payload)
            elif kind == "sporadic":
                self._release_sporadic(t, payload)
            elif kind == "inject":
                port, size = payload
                self.uid += 1
                f = _Frame(self.uid, "adversary", -1, t, size, port, 7, "adversary", hop=0)
                self._enqueue(port, f, t)
            elif kind == "ingress":
                self._ingress(t, payload)
        for f in inflight.values():
            if f.record is not None and f.record.arrival is None and f.record.discarded_at is None:
                f.record.discarded_at = f.route[f.hop]
                f.record.reason = "stranded"
        return SimTrace(H, cycles, self.seed, records, spor_records, self.events, injected)

    def _release(self, t: int, sid: str, i: int) -> None:
        s = self.streams[sid]
        nxt = s.phase + (i + 1) * s.period
        if nxt < self._end_release:
            self._push(nxt, INGRESS, self._release_order(sid, i + 1), "release", (sid, i + 1))
        rec = FrameRecord(sid, i, t)
        self._records[sid].append(rec)
        self.uid += 1
        f = _Frame(self.uid, sid, i, t, s.size, s.route, s.pcp, "iso", record=rec)
        self._inflight[f.uid] = f
        self._log(t, "release", f, s.route[0])
        self._enqueue((s.route[0], s.route[1]), f, t)

    def _release_sporadic(self, t: int, sp: SporadicStream) -> None:
        rng = self._spor_rng[sp.id]
        gap = sp.min_inter_event + int(rng.exponential(self.sporadic_gap * sp.min_inter_event))
        if t + gap < self._end_release:
            self._push(t + gap, INGRESS, -1, "sporadic", sp)
        recs = self._spor_records[sp.id]
        rec = FrameRecord(sp.id, len(recs), t)
        recs.append(rec)
        self.uid += 1
        f = _Frame(self.uid, sp.id, rec.index, t, sp.size, sp.route, sp.pcp, "sporadic", record=rec)
        self._inflight[f.uid] = f
        self._log(t, "release", f, sp.route[0])
        self._enqueue((sp.route[0], sp.route[1]), f, t)

    def _plan_adversary(self, cycles: int, injected: dict) -> None:
        adv = self.adversary
        H = self.H
        for port in sorted(adv.buckets):
            tb = adv.buckets[port]
            if tb.b <= 0:
                continue
            size = min(adv.sizes.get(port, tb.b), tb.b)
            if adv.anchors is not None:
                anchors = sorted(set(adv.anchors.get(port, [])))
            else:
                anchors = sorted({g.start for g in self.sched.gcl.get(port, [])})
            rng = _rng(self.seed, "adversary", *port)
            tokens = Fraction(tb.b)
            last = 0
            out = []
            for k in range(cycles):
                extra = rng.integers(0, H, size=max(len(anchors), 1))
                times = sorted({k * H + a for a in anchors} | {k * H + int(x) for x in extra})
                for t in times:
                    tokens = min(Fraction(tb.b), tokens + tb.r * Fraction(t - last, NS_PER_S))
                    last = t
                    most = int(tokens // size)
                    if most == 0:
                        continue
                    n = most if rng.random() < adv.greedy else int(rng.integers(0, most + 1))
                    for _ in range(n):
                        out.append((t, size))
                        self._push(t, INGRESS, -1, "inject", (port, size))
                    tokens -= n * size
            injected[port] = out

    # ------------------------------------------------------------ data path

    def _enqueue(self, port: Port, f: _Frame, t: int) -> None:
        p = self.ports.get(port)
        if p is None:
            raise ScheduleError(f"no link {port[0]}->{port[1]}")
        p.queues[f.pcp].append(f)
        self._log(t, "enqueue", f, port[0], f"{port[0]}->{port[1]}:{f.pcp}")
        if p.try_pending != t:
            p.try_pending = t
            self._push(t, TRY, p.order, "try", port)

    def _try(self, port: Port, t: int) -> None:
        p = self.ports[port]
        if p.busy:
            return
        skew = self.skew.get(port[0], 0)
        local = t + skew
        wake = None
        for q in range(7, -1, -1):
            queue = p.queues[q]
            if not queue:
                continue
            ser = p.link.ser(queue[0].size)
            st = p.gates[q].next_start(local, ser)
            if st == local:
                self._transmit(port, p, queue.popleft(), t, ser)
                return
            if st is not None and (wake is None or st < wake):
                wake = st
        if wake is not None:
            w = wake - skew
            if p.wake_at is None or w < p.wake_at or p.wake_at <= t:
                p.wake_at = w
                self._push(w, WAKE, p.order, "wake", port)

    def _transmit(self, port: Port, p: _Port, f: _Frame, t: int, ser: int) -> None:
        p.busy = True
        self._push(t + ser, TX_END, p.order, "tx_end", port)
        self._log(t, "tx_start", f, port[0], f"{port[0]}->{port[1]}")
        if f.kind == "adversary":
            return
        d = self._delay(port, f, t)
        if p.link.kind == "wireless" and f.record is not None:
            f.record.wireless_delay += d
        self._push(t + d, INGRESS, p.order, "ingress", f)

    def _ingress(self, t: int, f: _Frame) -> None:
        f.hop += 1
        node = f.route[f.hop]
        self._log(t, "ingress", f, node)
        entries = self.psfp.get((node, f.stream))
        if entries is not None:
            verdict = self._match(node, f, t)
            if verdict is None:
                self._discard(t, f, node, "no window")
                return
            action, slot = verdict
            if f.kind == "iso" and f.pcp != 7:
                s = self.streams[f.stream]
                if action != "forward" or slot != f.index % (self.H // s.period):
                    f.record.window_misses += 1
            self._log(t, "psfp", f, node, f"{action}:{slot}")
            if action == "elevate":
                f.pcp = 7
                if f.record is not None:
                    f.record.elevated = True
        if f.hop == len(f.route) - 1:
            self._log(t, "arrival", f, node)
            f.record.arrival = t
            self._inflight.pop(f.uid, None)
            return
        self._enqueue((node, f.route[f.hop + 1]), f, t)

    def _match(self, node: str, f: _Frame, t: int) -> tuple[str, int] | None:
        key = (node, f.stream)
        entries = self.psfp[key]
        local = t + self.skew.get(node, 0)
        tm = local % self.H
        i = bisect_right(self._psfp_starts[key], tm) - 1
        if i < 0 or tm >= entries[i][1]:
            return None
        _, _, action, slot = entries[i]
        s = self.streams.get(f.stream)
        rel = (s.phase + slot * s.period) if s else 0
        q, n = (f.stream, node, slot), (local - rel) // self.H
        if self.quota.get(q) == n:
            return None
        self.quota[q] = n
        return action, slot

    def _discard(self, t: int, f: _Frame, node: str, reason: str) -> None:
        self._log(t, "discard", f, node, reason)
        if f.record is not None:
            f.record.discarded_at = node
            f.record.reason = reason
            if f.kind == "iso" and f.pcp != 7:
                f.record.window_misses += 1
        self._inflight.pop(f.uid, None)


def run(network: NetworkGraph, schedule: Schedule, streams: Iterable[Stream],
        delay_models: Mapping | None = None, horizon: int = 1, seed: int = 0, **kw) -> SimTrace:
    """Simulate ``horizon`` hypercycles of releases."""
    return Simulator(network, schedule, streams, delay_models, seed=seed, **kw).run(horizon)
