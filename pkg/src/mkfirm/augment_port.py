"""Augmentation of the transmission slots of a single egress port.

Every slot is prolonged so that its frame can still start after the worst
burst of elevated traffic, and slots of higher-priority frames are deferred
so that the original transmission order survives the prolongation.

All windows are integer-ns half-open intervals.  A frame counts as on time
at the downstream bridge if it arrives no later than ``theta + d_max``, so
the forward window is ``[earliest + d_min, theta + d_max + 1)`` and the
elevate window starts right after it.

``earliest`` is the first instant the frame could leave the port.  Prolonged
gate windows stay open when no elevated burst shows up, so a frame queued
behind another one of the same class can leave before its own slot.  Such an
early departure of a higher-priority frame can also hold up a lower-priority
slot scheduled before it; that delay is added to the slot's worst-case start
and the computation repeated until nothing changes.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

from .core import (FrameInstance, GclEntry, Instant, Link, PsfpEntry, Schedule, ScheduleError,
                   Stream, ceil_frac, hypercycle)
from .gates import GateTable
from .token_bucket import TokenBucket
from .weakly_hard import eligible


@dataclass(frozen=True)
class ScheduledTx:
    frame: FrameInstance
    open: Instant
    close: Instant
    pcp: int

    def __post_init__(self) -> None:
        if not self.open < self.close:
            raise ValueError("need open < close")


@dataclass(frozen=True)
class AugmentedTx:
    frame: FrameInstance
    new_open: Instant
    new_close: Instant
    theta: Instant
    pcp: int
    earliest: Instant | None = None


@dataclass
class PortAugmentation:
    txs: list[AugmentedTx]
    gcl: list[GclEntry]
    psfp: list[PsfpEntry]
    deferments: list[int]


def token_catchup(busy: int, rate: int, tb: TokenBucket) -> int:
    """Extra ns to drain tokens accumulated while the port was busy for
    ``busy`` ns: ``busy * r / (R - r)`` rounded up."""
    if tb.r == 0:
        return 0
    return ceil_frac(Fraction(busy) * tb.r / (rate - tb.r))


def elevate_window(frame: FrameInstance, theta: Instant, d_max: int) -> tuple[Instant, Instant] | None:
    start = theta + d_max + 1
    if start >= frame.deadline:
        return None
    return (start, frame.deadline)


def forward_window(new_open: Instant, theta: Instant, d_min: int, d_max: int) -> tuple[Instant, Instant]:
    return (new_open + d_min, theta + d_max + 1)


@dataclass(frozen=True)
class SlotTiming:
    """What is known about one slot when checking who can hold it up."""

    pcp: int
    arrive_min: Instant  # earliest instant the frame can enter the queue
    arrive_max: Instant  # latest such instant
    start: Instant  # scheduled start, where its own gate window opens
    earliest: Instant
    theta: Instant
    ser: int
    talker: bool = False  # enqueued by a talker, which keeps schedule order on ties

    def shifted(self, h: int) -> SlotTiming:
        return SlotTiming(self.pcp, self.arrive_min + h, self.arrive_max + h, self.start + h,
                          self.earliest + h, self.theta + h, self.ser, self.talker)


def surely_ahead(x: SlotTiming, y: SlotTiming) -> bool:
    """``x`` always enters the queue before ``y``."""
    return x.arrive_max < y.arrive_min or (
        x.talker and y.talker and x.arrive_max == y.arrive_min)


def may_delay(x: SlotTiming, y: SlotTiming) -> bool:
    """Whether ``y``, scheduled after ``x`` on the same port, can hold ``x``
    up: by strict priority, by being ahead of it in the same queue, or by
    starting a non-preemptible transmission before ``x``'s window opens."""
    if y.pcp > x.pcp:
        return y.earliest <= x.theta
    if y.pcp == x.pcp:
        return not surely_ahead(x, y)
    return y.earliest < x.start


def blocking_terms(items: Sequence[SlotTiming], rate: int, tb: TokenBucket,
                   hyper: int | None = None) -> list[int]:
    """Extra worst-case delay of each slot caused by frames scheduled after
    it that may leave early.  ``items`` is in port order; with ``hyper`` the
    slots of the next hypercycle are considered too."""
    out = []
    nxt = [y.shifted(hyper) for y in items] if hyper else []
    for i, x in enumerate(items):
        busy = sum(y.ser for y in [*items[i + 1:], *nxt] if may_delay(x, y))
        out.append(overlap_time(busy, rate, tb) if busy else 0)
    return out


def earliest_start(gate: GateTable, ready: Instant, ser: int, start: Instant,
                   ahead: Sequence[tuple[Instant, int]]) -> Instant:
    """First instant the frame can leave: it is in the queue, every frame
    surely ahead of it in the queue has left (``(earliest, ser)`` pairs) and
    its gate stays open for the whole transmission.  Never after ``start``."""
    t = max([ready, *(e + s for e, s in ahead)])
    st = gate.next_start(t, ser)
    return start if st is None else min(st, start)


def overlap_time(busy: int, rate: int, tb: TokenBucket) -> int:
    """``busy`` ns of transmission plus the tokens refilled meanwhile."""
    return busy + token_catchup(busy, rate, tb)


def gate_tables(sched: Schedule, port) -> dict[int, GateTable]:
    return {q: GateTable(sched.gate_intervals(port, q), sched.hypercycle) for q in range(8)}


def _prolong(port: Link, txs, tb, streams, blocking):
    burst = tb.burst_time(port.rate)
    out: list[AugmentedTx] = []
    deferments: list[int] = []
    prev: AugmentedTx | None = None
    prev_ser = 0
    for tx, extra in zip(txs, blocking):
        ser = port.ser(streams[tx.frame.stream].size)
        new_open = tx.open
        theta = None
        if prev is not None:
            if tx.pcp > prev.pcp:
                # would overtake the prolonged lower-priority slot: defer
                new_open = max(new_open, prev.new_close)
            else:
                new_open = max(new_open, prev.new_open + prev_ser)
                theta = prev.new_close + token_catchup(prev_ser, port.rate, tb)
        deferments.append(new_open - tx.open)
        theta = new_open + burst if theta is None else max(theta, new_open + burst)
        theta += extra
        prev = AugmentedTx(tx.frame, new_open, theta + ser, theta, tx.pcp)
        out.append(prev)
        prev_ser = ser
    return out, deferments


def augment_port(port: Link, txs: Sequence[ScheduledTx], tb: TokenBucket,
                 streams: Mapping[str, Stream], max_rounds: int = 100) -> PortAugmentation:
    tb.check(port.rate)
    if any(b.open < a.open for a, b in zip(txs, txs[1:])):
        raise ScheduleError("scheduled transmissions must be sorted by open time")
    H = hypercycle(streams[t.frame.stream] for t in txs) if txs else 1
    sers = [port.ser(streams[t.frame.stream].size) for t in txs]
    blocking = [0] * len(txs)
    for _ in range(max_rounds):
        out, deferments = _prolong(port, txs, tb, streams, blocking)
        sched = Schedule(H)
        for a in out:
            sched.add_gcl(port.port, a.pcp, a.new_open, a.new_close)
        gates = gate_tables(sched, port.port)
        slots: list[SlotTiming] = []
        for a, ser in zip(out, sers):
            rel = a.frame.release
            probe = SlotTiming(a.pcp, rel, rel, a.new_open, 0, a.theta, ser, True)
            ahead = [(y.earliest, y.ser) for y in slots
                     if y.pcp == a.pcp and surely_ahead(y, probe)]
            e = earliest_start(gates[a.pcp], rel, ser, a.new_open, ahead)
            slots.append(SlotTiming(a.pcp, rel, rel, a.new_open, e, a.theta, ser, True))
        earliest = [x.earliest for x in slots]
        nb = blocking_terms(slots, port.rate, tb, H)
        nb = [max(x, y) for x, y in zip(blocking, nb)]
        if nb == blocking:
            break
        blocking = nb
    else:
        raise ScheduleError(f"early-departure blocking on {port.port} does not settle")

    out = [AugmentedTx(a.frame, a.new_open, a.new_close, a.theta, a.pcp, e)
           for a, e in zip(out, earliest)]
    gcl = [GclEntry(port.port, a.pcp, a.new_open, a.new_close) for a in out]
    psfp: list[PsfpEntry] = []
    for a in out:
        stream = streams[a.frame.stream]
        dmin, dmax = port.dmin(stream.size), port.dmax(stream.size)
        fs, fe = forward_window(a.earliest, a.theta, dmin, dmax)
        psfp.append(PsfpEntry(port.dst, stream.id, fs, fe, "forward", a.frame.index))
        if eligible(stream.mu, a.frame.index):
            if a.frame.release < fs:
                # elevated upstream, the frame may show up ahead of schedule
                psfp.append(PsfpEntry(port.dst, stream.id, a.frame.release, fs, "elevate",
                                      a.frame.index))
            win = elevate_window(a.frame, a.theta, dmax)
            if win:
                psfp.append(PsfpEntry(port.dst, stream.id, *win, "elevate", a.frame.index))
    return PortAugmentation(out, gcl, psfp, deferments)
