"""Shared domain types and exact integer time arithmetic.

All instants and durations are signed integer nanoseconds.  Link rates are
integer bits per second; token rates are :class:`fractions.Fraction` bits
per second so that burst/drain computations stay exact until the final
conservative rounding to whole nanoseconds.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator

NS_PER_S = 1_000_000_000
INT64_MAX = 2**63 - 1

Instant = int
Dur = int
Port = tuple[str, str]

VERTEX_KINDS = ("bridge", "end-device", "ds-tt", "nw-tt")
LINK_KINDS = ("wired", "wireless")

_UNITS = {"ns": 1, "us": 1_000, "µs": 1_000, "ms": 1_000_000, "s": NS_PER_S}
_DUR_RE = re.compile(r"^\s*(-?\d+(?:\.\d+)?)\s*(ns|us|µs|ms|s)?\s*$")


class ScheduleError(Exception):
    """Raised for malformed schedules or inconsistent inputs."""


def parse_duration(value: str | int) -> Dur:
    """Parse ``"200us"``, ``"9.98ms"`` or a bare integer (ns) into ns.

    Fractional values must resolve to a whole number of nanoseconds.
    """
    if isinstance(value, bool):
        raise ValueError(f"not a duration: {value!r}")
    if isinstance(value, int):
        return value
    m = _DUR_RE.match(str(value))
    if not m:
        raise ValueError(f"not a duration: {value!r}")
    amount = Fraction(m.group(1)) * _UNITS[m.group(2) or "ns"]
    if amount.denominator != 1:
        raise ValueError(f"duration {value!r} is not a whole number of ns")
    return int(amount)


def format_duration(ns: Dur) -> str:
    for unit, scale in (("s", NS_PER_S), ("ms", 1_000_000), ("us", 1_000)):
        if ns and ns % scale == 0:
            return f"{ns // scale}{unit}"
    return f"{ns}ns"


def ceil_div(a: int, b: int) -> int:
    return -((-a) // b)


def ceil_frac(x: Fraction | int) -> int:
    return math.ceil(x)


def floor_frac(x: Fraction | int) -> int:
    return math.floor(x)


def serialization(size_bits: int, rate_bps: int) -> Dur:
    """Transmission time of ``size_bits`` at ``rate_bps``, rounded up."""
    return ceil_div(size_bits * NS_PER_S, rate_bps)


def drain_time(bits: int | Fraction, rate_bps: int, token_rate: Fraction) -> Dur:
    """Upper bound (ns) on the time to drain ``bits`` while tokens refill.

    This is ``bits / (R - r)`` converted to ns and rounded up.
    """
    spare = Fraction(rate_bps) - Fraction(token_rate)
    if spare <= 0:
        raise ScheduleError("elevated traffic saturates link")
    return ceil_frac(Fraction(bits) * NS_PER_S / spare)


# ---------------------------------------------------------------- network


@dataclass(frozen=True)
class Link:
    """Directed link ``src -> dst``.

    For wired links only the non-serialization delay components are stored;
    per-frame bounds are ``serialization + prop_delay + proc_delay``.  For
    wireless links ``d_min``/``d_max`` are the configured percentile bounds
    of the whole port-to-port delay.
    """

    src: str
    dst: str
    rate: int
    kind: str = "wired"
    prop_delay: Dur = 0
    proc_delay: Dur = 0
    d_min: Dur | None = None
    d_max: Dur | None = None

    def __post_init__(self) -> None:
        if self.kind not in LINK_KINDS:
            raise ValueError(f"unknown link kind {self.kind!r}")
        if self.rate <= 0:
            raise ValueError("link rate must be positive")
        if self.kind == "wireless":
            if self.d_min is None or self.d_max is None:
                raise ValueError("wireless links need d_min and d_max")
            if not 0 <= self.d_min <= self.d_max:
                raise ValueError("need 0 <= d_min <= d_max")
        elif self.prop_delay < 0 or self.proc_delay < 0:
            raise ValueError("negative delay component")

    @property
    def port(self) -> Port:
        return (self.src, self.dst)

    def ser(self, size_bits: int) -> Dur:
        return serialization(size_bits, self.rate)

    def dmin(self, size_bits: int) -> Dur:
        if self.kind == "wireless":
            return max(self.d_min, self.ser(size_bits))
        return self.ser(size_bits) + self.prop_delay + self.proc_delay

    def dmax(self, size_bits: int) -> Dur:
        if self.kind == "wireless":
            return max(self.d_max, self.ser(size_bits))
        return self.ser(size_bits) + self.prop_delay + self.proc_delay


@dataclass
class NetworkGraph:
    vertices: dict[str, str] = field(default_factory=dict)
    links: dict[Port, Link] = field(default_factory=dict)

    def add_vertex(self, vid: str, kind: str = "bridge") -> None:
        if kind not in VERTEX_KINDS:
            raise ValueError(f"unknown vertex kind {kind!r}")
        self.vertices[vid] = kind

    def add_link(self, link: Link) -> None:
        for v in (link.src, link.dst):
            if v not in self.vertices:
                raise ValueError(f"unknown vertex {v!r}")
        self.links[link.port] = link

    def add_duplex(self, u: str, v: str, rate: int, **kw) -> None:
        self.add_link(Link(u, v, rate, **kw))
        self.add_link(Link(v, u, rate, **kw))

    def link(self, u: str, v: str) -> Link:
        try:
            return self.links[(u, v)]
        except KeyError:
            raise ScheduleError(f"no link {u}->{v}") from None

    def neighbors(self, u: str) -> list[str]:
        return sorted(v for (a, v) in self.links if a == u)

    def is_bridge(self, v: str) -> bool:
        return self.vertices.get(v) not in (None, "end-device")

    def check_route(self, route: Iterable[str]) -> None:
        route = list(route)
        if len(route) < 2:
            raise ScheduleError("route needs at least two vertices")
        if len(set(route)) != len(route):
            raise ScheduleError(f"route is not simple: {route}")
        for u, v in zip(route, route[1:]):
            self.link(u, v)


# ------------------------------------------------------------------ streams


@dataclass(frozen=True)
class MuPattern:
    """k-bit elevation pattern; bit ``i mod k`` marks frame ``i`` eligible."""

    bits: tuple[int, ...]

    def __post_init__(self) -> None:
        if not self.bits:
            raise ValueError("mu-pattern needs k >= 1")
        if any(b not in (0, 1) for b in self.bits):
            raise ValueError("mu-pattern bits must be 0 or 1")

    @classmethod
    def parse(cls, text: str | MuPattern) -> MuPattern:
        if isinstance(text, MuPattern):
            return text
        text = str(text).strip()
        if not text or set(text) - {"0", "1"}:
            raise ValueError(f"invalid mu-pattern {text!r}")
        return cls(tuple(int(c) for c in text))

    @property
    def k(self) -> int:
        return len(self.bits)

    @property
    def m(self) -> int:
        return sum(self.bits)

    def __getitem__(self, i: int) -> int:
        return self.bits[i % len(self.bits)]

    def __str__(self) -> str:
        return "".join(map(str, self.bits))


NEVER = MuPattern((0,))


@dataclass(frozen=True)
class FrameInstance:
    stream: str
    index: int
    release: Instant
    deadline: Instant


@dataclass(frozen=True)
class Stream:
    id: str
    route: tuple[str, ...]
    pcp: int
    period: Dur
    size: int
    latency: Dur
    phase: Dur = 0
    mu: MuPattern = NEVER

    def __post_init__(self) -> None:
        object.__setattr__(self, "route", tuple(self.route))
        object.__setattr__(self, "mu", MuPattern.parse(self.mu))
        if not 0 <= self.pcp <= 7:
            raise ValueError(f"{self.id}: pcp out of range")
        if self.period <= 0 or self.size <= 0:
            raise ValueError(f"{self.id}: period and size must be positive")
        if not 0 <= self.phase < self.period:
            raise ValueError(f"{self.id}: need 0 <= phase < period")
        if not 0 < self.latency <= self.period:
            raise ValueError(f"{self.id}: need 0 < latency <= period")
        if len(self.route) < 2:
            raise ValueError(f"{self.id}: route too short")

    @property
    def hops(self) -> list[Port]:
        return list(zip(self.route, self.route[1:]))

    def frame(self, i: int) -> FrameInstance:
        rel = frame_release(self, i)
        return FrameInstance(self.id, i, rel, rel + self.latency)

    def frames(self, horizon: Dur) -> Iterator[FrameInstance]:
        """Frames released in ``[0, horizon)``."""
        i = 0
        while frame_release(self, i) < horizon:
            yield self.frame(i)
            i += 1


@dataclass(frozen=True)
class SporadicStream:
    """Stream released at unknown times at least ``min_inter_event`` apart."""

    id: str
    route: tuple[str, ...]
    size: int
    min_inter_event: Dur
    pcp: int = 7
    latency: Dur | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "route", tuple(self.route))
        if self.min_inter_event <= 0:
            raise ValueError(f"{self.id}: min_inter_event must be positive")

    @property
    def hops(self) -> list[Port]:
        return list(zip(self.route, self.route[1:]))


def hypercycle(streams: Iterable[Stream]) -> Dur:
    """Repetition interval of a schedule: lcm of ``k * period`` per stream.

    The pattern length ``k`` is part of the product so that every frame slot
    of the schedule has a fixed eligibility bit; with ``k == 1`` this is the
    plain lcm of the periods.
    """
    periods = [s.period * s.mu.k for s in streams]
    if not periods:
        raise ValueError("hypercycle of an empty stream set")
    return lcm_checked(periods)


def lcm_checked(values: Iterable[int]) -> int:
    h = 1
    for p in values:
        if p <= 0:
            raise ValueError("periods must be positive")
        h = math.lcm(h, p)
        if h > INT64_MAX:
            raise OverflowError("hypercycle overflow")
    return h


def frame_release(stream: Stream, i: int) -> Instant:
    if i < 0:
        raise ValueError("frame index must be >= 0")
    return stream.phase + i * stream.period


def meets_deadline(frame: FrameInstance, arrival: Instant, latency: Dur | None = None) -> bool:
    deadline = frame.deadline if latency is None else frame.release + latency
    return arrival < deadline


# ----------------------------------------------------------------- schedule


@dataclass(frozen=True)
class GclEntry:
    port: Port
    queue: int
    start: Instant
    end: Instant


@dataclass(frozen=True)
class PsfpEntry:
    bridge: str
    stream: str
    start: Instant
    end: Instant
    action: str  # "forward" | "elevate"
    slot: int = 0  # frame index within the hypercycle; windows of one slot share a quota


OpKey = tuple[str, int, int]  # (stream id, frame index, hop index starting at 1)


def split_mod(start: Instant, end: Instant, h: Dur) -> list[tuple[Instant, Instant]]:
    """Map ``[start, end)`` onto ``[0, h)``, splitting at the wrap point."""
    if end - start >= h:
        return [(0, h)]
    s = start % h
    e = s + (end - start)
    if e <= h:
        return [(s, e)]
    return [(s, h), (0, e - h)]


@dataclass
class Schedule:
    """GCL and PSFP configuration valid modulo ``hypercycle``.

    ``starts`` holds the scheduled transmission start of each frame-hop,
    ``latest`` its worst-case start and ``earliest`` the first instant the
    frame could possibly leave (all equal for a primary schedule).  Times are
    absolute, for the frames of the first hypercycle.
    """

    hypercycle: Dur
    gcl: dict[Port, list[GclEntry]] = field(default_factory=dict)
    psfp: dict[str, list[PsfpEntry]] = field(default_factory=dict)
    starts: dict[OpKey, Instant] = field(default_factory=dict)
    latest: dict[OpKey, Instant] = field(default_factory=dict)
    earliest: dict[OpKey, Instant] = field(default_factory=dict)

    def add_gcl(self, port: Port, queue: int, start: Instant, end: Instant) -> None:
        if not start < end:
            raise ScheduleError(f"empty GCL window on {port}: [{start}, {end})")
        for s, e in split_mod(start, end, self.hypercycle):
            self.gcl.setdefault(port, []).append(GclEntry(port, queue, s, e))

    def add_psfp(self, bridge: str, stream: str, start: Instant, end: Instant,
                 action: str, slot: int = 0) -> None:
        if action not in ("forward", "elevate"):
            raise ValueError(f"unknown PSFP action {action!r}")
        if not start < end:
            return
        for s, e in split_mod(start, end, self.hypercycle):
            self.psfp.setdefault(bridge, []).append(PsfpEntry(bridge, stream, s, e, action, slot))

    def gate_intervals(self, port: Port, queue: int) -> list[tuple[Instant, Instant]]:
        """Merged open intervals of one queue gate within ``[0, H)``."""
        spans = sorted((g.start, g.end) for g in self.gcl.get(port, []) if g.queue == queue)
        merged: list[list[int]] = []
        for s, e in spans:
            if merged and s <= merged[-1][1]:
                merged[-1][1] = max(merged[-1][1], e)
            else:
                merged.append([s, e])
        return [(s, e) for s, e in merged]

    def psfp_for(self, bridge: str, stream: str) -> list[PsfpEntry]:
        return sorted((p for p in self.psfp.get(bridge, []) if p.stream == stream),
                      key=lambda p: p.start)

    def validate(self) -> None:
        """Reject overlapping PSFP windows of one (bridge, stream)."""
        for bridge, entries in self.psfp.items():
            by_stream: dict[str, list[PsfpEntry]] = {}
            for p in entries:
                by_stream.setdefault(p.stream, []).append(p)
            for sid, ps in by_stream.items():
                ps.sort(key=lambda p: p.start)
                for a, b in zip(ps, ps[1:]):
                    if b.start < a.end:
                        raise ScheduleError(
                            f"overlapping PSFP windows for {sid} at {bridge}: "
                            f"[{a.start},{a.end}) and [{b.start},{b.end})")
        for port, entries in self.gcl.items():
            for g in entries:
                if not 0 <= g.start < g.end <= self.hypercycle:
                    raise ScheduleError(f"GCL window outside hypercycle on {port}")
