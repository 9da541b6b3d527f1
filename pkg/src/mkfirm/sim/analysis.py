"""Per-stream statistics and (m,k)-firm verdicts from a simulation trace."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable, Mapping

from ..core import Stream
from ..weakly_hard import DeliveryTrace, MkRequirement, MkVerdict, check_mk
from .engine import SimTrace

TRACE_COLUMNS = ("time_ns", "event", "stream", "frame_index", "node", "pcp", "detail")


@dataclass(frozen=True)
class StreamStats:
    stream: str
    released: int
    delivered: int
    met: int
    discarded: int
    elevated: int
    window_misses: int
    max_latency: int | None
    min_latency: int | None
    max_jitter: int
    verdict: MkVerdict | None

    @property
    def misses(self) -> int:
        return self.released - self.met


def default_requirement(stream: Stream) -> MkRequirement | None:
    """The guarantee implied by the stream's mu-pattern: at least as many
    frames per ``k`` as there are eligible ones."""
    if stream.mu.m == 0:
        return None
    return MkRequirement(stream.mu.m, stream.mu.k)


def analyze(trace: SimTrace, streams: Iterable[Stream],
            requirements: Mapping[str, MkRequirement | None] | None = None) -> dict[str, StreamStats]:
    out = {}
    for s in streams:
        recs = trace.records.get(s.id, [])
        if requirements is not None and s.id in requirements:
            req = requirements[s.id]
        else:
            req = default_requirement(s)
        met = [r.met(s.latency) for r in recs]
        lats = [r.latency for r in recs if r.arrival is not None]
        verdict = check_mk(DeliveryTrace(s.id, tuple(met)), req) if req and recs else None
        out[s.id] = StreamStats(
            stream=s.id,
            released=len(recs),
            delivered=len(lats),
            met=sum(met),
            discarded=sum(r.discarded_at is not None for r in recs),
            elevated=sum(r.elevated for r in recs),
            window_misses=sum(r.window_misses for r in recs),
            max_latency=max(lats) if lats else None,
            min_latency=min(lats) if lats else None,
            max_jitter=(max(lats) - min(lats)) if lats else 0,
            verdict=verdict,
        )
    return out


def masquerade_events(trace: SimTrace, stream: Stream) -> list[int]:
    """Indices of frames discarded right after a predecessor whose latency
    exceeded the period, i.e. the late frame took their place."""
    recs = trace.records.get(stream.id, [])
    hits = []
    for prev, cur in zip(recs, recs[1:]):
        late = prev.arrival is not None and prev.arrival - prev.release > stream.period
        late = late or (prev.wireless_delay > stream.period)
        if late and cur.discarded_at is not None and cur.wireless_delay < stream.period:
            hits.append(cur.index)
    return hits


def write_trace_csv(trace: SimTrace, fh: io.TextIOBase) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for e in trace.events:
        w.writerow(e)
