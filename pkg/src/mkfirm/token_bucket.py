"""Token-bucket bounds on elevated traffic per link.

The count of elevatable frames of a stream in ``[t1, t2]`` is a step
function whose breakpoints are frame releases (counts rise) and frame
deadlines (counts fall just after).  Maxima over continuous time are
therefore attained at those instants, which is what the functions below
evaluate.  The pattern horizon ``lcm(H, k_F * T_F)`` is used instead of the
plain hypercycle because a mu-pattern of length k repeats only every k
periods.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .core import (NS_PER_S, Dur, NetworkGraph, Port, ScheduleError, SporadicStream,
                   Stream, ceil_frac, drain_time, lcm_checked)
from .weakly_hard import count_elevatable


@dataclass(frozen=True)
class TokenBucket:
    link: Port
    b: int
    r: Fraction = Fraction(0)

    def __post_init__(self) -> None:
        if self.b < 0 or self.r < 0:
            raise ValueError("token bucket parameters must be non-negative")
        object.__setattr__(self, "r", Fraction(self.r))

    def __add__(self, other: TokenBucket) -> TokenBucket:
        return TokenBucket(self.link, self.b + other.b, self.r + other.r)

    def check(self, rate: int) -> None:
        if self.r >= rate:
            raise ScheduleError(f"elevated traffic saturates link {self.link}")

    def burst_time(self, rate: int) -> Dur:
        """``b / (R - r)`` in ns, rounded up."""
        if self.b == 0:
            self.check(rate)
            return 0
        return drain_time(self.b, rate, self.r)

    def conforms(self, arrivals: Sequence[tuple[int, int]]) -> bool:
        """Check ``(time_ns, bits)`` arrivals against ``b + r * dt`` exactly."""
        tokens = Fraction(self.b)
        last = None
        for t, bits in sorted(arrivals):
            if last is not None:
                tokens = min(Fraction(self.b), tokens + self.r * Fraction(t - last, NS_PER_S))
            last = t
            if bits > tokens:
                return False
            tokens -= bits
        return True


@dataclass(frozen=True)
class SporadicSpec:
    stream: str
    size: int
    min_inter_event: Dur

    def __post_init__(self) -> None:
        if self.min_inter_event <= 0:
            raise ValueError("min_inter_event must be positive")


def pattern_horizon(streams: Iterable[Stream]) -> Dur:
    streams = list(streams)
    if not streams:
        return 1
    return lcm_checked([s.period * s.mu.k for s in streams] + [s.period for s in streams])


def elevation_windows(streams: Iterable[Stream], horizon: Dur) -> list[tuple[int, int, int]]:
    """``(release, deadline, size)`` of every eligible frame released before
    ``horizon``."""
    out = []
    for s in streams:
        if s.mu.m == 0:
            continue
        i = 0
        while (rel := s.phase + i * s.period) < horizon:
            if s.mu[i]:
                out.append((rel, rel + s.latency, s.size))
            i += 1
    return out


def bucket_size(streams: Iterable[Stream]) -> int:
    """Largest total size of eligible frames whose windows share an instant."""
    streams = [s for s in streams if s.mu.m]
    if not streams:
        return 0
    span = 2 * pattern_horizon(streams)
    candidates = sorted({rel for rel, _, _ in elevation_windows(streams, span)})
    best = 0
    for t in candidates:
        best = max(best, sum(s.size * count_elevatable(s, t, t) for s in streams))
    return best


def _max_ratio(num: np.ndarray, den: np.ndarray) -> Fraction:
    valid = den > 0
    if not valid.any():
        return Fraction(0)
    ratio = np.where(valid, num / np.where(valid, den, 1), -np.inf)
    top = ratio.max()
    if top <= 0:
        return Fraction(0)
    near = np.argwhere(ratio >= top * (1 - 1e-9))
    return max(Fraction(int(num[i, j]), int(den[i, j])) for i, j in near)


def token_rate(streams: Iterable[Stream], b: int, link_rate: int | None = None,
               link: Port | None = None) -> Fraction:
    """Smallest rate (bits/s) such that ``b + r * (t2 - t1)`` covers every
    interval, including intervals that start after earlier hypercycles.

    With ``H*`` the pattern horizon, the count over ``[t1, t2 + H*]`` is the
    count over ``[t1, t2]`` plus the bits ``M`` released per ``H*``, so longer
    intervals are mediants of a shorter one and ``M / H*``.  It is enough to
    take ``t1`` in ``[H*, 2H*)`` (a full horizon of history before it),
    ``t2`` up to ``t1 + H*``, and the long-run rate ``M / H*``.
    """
    streams = [s for s in streams if s.mu.m]
    if not streams:
        return Fraction(0)
    hs = pattern_horizon(streams)
    wins = elevation_windows(streams, 3 * hs + 1)
    rel = np.array([w[0] for w in wins], dtype=np.int64)
    dl = np.array([w[1] for w in wins], dtype=np.int64)
    size = np.array([w[2] for w in wins], dtype=np.int64)

    order_r = np.argsort(rel, kind="stable")
    rel_sorted, cum_rel = rel[order_r], np.cumsum(size[order_r])
    order_d = np.argsort(dl, kind="stable")
    dl_sorted, cum_dl = dl[order_d], np.cumsum(size[order_d])

    t1 = np.unique(dl[(dl >= hs) & (dl < 2 * hs)])
    t2 = np.unique(rel[(rel > hs) & (rel <= 3 * hs)])
    # bits of frames released at or before t2
    released = cum_rel[np.searchsorted(rel_sorted, t2, side="right") - 1]
    # bits of frames whose window closed strictly before t1
    idx = np.searchsorted(dl_sorted, t1, side="left") - 1
    expired = np.where(idx >= 0, cum_dl[np.maximum(idx, 0)], 0)

    best = Fraction(int(size[rel < hs].sum()), hs)
    chunk = max(1, 2_000_000 // max(len(t2), 1))
    for lo in range(0, len(t1), chunk):
        a = t1[lo:lo + chunk]
        num = released[None, :] - expired[lo:lo + chunk, None] - b
        den = t2[None, :] - a[:, None]
        den = np.where(den <= hs, den, 0)
        best = max(best, _max_ratio(num, den))
    r = best * NS_PER_S
    if link_rate is not None and r >= link_rate:
        raise ScheduleError(f"elevated traffic saturates link {link}")
    return r


def elevated_bucket(link: Port, streams: Iterable[Stream], link_rate: int | None = None) -> TokenBucket:
    streams = list(streams)
    b = bucket_size(streams)
    return TokenBucket(link, b, token_rate(streams, b, link_rate, link))


def sporadic_bucket(link: Port, sporadics: Iterable[SporadicSpec], link_rate: int | None = None,
                    jitter: dict[str, Dur] | None = None) -> TokenBucket:
    """Arrival curve of sporadic streams.  ``jitter`` adds ``r_i * J_i`` burst
    per stream for delay variation accumulated upstream of the link."""
    b, r = 0, Fraction(0)
    for sp in sporadics:
        rate = Fraction(sp.size * NS_PER_S, sp.min_inter_event)
        extra = ceil_frac(rate * Fraction((jitter or {}).get(sp.stream, 0), NS_PER_S))
        b += sp.size + extra
        r += rate
    if link_rate is not None and r >= link_rate:
        raise ScheduleError(f"elevated traffic saturates link {link}")
    return TokenBucket(link, b, r)


def link_buckets(network: NetworkGraph, streams: Iterable[Stream],
                 sporadics: Iterable[SporadicStream] = (), max_iter: int = 50) -> dict[Port, TokenBucket]:
    """Token bucket for every link carrying elevated or sporadic traffic.

    Sporadic streams are not policed per hop, so their burst grows with the
    worst-case waiting at upstream ports; this is resolved by fixed-point
    iteration over the per-link buckets.
    """
    streams = list(streams)
    sporadics = list(sporadics)
    by_link: dict[Port, list[Stream]] = {}
    for s in streams:
        for hop in s.hops:
            by_link.setdefault(hop, []).append(s)
    base = {}
    for port, ss in by_link.items():
        link = network.link(*port)
        base[port] = elevated_bucket(port, ss, link.rate)

    max_size: dict[Port, int] = {}
    for s in [*streams, *sporadics]:
        for hop in s.hops:
            max_size[hop] = max(max_size.get(hop, 0), s.size)

    jitter: dict[tuple[str, Port], Dur] = {}
    result: dict[Port, TokenBucket] = {}
    for _ in range(max_iter):
        result = dict(base)
        for port in {h for sp in sporadics for h in sp.hops}:
            users = [sp for sp in sporadics if port in sp.hops]
            specs = [SporadicSpec(sp.id, sp.size, sp.min_inter_event) for sp in users]
            jit = {sp.id: jitter.get((sp.id, port), 0) for sp in users}
            tb = sporadic_bucket(port, specs, network.link(*port).rate, jit)
            result[port] = result.get(port, TokenBucket(port, 0)) + tb
        new_jitter = {}
        for sp in sporadics:
            acc = 0
            for hop in sp.hops:
                new_jitter[(sp.id, hop)] = acc
                tb = result[hop]
                link = network.link(*hop)
                acc += drain_time(tb.b + max_size[hop], link.rate, tb.r)
                acc += link.dmax(sp.size) - link.dmin(sp.size)
        if new_jitter == jitter:
            break
        jitter = new_jitter
    for port, tb in result.items():
        tb.check(network.link(*port).rate)
    return result
