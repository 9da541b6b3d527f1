"""mu-pattern semantics and (m,k)-firm verdicts."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .core import Instant, MuPattern, Stream, ceil_div


@dataclass(frozen=True)
class MkRequirement:
    m: int
    k: int

    def __post_init__(self) -> None:
        if not 1 <= self.m <= self.k:
            raise ValueError("need 1 <= m <= k")


@dataclass(frozen=True)
class DeliveryTrace:
    """Per-frame outcomes of one stream, indexed from frame 0."""

    stream: str
    met: tuple[bool, ...]


@dataclass(frozen=True)
class MkVerdict:
    passed: bool
    window: int | None = None  # index of the first violating window

    def __bool__(self) -> bool:
        return self.passed


def eligible(mu: MuPattern, i: int) -> bool:
    if i < 0:
        raise ValueError("frame index must be >= 0")
    return mu[i] == 1


def elevation_index_range(stream: Stream, t1: Instant, t2: Instant) -> tuple[int, int]:
    """Indices ``[lo, hi]`` of frames whose window ``[release, release + L]``
    intersects ``[t1, t2]``.  ``lo`` is clamped at 0; ``hi < lo`` means none.
    """
    T, L, phi = stream.period, stream.latency, stream.phase
    lo = max(ceil_div(t1 - phi - L, T), 0)
    hi = (t2 - phi) // T
    return lo, hi


def count_elevatable(stream: Stream, t1: Instant, t2: Instant) -> int:
    """Number of elevation-eligible frames of ``stream`` that can arrive in
    ``[t1, t2]`` (both ends closed)."""
    if t1 > t2:
        raise ValueError("need t1 <= t2")
    mu = stream.mu
    if mu.m == 0:
        return 0
    lo, hi = elevation_index_range(stream, t1, t2)
    if hi < lo:
        return 0
    n = hi - lo + 1
    full, rest = divmod(n, mu.k)
    total = full * mu.m
    for i in range(lo, lo + rest):
        total += mu[i]
    return total


def check_mk(trace: DeliveryTrace | Sequence[bool], req: MkRequirement) -> MkVerdict:
    met = trace.met if isinstance(trace, DeliveryTrace) else tuple(trace)
    if not met:
        raise ValueError("empty delivery trace")
    k, m = req.k, req.m
    if len(met) < k:
        return MkVerdict(True)
    ok = sum(met[:k])
    if ok < m:
        return MkVerdict(False, 0)
    for w in range(1, len(met) - k + 1):
        ok += met[w + k - 1] - met[w - 1]
        if ok < m:
            return MkVerdict(False, w)
    return MkVerdict(True)


def mu_satisfies(mu: MuPattern, req: MkRequirement) -> bool:
    """True iff every k consecutive frames contain at least m eligible ones.

    Frame indices wrap the pattern cyclically, so every alignment of the
    window over the repeated pattern is checked.
    """
    if mu.k != req.k:
        raise ValueError(f"pattern length {mu.k} != k={req.k}")
    bits = mu.bits * 2
    return all(sum(bits[s:s + req.k]) >= req.m for s in range(req.k))


def popcount_satisfies(mu: MuPattern, req: MkRequirement) -> bool:
    if mu.k != req.k:
        raise ValueError(f"pattern length {mu.k} != k={req.k}")
    return mu.m >= req.m
