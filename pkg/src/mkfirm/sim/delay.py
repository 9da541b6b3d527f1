"""Per-hop delay models: fixed, histogram driven and epochal.

An epochal model behaves like its stable model except during unstable
bursts, which start every ``unstable_interval`` and hit the next
``burst_len`` frames of a (link, stream) pair with a delay drawn uniformly
from ``unstable_range``.
"""

from __future__ import annotations

import csv
from bisect import bisect_right
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from ..core import Dur, parse_duration


@dataclass(frozen=True)
class EpochSchedule:
    stable_bound: Dur
    unstable_interval: Dur
    burst_len: int
    unstable_range: tuple[Dur, Dur]
    first_epoch: Dur = 0

    def __post_init__(self) -> None:
        lo, hi = self.unstable_range
        if not self.stable_bound <= lo <= hi:
            raise ValueError("need stable_bound <= unstable lo <= hi")
        if self.unstable_interval <= 0 or self.burst_len < 0:
            raise ValueError("bad epoch schedule")


@dataclass(frozen=True)
class DelayModel:
    kind: str  # "deterministic" | "histogram" | "epochal"
    value: Dur = 0
    edges: tuple[Dur, ...] = ()  # bin edges, len(probs) + 1
    probs: tuple[float, ...] = ()
    stable: DelayModel | None = None
    epochs: EpochSchedule | None = None
    _cdf: tuple[float, ...] = field(default=(), repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.kind == "histogram":
            if len(self.edges) != len(self.probs) + 1 or not self.probs:
                raise ValueError("histogram needs one more edge than bins")
            if any(b < a for a, b in zip(self.edges, self.edges[1:])):
                raise ValueError("histogram edges must be non-decreasing")
            total = sum(self.probs)
            if abs(total - 1.0) > 1e-9 or min(self.probs) < 0:
                raise ValueError(f"histogram probabilities sum to {total}, expected 1")
            cdf = np.cumsum(np.asarray(self.probs, dtype=float) / total)
            cdf[-1] = 1.0
            object.__setattr__(self, "_cdf", tuple(cdf.tolist()))
        elif self.kind == "epochal":
            if self.stable is None or self.epochs is None:
                raise ValueError("epochal model needs a stable model and an epoch schedule")
        elif self.kind != "deterministic":
            raise ValueError(f"unknown delay model {self.kind!r}")

    @classmethod
    def deterministic(cls, d: Dur) -> DelayModel:
        return cls("deterministic", value=d)

    @classmethod
    def histogram(cls, bins: list[tuple[Dur, float]], upper: Dur) -> DelayModel:
        return cls("histogram", edges=tuple(b for b, _ in bins) + (upper,),
                   probs=tuple(p for _, p in bins))

    @classmethod
    def epochal(cls, stable: DelayModel, epochs: EpochSchedule) -> DelayModel:
        return cls("epochal", stable=stable, epochs=epochs)

    @property
    def lower(self) -> Dur:
        if self.kind == "deterministic":
            return self.value
        if self.kind == "histogram":
            return self.edges[0]
        return self.stable.lower

    def cdf(self, d: float) -> float:
        if self.kind == "deterministic":
            return float(d >= self.value)
        if self.kind == "epochal":
            return self.stable.cdf(min(d, self.epochs.stable_bound))
        if d <= self.edges[0]:
            return 0.0
        if d >= self.edges[-1]:
            return 1.0
        i = bisect_right(self.edges, d) - 1
        lo_c = self._cdf[i - 1] if i else 0.0
        width = self.edges[i + 1] - self.edges[i]
        return lo_c + (self._cdf[i] - lo_c) * (d - self.edges[i]) / width

    def quantile(self, p: float) -> Dur:
        if not 0.0 <= p <= 1.0:
            raise ValueError("quantile level outside [0, 1]")
        if self.kind == "deterministic":
            return self.value
        if self.kind == "epochal":
            return min(self.stable.quantile(p), self.epochs.stable_bound)
        for j, c in enumerate(self._cdf):
            if abs(c - p) < 1e-12 and (j + 1 == len(self._cdf) or self.probs[j + 1] > 0):
                return self.edges[j + 1]
        i = bisect_right(self._cdf, p) if p < 1.0 else len(self.probs) - 1
        i = min(i, len(self.probs) - 1)
        while i > 0 and self.probs[i] == 0.0:
            i -= 1
        lo_c = self._cdf[i - 1] if i else 0.0
        frac = (p - lo_c) / self.probs[i] if self.probs[i] else 0.0
        frac = min(max(frac, 0.0), 1.0)
        return int(round(self.edges[i] + frac * (self.edges[i + 1] - self.edges[i])))


def _sample_hist(model: DelayModel, u: float) -> Dur:
    i = min(bisect_right(model._cdf, u), len(model.probs) - 1)
    lo_c = model._cdf[i - 1] if i else 0.0
    p = model.probs[i]
    frac = (u - lo_c) / p if p else 0.0
    lo, hi = model.edges[i], model.edges[i + 1]
    return min(int(lo + frac * (hi - lo)), max(hi - 1, lo))


class DelaySampler:
    """Stateful sampler for one (link, stream) pair."""

    def __init__(self, model: DelayModel, rng: np.random.Generator):
        self.model = model
        self.rng = rng
        self.remaining = 0
        ep = model.epochs
        self.next_epoch = ep.first_epoch if ep else None

    def sample(self, t: int) -> Dur:
        m = self.model
        if m.kind == "deterministic":
            return m.value
        if m.kind == "histogram":
            return _sample_hist(m, self.rng.random())
        ep = m.epochs
        while t >= self.next_epoch:
            self.remaining = ep.burst_len
            self.next_epoch += ep.unstable_interval
        if self.remaining > 0:
            self.remaining -= 1
            lo, hi = ep.unstable_range
            return int(self.rng.integers(lo, hi + 1))
        return sample_stable(m, self.rng)


def sample_stable(model: DelayModel, rng: np.random.Generator) -> Dur:
    stable = model.stable
    if stable.kind != "histogram":
        return sample_delay(stable, rng)
    top = stable.cdf(model.epochs.stable_bound)
    return min(_sample_hist(stable, rng.random() * top), model.epochs.stable_bound)


def sample_delay(model: DelayModel, rng: np.random.Generator, t: int = 0) -> Dur:
    """One-off sample; epochal models use a fresh epoch state at time ``t``."""
    return DelaySampler(model, rng).sample(t)


def synthetic_long_tail(lower: Dur, q90: Dur, q99: Dur, upper: Dur,
                        bins: int = 12) -> list[tuple[Dur, float]]:
    """Long-tailed histogram with 90 % of the mass below ``q90`` and 99 %
    below ``q99``.  Mass rises then falls inside the body and decays
    geometrically inside both tail segments."""
    def segment(a, b, mass, weights):
        w = np.asarray(weights, dtype=float)
        w = w / w.sum() * mass
        edges = np.linspace(a, b, len(w) + 1).round().astype(int)
        return [(int(e), float(x)) for e, x in zip(edges[:-1], w)]

    body = np.sin(np.linspace(0.15, np.pi - 0.6, bins)) + 0.05
    tail = 0.7 ** np.arange(bins)
    out = segment(lower, q90, 0.90, body) + segment(q90, q99, 0.09, tail) + \
        segment(q99, upper, 0.01, tail)
    return [(e, round(p, 15)) for e, p in out]


def load_histogram(path: str | Path) -> DelayModel:
    """Read ``bin_lower_ns,probability`` rows; the final row with probability
    0 gives the upper edge."""
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].startswith("#") or row[0].strip() == "bin_lower_ns":
                continue
            rows.append((parse_duration(row[0]), float(row[1])))
    if len(rows) < 2 or rows[-1][1] != 0.0:
        raise ValueError(f"{path}: last row must carry the upper edge with probability 0")
    return DelayModel.histogram(rows[:-1], rows[-1][0])


def builtin_histogram(name: str) -> DelayModel:
    """``"uplink"`` or ``"downlink"`` synthetic 5G delay histogram."""
    ref = resources.files("mkfirm.data") / f"5g_{name}.csv"
    with resources.as_file(ref) as p:
        return load_histogram(p)
