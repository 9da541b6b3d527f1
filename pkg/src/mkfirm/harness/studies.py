"""Experiment runners: schedulability under sporadic load on the grid, and
the 5G-TSN simulation with bounded and unbounded wireless degradations."""

from __future__ import annotations

import csv
import io
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

from ..augment_multihop import augment_multihop, verify_latency
from ..core import (NetworkGraph, OpKey, Port, Schedule, ScheduleError, SporadicStream, Stream,
                    drain_time)
from ..sim.analysis import StreamStats, analyze, masquerade_events
from ..sim.delay import DelayModel, EpochSchedule
from ..sim.engine import SimTrace, Simulator
from ..tgraph import TransmissionGraph
from ..token_bucket import TokenBucket, link_buckets
from ..weakly_hard import eligible
from .config import ScenarioConfig
from .scenario import Scenario, generate_5g, generate_grid, guaranteed, wireless_streams
from .scheduler import PrimaryResult, schedule_primary

log = logging.getLogger(__name__)


class VerificationError(ScheduleError):
    """The augmented schedule fails its latency check."""


# ------------------------------------------------------------ per-frame bounds


def _last_hops(graph: TransmissionGraph) -> dict[tuple[str, int], OpKey]:
    last: dict[tuple[str, int], int] = {}
    for sid, idx, hop in graph.nodes:
        last[(sid, idx)] = max(last.get((sid, idx), 0), hop)
    return {k: (k[0], k[1], h) for k, h in last.items()}


def worst_latencies(sched: Schedule, graph: TransmissionGraph) -> dict[str, int]:
    """Per stream, the largest ``latest start + d_max - release`` over the
    last hops of its frames."""
    out: dict[str, int] = {}
    for (sid, _), key in _last_hops(graph).items():
        node = graph.nodes[key]
        link = graph.network.link(*node.port)
        lat = sched.latest[key] + link.dmax(graph.streams[sid].size) - node.frame.release
        out[sid] = max(out.get(sid, lat), lat)
    return out


def prolongations(primary: Schedule, augmented: Schedule, graph: TransmissionGraph) -> dict[str, int]:
    """Per stream, how far augmentation moved the worst-case start of the
    last hop beyond the primary start."""
    out: dict[str, int] = {}
    for (sid, _), key in _last_hops(graph).items():
        d = augmented.latest[key] - primary.starts[key]
        out[sid] = max(out.get(sid, d), d)
    return out


def jitter_bounds(sched: Schedule, graph: TransmissionGraph) -> dict[str, int]:
    """Per stream, worst latency minus best latency the schedule admits: the
    last hop starts somewhere in ``[earliest, latest]``."""
    hi: dict[str, int] = {}
    lo: dict[str, int] = {}
    for (sid, _), key in _last_hops(graph).items():
        node = graph.nodes[key]
        link = graph.network.link(*node.port)
        size = graph.streams[sid].size
        w = sched.latest[key] + link.dmax(size) - node.frame.release
        b = sched.earliest[key] + link.dmin(size) - node.frame.release
        hi[sid] = max(hi.get(sid, w), w)
        lo[sid] = min(lo.get(sid, b), b)
    return {sid: hi[sid] - lo[sid] for sid in hi}


def _max_sizes(streams: Iterable[Stream | SporadicStream]) -> dict[Port, int]:
    out: dict[Port, int] = {}
    for s in streams:
        for hop in s.hops:
            out[hop] = max(out.get(hop, 0), s.size)
    return out


def elevated_hop_bound(network: NetworkGraph, buckets: Mapping[Port, TokenBucket],
                       max_size: Mapping[Port, int], port: Port, size: int) -> int:
    """Worst time a PCP 7 frame spends on ``port``: queueing behind the
    admitted elevated burst and one maximum-size frame, then ``d_max``."""
    link = network.link(*port)
    tb = buckets.get(port) or TokenBucket(port, 0)
    return drain_time(tb.b + max_size.get(port, size), link.rate, tb.r) + link.dmax(size)


def endurable_delays(sc: Scenario, sched: Schedule, graph: TransmissionGraph,
                     buckets: Mapping[Port, TokenBucket]) -> dict[str, int]:
    """Per guaranteed wireless stream, the largest wireless delay every one
    of its eligible frames survives: elevated after the wireless hop, the
    frame still reaches the listener before its deadline."""
    net = sc.network
    sizes = _max_sizes(sc.streams)
    out: dict[str, int] = {}
    for s in guaranteed(wireless_streams(sc)):
        hops = s.hops
        w = next(h for h, p in enumerate(hops, 1) if net.link(*p).kind == "wireless")
        tail = sum(elevated_hop_bound(net, buckets, sizes, p, s.size) for p in hops[w:])
        for (sid, idx, hop), theta in sched.latest.items():
            if sid != s.id or hop != w or not eligible(s.mu, idx):
                continue
            deadline = s.frame(idx).deadline
            d = deadline - 1 - theta - tail
            out[s.id] = min(out.get(s.id, d), d)
    return out


def sporadic_bounds(network: NetworkGraph, buckets: Mapping[Port, TokenBucket],
                    streams: Sequence[Stream], sporadics: Sequence[SporadicStream]) -> dict[str, int]:
    """Worst-case latency of each PCP 7 sporadic stream (reported as data)."""
    sizes = _max_sizes([*streams, *sporadics])
    return {sp.id: sum(elevated_hop_bound(network, buckets, sizes, p, sp.size) for p in sp.hops)
            for sp in sporadics}


# ------------------------------------------------------------- pipeline


@dataclass
class Pipeline:
    scenario: Scenario
    primary: PrimaryResult
    buckets: dict[Port, TokenBucket]
    augmented: Schedule

    @property
    def graph(self) -> TransmissionGraph:
        return self.primary.graph


def build_pipeline(sc: Scenario, sporadics: Sequence[SporadicStream] | None = None,
                   check: bool = True) -> Pipeline:
    """Primary schedule, token buckets and augmentation for a scenario.

    Raises ``InfeasibleSchedule`` if the primary schedule fails and
    ``VerificationError`` if the augmented one does (when ``check``)."""
    spor = sc.sporadics if sporadics is None else list(sporadics)
    primary = schedule_primary(sc.network, sc.streams)
    buckets = link_buckets(sc.network, sc.streams, spor)
    aug = augment_multihop(primary.graph, buckets)
    if check:
        rep = verify_latency(aug, primary.graph, buckets)
        if not rep.passed:
            what = rep.first_failure() or f"wrap conflict on {rep.wrap_conflicts[0]}"
            raise VerificationError(f"augmented schedule fails: {what}")
    return Pipeline(sc, primary, buckets, aug)


# -------------------------------------------------------- schedulability


@dataclass(frozen=True)
class InstanceOutcome:
    seed: int
    n_sporadic: int
    primary_feasible: bool
    feasible: bool
    sporadic_bound: int | None
    augment_seconds: float = field(default=0.0, compare=False)


def _schedulability_job(args) -> list[InstanceOutcome]:
    cfg, seed, counts = args
    top = max(counts)
    cfg = cfg.with_overrides(streams={"sporadic": top})
    sc = generate_grid(cfg, seed)
    try:
        primary = schedule_primary(sc.network, sc.streams)
    except ScheduleError:
        return [InstanceOutcome(seed, n, False, False, None) for n in counts]
    out = []
    for n in counts:
        spor = sc.sporadics[:n]
        t0 = time.perf_counter()
        try:
            buckets = link_buckets(sc.network, sc.streams, spor)
            aug = augment_multihop(primary.graph, buckets)
            ok = verify_latency(aug, primary.graph, buckets).passed
            bound = max(sporadic_bounds(sc.network, buckets, sc.streams, spor).values(),
                        default=None)
        except ScheduleError:
            ok, bound = False, None
        out.append(InstanceOutcome(seed, n, True, ok, bound if ok else None,
                                   time.perf_counter() - t0))
    return out


def _fan_out(fn: Callable, jobs: list, workers: int) -> list:
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, jobs))  # map keeps submission order


@dataclass(frozen=True)
class SchedulabilityRow:
    n_sporadic: int
    instances: int
    primary_feasible: int
    feasible: int
    max_sporadic_bound_ns: int | None


SCHED_COLUMNS = ("n_sporadic", "instances", "primary_feasible", "feasible", "max_sporadic_bound_ns")


def run_schedulability_study(cfg: ScenarioConfig, instances: int | None = None,
                             counts: Sequence[int] | None = None,
                             workers: int | None = None) -> list[SchedulabilityRow]:
    """Feasible instance count per number of sporadic streams.

    Seeds are ``cfg.seed, cfg.seed + 1, ...``.  Every seed is one grid
    instance; the sporadic sets are nested prefixes, so a larger count only
    adds load."""
    study = cfg.section("study")
    instances = int(study["instances"] if instances is None else instances)
    counts = [int(c) for c in (study["sporadic_counts"] if counts is None else counts)]
    workers = int(study["workers"] if workers is None else workers)
    budget = cfg.dur("study", "time_budget") / 1e9
    jobs = [(cfg, cfg.seed + i, counts) for i in range(instances)]
    results = _fan_out(_schedulability_job, jobs, workers)
    rows = []
    for j, n in enumerate(counts):
        outs = [r[j] for r in results]
        slow = [o.seed for o in outs if o.augment_seconds > budget]
        if slow:
            # kept out of the table so reruns stay byte-identical
            log.warning("N=%d: augmentation exceeded %.3fs for seeds %s", n, budget, slow)
        bounds = [o.sporadic_bound for o in outs if o.sporadic_bound is not None]
        rows.append(SchedulabilityRow(n, len(outs), sum(o.primary_feasible for o in outs),
                                      sum(o.feasible for o in outs), max(bounds, default=None)))
    return rows


# ------------------------------------------------------------------- 5G

VERDICTS = ("met", "elevated+met", "late", "discarded")
FIVEG_COLUMNS = ("run", "stream", "frame_index", "release_ns", "arrival_ns", "wireless_delay_ns",
                 "latency_ns", "elevated", "verdict")


def frame_verdict(release: int, arrival: int | None, latency: int, elevated: bool) -> str:
    if arrival is None:
        return "discarded"
    if arrival - release >= latency:
        return "late"
    return "elevated+met" if elevated else "met"


@dataclass
class RunSummary:
    name: str
    stats: dict[str, StreamStats]
    masquerades: dict[str, list[int]] = field(default_factory=dict)

    def verdicts(self) -> dict[str, bool | None]:
        return {sid: (None if st.verdict is None else bool(st.verdict)) for sid, st in self.stats.items()}


@dataclass
class FiveGReport:
    seed: int
    cycles: int
    unbounded_stream: str
    stable_bound: dict[str, int]
    endurable: dict[str, int]
    primary_worst: dict[str, int]
    augmented_worst: dict[str, int]
    prolongation: dict[str, int]
    runs: dict[str, RunSummary]
    rows: list[tuple]

    def summary(self) -> dict:
        """JSON-friendly digest of the study (no per-frame rows)."""
        runs = {}
        for name, run in self.runs.items():
            runs[name] = {sid: {**{k: v for k, v in asdict(st).items() if k != "verdict"},
                                "mk_passed": None if st.verdict is None else bool(st.verdict),
                                "masquerades": len(run.masquerades.get(sid, []))}
                          for sid, st in sorted(run.stats.items())}
        return {"seed": self.seed, "cycles": self.cycles, "unbounded_stream": self.unbounded_stream,
                "stable_bound_ns": self.stable_bound, "endurable_delay_ns": self.endurable,
                "primary_worst_latency_ns": self.primary_worst,
                "augmented_worst_latency_ns": self.augmented_worst,
                "prolongation_ns": self.prolongation, "runs": runs}


def _delay_models(sc: Scenario, stable: Mapping[str, int], hi: int, interval: int, burst: int,
                  overrides: Mapping[str, int] | None = None) -> dict:
    """Epochal model per wireless port; ``overrides`` raises the unstable
    upper bound for single streams."""
    models: dict = {}
    for port, hist in sc.delay_models.items():
        kind = "uplink" if hist is sc.histograms.get("uplink") else "downlink"
        models[port] = DelayModel.epochal(
            hist, EpochSchedule(stable[kind], interval, burst, (stable[kind], max(hi, stable[kind]))))
    for sid, top in (overrides or {}).items():
        s = sc.stream(sid)
        for port in s.hops:
            if port in sc.delay_models:
                hist = sc.delay_models[port]
                lo = models[port].epochs.stable_bound
                models[(port, sid)] = DelayModel.epochal(
                    hist, EpochSchedule(lo, interval, burst, (lo, max(top, lo))))
    return models


def _simulate(args) -> tuple[str, SimTrace]:
    name, sc, sched, models, cycles, seed = args
    sim = Simulator(sc.network, sched, sc.streams, models, seed=seed)
    return name, sim.run(cycles)


def pick_unbounded_stream(sc: Scenario, choice: str) -> str:
    if choice != "auto":
        sc.stream(choice)
        return choice
    cands = [s.id for s in guaranteed(wireless_streams(sc)) if sc.direction[s.id] == "uplink"]
    cands = cands or [s.id for s in wireless_streams(sc)]
    if not cands:
        raise ScheduleError("scenario has no wireless stream")
    return cands[0]


def run_5g_study(cfg: ScenarioConfig, cycles: int | None = None, seed: int | None = None,
                 workers: int | None = None) -> FiveGReport:
    """Simulate the augmented 5G-TSN schedule three times.

    ``stable``: wireless delays truncated at the stable bound.  ``bounded``:
    periodic bursts of delays up to the smallest endurable delay.
    ``unbounded``: as ``bounded`` but one stream sees delays up to the
    configured maximum.  Other streams draw identical delay samples in the
    last two runs, so their outcomes are directly comparable.
    """
    seed = cfg.seed if seed is None else seed
    cycles = cfg.horizon if cycles is None else cycles
    workers = int(cfg.section("study")["workers"] if workers is None else workers)
    sc = generate_5g(cfg, seed)
    pipe = build_pipeline(sc)
    graph, aug = pipe.graph, pipe.augmented
    endurable = endurable_delays(sc, aug, graph, pipe.buckets)
    q = float(cfg.section("delays")["stable_quantile"])
    stable = {k: h.quantile(q) for k, h in sc.histograms.items()}
    hi = min(endurable.values(), default=max(stable.values()))
    if hi < max(stable.values()):
        raise VerificationError(f"endurable delay {hi} ns is below the stable bound")
    interval = cfg.dur("delays", "unstable_interval")
    burst = int(cfg.section("delays")["burst_len"])
    target = pick_unbounded_stream(sc, str(cfg.section("delays")["unbounded_stream"]))
    top = cfg.dur("delays", "unbounded_max")
    runs = {
        "stable": _delay_models(sc, stable, 0, interval, 0),
        "bounded": _delay_models(sc, stable, hi, interval, burst),
        "unbounded": _delay_models(sc, stable, hi, interval, burst, {target: top}),
    }
    jobs = [(name, sc, aug, models, cycles, seed) for name, models in runs.items()]
    traces = dict(_fan_out(_simulate, jobs, workers))

    rows: list[tuple] = []
    summaries: dict[str, RunSummary] = {}
    wl = wireless_streams(sc)
    for name in runs:
        tr = traces[name]
        summaries[name] = RunSummary(name, analyze(tr, sc.streams),
                                     {s.id: masquerade_events(tr, s) for s in wl})
        for s in wl:
            for r in tr.records[s.id]:
                rows.append((name, s.id, r.index, r.release, r.arrival, r.wireless_delay,
                             r.latency, int(r.elevated),
                             frame_verdict(r.release, r.arrival, s.latency, r.elevated)))
    return FiveGReport(seed, cycles, target, stable, endurable,
                       worst_latencies(pipe.primary.schedule, graph), worst_latencies(aug, graph),
                       prolongations(pipe.primary.schedule, aug, graph), summaries, rows)


# ---------------------------------------------------------------- output


def _cell(v) -> str:
    return "" if v is None else str(v)


def write_rows(fh: io.TextIOBase, columns: Sequence[str], rows: Iterable[Sequence], fmt: str = "csv") -> None:
    if fmt == "csv":
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_cell(v) for v in r])
    elif fmt == "json-lines":
        for r in rows:
            fh.write(json.dumps(dict(zip(columns, r)), sort_keys=False) + "\n")
    else:
        raise ValueError(f"unknown format {fmt!r}")


def schedulability_rows(rows: Sequence[SchedulabilityRow]) -> list[tuple]:
    return [(r.n_sporadic, r.instances, r.primary_feasible, r.feasible, r.max_sporadic_bound_ns)
            for r in rows]
