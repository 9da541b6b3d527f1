"""Scenario generation: grid networks with random streams and the
two-partition 5G-TSN desk scenario."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from ..core import NEVER, Link, MuPattern, NetworkGraph, Port, ScheduleError, SporadicStream, Stream
from ..sim.delay import DelayModel, builtin_histogram, load_histogram
from ..weakly_hard import MkRequirement, mu_satisfies
from .config import ConfigError, ScenarioConfig


@dataclass
class Scenario:
    network: NetworkGraph
    streams: list[Stream]
    sporadics: list[SporadicStream] = field(default_factory=list)
    delay_models: dict[Port, DelayModel] = field(default_factory=dict)
    direction: dict[str, str] = field(default_factory=dict)  # stream -> uplink | downlink | wired
    histograms: dict[str, DelayModel] = field(default_factory=dict)

    def stream(self, sid: str) -> Stream:
        for s in self.streams:
            if s.id == sid:
                return s
        raise KeyError(sid)


def shortest_route(net: NetworkGraph, src: str, dst: str) -> tuple[str, ...]:
    """BFS route; among equal-length routes the lexicographically smallest
    next hop wins.  End devices are never used as transit vertices."""
    parent = {src: None}
    queue = deque([src])
    while queue:
        u = queue.popleft()
        if u == dst:
            break
        if u != src and not net.is_bridge(u):
            continue
        for v in net.neighbors(u):
            if v not in parent:
                parent[v] = u
                queue.append(v)
    if dst not in parent:
        raise ScheduleError(f"{dst} unreachable from {src}")
    route = [dst]
    while route[-1] != src:
        route.append(parent[route[-1]])
    return tuple(reversed(route))


@dataclass(frozen=True)
class MuRequest:
    """A stream asking for a mu-pattern from ``pool`` that meets ``requirement``."""

    stream: str
    period: int
    pool: tuple[str, ...]
    requirement: MkRequirement | None = None


def choose_mu_patterns(requests: Sequence[MuRequest]) -> dict[str, MuPattern]:
    """Round-robin pattern assignment within every (period, k) class.

    Spreading the eligible frames of same-period streams over different
    offsets keeps the number of eligible frames that can coincide, and hence
    the token bucket sizes, small.  This is a heuristic, not an optimum.
    """
    out: dict[str, MuPattern] = {}
    counters: dict[tuple[int, int], int] = {}
    for req in requests:
        if not req.pool:
            raise ValueError(f"{req.stream}: empty mu-pattern pool")
        pats = [MuPattern.parse(p) for p in req.pool]
        if len({p.k for p in pats}) != 1:
            raise ValueError(f"{req.stream}: pool mixes pattern lengths")
        if req.requirement is not None:
            for p in pats:
                if not mu_satisfies(p, req.requirement):
                    raise ValueError(f"{req.stream}: pattern {p} violates "
                                     f"({req.requirement.m},{req.requirement.k})")
        key = (req.period, pats[0].k)
        i = counters.get(key, 0)
        out[req.stream] = pats[i % len(pats)]
        counters[key] = i + 1
    return out


def _wired(cfg: ScenarioConfig) -> dict:
    return {"prop_delay": cfg.dur("topology", "prop_delay"),
            "proc_delay": cfg.dur("topology", "proc_delay")}


def generate_grid(cfg: ScenarioConfig, seed: int | None = None) -> Scenario:
    seed = cfg.seed if seed is None else seed
    topo, st = cfg.section("topology"), cfg.section("streams")
    rows, cols, rate = int(topo["rows"]), int(topo["cols"]), int(topo["link_rate"])
    net = NetworkGraph()
    kw = _wired(cfg)
    for r in range(rows):
        for c in range(cols):
            net.add_vertex(f"B{r}_{c}", "bridge")
            net.add_vertex(f"E{r}_{c}", "end-device")
            net.add_duplex(f"B{r}_{c}", f"E{r}_{c}", rate, **kw)
    for r in range(rows):
        for c in range(cols):
            if c + 1 < cols:
                net.add_duplex(f"B{r}_{c}", f"B{r}_{c + 1}", rate, **kw)
            if r + 1 < rows:
                net.add_duplex(f"B{r}_{c}", f"B{r + 1}_{c}", rate, **kw)
    devices = sorted(v for v, k in net.vertices.items() if k == "end-device")
    rng = np.random.default_rng(seed)
    periods = cfg.durs("streams", "periods")
    factors = [float(f) for f in st["latency_factors"]]
    pcps = [int(p) for p in st["pcp"]]
    size = int(st["size"])

    def pair():
        for _ in range(100):
            a, b = rng.choice(len(devices), size=2, replace=False)
            try:
                return shortest_route(net, devices[a], devices[b])
            except ScheduleError:
                continue
        raise ConfigError("could not find a connected talker/listener pair")

    streams = []
    for i in range(int(st["isochronous"])):
        route = pair()
        T = periods[int(rng.integers(len(periods)))]
        L = int(round(T * factors[int(rng.integers(len(factors)))]))
        pcp = pcps[int(rng.integers(len(pcps)))]
        streams.append(Stream(f"iso{i:02d}", route, pcp, T, size, L))
    sporadics = []
    if int(st["sporadic"]):
        gaps = cfg.durs("streams", "sporadic_min_inter_event")
        for i in range(int(st["sporadic"])):
            route = pair()
            gap = gaps[int(rng.integers(len(gaps)))]
            sporadics.append(SporadicStream(f"spo{i:02d}", route, size, gap,
                                            pcp=int(st["sporadic_pcp"])))
    return Scenario(net, streams, sporadics, direction={s.id: "wired" for s in streams})


def _histogram(spec: str) -> DelayModel:
    if spec.startswith("builtin:"):
        return builtin_histogram(spec.split(":", 1)[1])
    return load_histogram(spec)


def generate_5g(cfg: ScenarioConfig, seed: int | None = None) -> Scenario:
    """Backbone line ``W0..Wn-1`` plus a 5G bridge ``BNW``; every AGV has an
    internal bridge ``A``, a DS-TT ``D`` and its own NW-TT port ``N``.

    Uplink streams run sensor -> A -> D -> N -> BNW -> sink, downlink streams
    run controller -> backbone -> BNW -> N -> D -> A -> actuator.  Wired
    streams stay within one partition, alternating between the backbone and
    the AGV-internal networks.  The layout is fixed, so ``seed`` only
    matters for files derived from it.
    """
    topo, st = cfg.section("topology"), cfg.section("streams")
    rate, kw = int(topo["link_rate"]), _wired(cfg)
    up, down = _histogram(topo["uplink_histogram"]), _histogram(topo["downlink_histogram"])
    q = float(topo["dmax_quantile"])
    net = NetworkGraph()
    nb = int(topo["backbone_bridges"])
    for j in range(nb):
        net.add_vertex(f"W{j}", "bridge")
        if j:
            net.add_duplex(f"W{j - 1}", f"W{j}", rate, **kw)
    net.add_vertex("BNW", "bridge")
    net.add_duplex("W0", "BNW", rate, **kw)
    models: dict[Port, DelayModel] = {}
    n_agv = int(topo["agvs"])
    for a in range(n_agv):
        A, D, N = f"A{a}", f"D{a}", f"N{a}"
        net.add_vertex(A, "bridge")
        net.add_vertex(D, "ds-tt")
        net.add_vertex(N, "nw-tt")
        for dev, host in ((f"S{a}", A), (f"X{a}", A), (f"U{a}", "BNW"), (f"C{a}", f"W{a % nb}")):
            net.add_vertex(dev, "end-device")
            net.add_duplex(dev, host, rate, **kw)
        net.add_duplex(A, D, rate, **kw)
        net.add_duplex(N, "BNW", rate, **kw)
        net.add_link(Link(D, N, rate, "wireless", d_min=up.lower, d_max=up.quantile(q)))
        net.add_link(Link(N, D, rate, "wireless", d_min=down.lower, d_max=down.quantile(q)))
        models[(D, N)] = up
        models[(N, D)] = down

    size = int(st["size"])
    streams: list[Stream] = []
    direction: dict[str, str] = {}
    Tw, Lw = cfg.dur("streams", "wired_period"), cfg.dur("streams", "wired_latency")
    for j in range(int(st["wired"])):
        # alternate between the backbone and the AGV-internal networks
        talker, listener = f"P{j}", f"Q{j}"
        net.add_vertex(talker, "end-device")
        net.add_vertex(listener, "end-device")
        if j % 2:
            a = (j // 2) % n_agv
            near = far = f"A{a}"
        else:
            jb = j // 2
            near = f"W{jb % nb}"
            far = "BNW" if nb == 1 else f"W{(jb + 1 + nb // 2) % nb}"
            if far == near:
                far = "BNW"
        net.add_duplex(talker, near, rate, **kw)
        net.add_duplex(listener, far, rate, **kw)
        s = Stream(f"wired{j:02d}", shortest_route(net, talker, listener), int(st["wired_pcp"]),
                   Tw, size, Lw, mu=MuPattern.parse(st["wired_mu"]))
        streams.append(s)
        direction[s.id] = "wired"

    T5, L5 = cfg.dur("streams", "wireless_period"), cfg.dur("streams", "wireless_latency")
    wireless = []
    for a in range(n_agv):
        wireless.append((f"up{a:02d}", (f"S{a}", f"A{a}", f"D{a}", f"N{a}", "BNW", f"U{a}"), "uplink"))
        down_route = shortest_route(net, f"C{a}", "BNW") + (f"N{a}", f"D{a}", f"A{a}", f"X{a}")
        wireless.append((f"dn{a:02d}", down_route, "downlink"))
    share = float(st["guaranteed_share"])
    n_guar = int(round(share * len(wireless)))
    # alternate guaranteed streams between uplink and downlink
    order = sorted(range(len(wireless)), key=lambda i: (i % 2 != (i // 2) % 2, i))
    guaranteed = set(order[:n_guar])
    pool = [str(p) for p in st["mu_pool"]]
    mus = choose_mu_patterns([MuRequest(wireless[i][0], T5, tuple(pool)) for i in sorted(guaranteed)])
    for i, (sid, route, kind) in enumerate(wireless):
        net.check_route(route)
        mu = mus.get(sid, NEVER)
        streams.append(Stream(sid, route, int(st["wireless_pcp"]), T5, size, L5, mu=mu))
        direction[sid] = kind
    return Scenario(net, streams, [], models, direction, {"uplink": up, "downlink": down})


def generate_scenario(cfg: ScenarioConfig, seed: int | None = None) -> Scenario:
    if cfg.kind == "grid":
        return generate_grid(cfg, seed)
    return generate_5g(cfg, seed)


def wireless_streams(sc: Scenario) -> list[Stream]:
    return [s for s in sc.streams if sc.direction.get(s.id) in ("uplink", "downlink")]


def guaranteed(streams: Iterable[Stream]) -> list[Stream]:
    return [s for s in streams if s.mu.m > 0]
