"""Instance builders and brute-force oracles shared by the test modules."""

from __future__ import annotations

import random
from fractions import Fraction

import numpy as np

from mkfirm.core import NS_PER_S, Link, NetworkGraph, Stream, hypercycle
from mkfirm.harness.scheduler import list_schedule
from mkfirm.tgraph import SOURCE, build_graph
from mkfirm.token_bucket import TokenBucket

MBIT = 1_000_000
GBIT = 1_000_000_000


# ------------------------------------------------------------------ oracles


def enum_count(stream: Stream, t1: int, t2: int) -> int:
    """Eligible frames whose window [release, release + L] meets [t1, t2],
    by walking frame indices one at a time."""
    n, i = 0, 0
    while (rel := stream.phase + i * stream.period) <= t2:
        if rel + stream.latency >= t1 and stream.mu[i]:
            n += 1
        i += 1
    return n


def grid_bucket_size(streams, horizon: int, step: int) -> int:
    """max over grid instants t of sum size * N([t, t])."""
    return max(sum(s.size * enum_count(s, t, t) for s in streams)
               for t in range(0, horizon, step))


def grid_token_rate(streams, b: int, horizon: int, step: int) -> Fraction:
    """Smallest r (bit/s) with N([t1, t2]) <= b + r (t2 - t1) at all grid pairs."""
    pts = range(0, horizon, step)
    best = Fraction(0)
    for t1 in pts:
        for t2 in pts:
            if t2 <= t1:
                continue
            bits = sum(s.size * enum_count(s, t1, t2) for s in streams)
            if bits > b:
                best = max(best, Fraction(bits - b, t2 - t1))
    return best * NS_PER_S


def dense_grid_bucket(streams, hs: int, step: int) -> tuple[int, Fraction]:
    """``(b, r)`` by brute force on a grid, for pattern horizon ``hs``.

    ``b`` is the largest point count over ``[0, 2 hs)``.  ``r`` covers every
    grid pair ``t1 < t2`` with ``t1`` in ``[hs, 2 hs)`` and ``t2 <= 3 hs``, so
    each interval has a full horizon of history, plus the long-run rate of
    bits per horizon.  Each frame is compared against each grid point
    directly: for ``t1 <= t2`` the frames whose window meets ``[t1, t2]`` are
    those released by ``t2`` minus those whose window closed before ``t1``.
    """
    frames = [(s.phase + i * s.period, s.latency, s.size)
              for s in streams
              for i in range(3 * hs // s.period + 1) if s.mu[i]]
    if not frames:
        return 0, Fraction(0)
    grid = np.arange(0, 3 * hs + 1, step, dtype=np.int64)
    rel = np.array([f[0] for f in frames], dtype=np.int64)[:, None]
    dl = rel + np.array([f[1] for f in frames], dtype=np.int64)[:, None]
    size = np.array([f[2] for f in frames], dtype=np.int64)[:, None]
    live = ((rel <= grid) & (dl >= grid)) * size
    b = int(live.sum(axis=0)[grid < 2 * hs].max())
    released = ((rel <= grid) * size).sum(axis=0)
    closed = ((dl < grid) * size).sum(axis=0)
    best = Fraction(int(size[rel < hs].sum()), hs)
    for i in np.flatnonzero((grid >= hs) & (grid < 2 * hs)):
        num = released[i + 1:] - closed[i] - b
        if not len(num) or num.max() <= 0:
            continue
        den = grid[i + 1:] - grid[i]
        ratio = num / den
        top = ratio.max()
        for j in np.flatnonzero(ratio >= top * (1 - 1e-12)):
            best = max(best, Fraction(int(num[j]), int(den[j])))
    return b, best * NS_PER_S


def all_paths_cost(graph, target) -> int:
    """Longest source-to-target path by enumerating every path."""
    succ: dict = {}
    for e in graph.edges:
        succ.setdefault(e.src, []).append(e)
    best = None

    def walk(node, cost):
        nonlocal best
        if node == target:
            best = cost if best is None else max(best, cost)
            return
        for e in succ.get(node, []):
            walk(e.dst, cost + e.weight)

    walk(SOURCE, 0)
    if best is None:
        raise ValueError("unreachable")
    return best


# ---------------------------------------------------------------- instances


def single_port_instance(seed: int):
    """Talkers on 1 Gbit/s links feeding one 100 Mbit/s bridge port B->D.

    Returns ``(network, streams, starts, port)``.  The B->D slots follow
    release order with random gaps, so some of them overlap once prolonged.
    """
    rnd = random.Random(seed)
    net = NetworkGraph()
    net.add_vertex("B", "bridge")
    net.add_vertex("D", "end-device")
    net.add_link(Link("B", "D", 100 * MBIT))
    period = rnd.choice([500_000, 1_000_000])
    streams = []
    for i in range(rnd.randint(1, 4)):
        talker = f"T{i}"
        net.add_vertex(talker, "end-device")
        net.add_link(Link(talker, "B", GBIT))
        streams.append(Stream(f"s{i}", (talker, "B", "D"), rnd.randint(0, 6), period,
                              rnd.choice([800, 1600, 4000]), rnd.choice([period // 2, period]),
                              mu=rnd.choice(["0", "1", "01", "10"])))
    H = hypercycle(streams)
    frames = sorted(((f.release, s.id, f.index, s.size) for s in streams for f in s.frames(H)))
    starts, t_out = {}, 0
    for rel, sid, idx, size in frames:
        starts[(sid, idx, 1)] = rel
        t_out = max(t_out, rel + size) + rnd.choice([0, 500, 3_000, 20_000])
        starts[(sid, idx, 2)] = t_out
        t_out += size * 10
    return net, streams, starts, ("B", "D")


def port_only_instance(seed: int):
    """Single-hop streams sharing port B->D, one frame each per hypercycle.

    Returns ``(network, streams, starts, bucket)``.
    """
    rnd = random.Random(seed)
    net = NetworkGraph()
    net.add_vertex("B", "bridge")
    net.add_vertex("D", "bridge")
    net.add_link(Link("B", "D", 100 * MBIT))
    streams, starts, t = [], {}, 0
    for i in range(rnd.randint(1, 5)):
        s = Stream(f"s{i}", ("B", "D"), rnd.randint(0, 6), 10_000_000,
                   rnd.choice([800, 1600, 12000]), 10_000_000, mu="1")
        streams.append(s)
        t += rnd.choice([0, 1000, 8000, 200_000]) if i else 1000
        starts[(s.id, 0, 1)] = t
    tb = TokenBucket(("B", "D"), rnd.choice([0, 800, 12000]),
                     Fraction(rnd.choice([0, 20_000, 1_000_000])))
    return net, streams, starts, tb


def line_network(n: int, rate: int = 100 * MBIT) -> NetworkGraph:
    """Bridges B0..B{n-1} in a line, end device E{i} on bridge B{i}."""
    net = NetworkGraph()
    for i in range(n):
        net.add_vertex(f"B{i}", "bridge")
        net.add_vertex(f"E{i}", "end-device")
        net.add_duplex(f"E{i}", f"B{i}", rate)
        if i:
            net.add_duplex(f"B{i - 1}", f"B{i}", rate)
    return net


def line_route(a: int, b: int) -> tuple[str, ...]:
    step = 1 if b > a else -1
    return (f"E{a}",) + tuple(f"B{i}" for i in range(a, b + step, step)) + (f"E{b}",)


def multihop_instance(seed: int):
    """Random streams over a line of 3 or 4 bridges, primary starts from the
    list scheduler.  Returns ``(network, streams, graph)``."""
    rnd = random.Random(seed)
    n = rnd.randint(3, 4)
    net = line_network(n)
    streams = []
    for i in range(rnd.randint(2, 5)):
        a, b = rnd.sample(range(n), 2)
        period = rnd.choice([250_000, 500_000])
        streams.append(Stream(f"s{i}", line_route(a, b), rnd.choice([5, 6]), period,
                              rnd.choice([800, 1600]), period,
                              mu=rnd.choice(["0", "1", "01"])))
    starts = list_schedule(net, streams)
    return net, streams, build_graph(starts, streams, net)


def random_buckets(rnd: random.Random, ports, sizes=(800, 1600)) -> dict:
    """One bucket per port, big enough for at least one adversary frame."""
    out = {}
    for p in ports:
        b = rnd.choice(sizes) * rnd.randint(1, 2)
        out[p] = TokenBucket(p, b, Fraction(rnd.choice([0, 400_000, 2_000_000])))
    return out


def overview_instance(mu1: str = "001"):
    """Four streams to one listener L: F1 and F2 cross a 5G link into the
    bridge BNW (delay budget [0, 10 ms]), F3 and F4 are wired; all meet at
    bridge B1 and share port B1->L.  Frames are 600 bits at 100 Mbit/s.  F1 and F2 use distinct
    queues: sharing one behind a link with 10 ms jitter would force 10 ms of
    FIFO spacing and push F2 past its deadline.
    """
    ms = 1_000_000
    net = NetworkGraph()
    for v, kind in (("T1", "end-device"), ("T2", "end-device"), ("T3", "end-device"),
                    ("T4", "end-device"), ("L", "end-device"), ("BNW", "nw-tt"), ("B1", "bridge")):
        net.add_vertex(v, kind)
    for t in ("T1", "T2"):
        net.add_link(Link(t, "BNW", 100 * MBIT, kind="wireless", d_min=0, d_max=10 * ms))
    for u, v in (("BNW", "B1"), ("T3", "B1"), ("T4", "B1"), ("B1", "L")):
        net.add_link(Link(u, v, 100 * MBIT))
    streams = [
        Stream("F1", ("T1", "BNW", "B1", "L"), 3, 20 * ms, 600, 20 * ms, mu=mu1),
        Stream("F2", ("T2", "BNW", "B1", "L"), 4, 20 * ms, 600, 20 * ms),
        Stream("F3", ("T3", "B1", "L"), 5, 20 * ms, 600, 20 * ms),
        Stream("F4", ("T4", "B1", "L"), 6, 20 * ms, 600, 20 * ms),
    ]
    return net, streams


def agreement_diff(seed: int) -> list[str]:
    """Differences between the single-port and the multi-hop augmentation of
    ``port_only_instance(seed)``: slot bounds, GCL and PSFP windows, the
    latter split at the hypercycle boundary.  Empty when they agree."""
    from mkfirm.augment_multihop import augment_multihop
    from mkfirm.augment_port import ScheduledTx, augment_port
    from mkfirm.core import split_mod

    net, streams, starts, tb = port_only_instance(seed)
    by_id = {s.id: s for s in streams}
    link = net.link("B", "D")
    order = sorted(streams, key=lambda s: (starts[(s.id, 0, 1)], -s.pcp, s.id))
    txs = [ScheduledTx(s.frame(0), starts[(s.id, 0, 1)], starts[(s.id, 0, 1)] + link.ser(s.size),
                       s.pcp) for s in order]
    port = augment_port(link, txs, tb, by_id)
    sched = augment_multihop(build_graph(starts, streams, net), {("B", "D"): tb})
    H = sched.hypercycle
    diff = []
    for a in port.txs:
        key = (a.frame.stream, 0, 1)
        got = (sched.starts[key], sched.latest[key], sched.earliest[key])
        if got != (a.new_open, a.theta, a.earliest):
            diff.append(f"{key}: multi-hop {got}, single-port {(a.new_open, a.theta, a.earliest)}")
    gcl_m = sorted((g.queue, g.start, g.end) for g in sched.gcl[("B", "D")])
    gcl_p = sorted((g.queue, g.start % H, g.end) for g in port.gcl)
    if gcl_m != gcl_p:
        diff.append(f"gcl: multi-hop {gcl_m}, single-port {gcl_p}")
    psfp_m = sorted((p.stream, p.start, p.end, p.action) for p in sched.psfp.get("D", []))
    psfp_p = sorted((p.stream, a, b, p.action) for p in port.psfp
                    for a, b in split_mod(p.start, p.end, H))
    if psfp_m != psfp_p:
        diff.append(f"psfp: multi-hop {psfp_m}, single-port {psfp_p}")
    return diff
