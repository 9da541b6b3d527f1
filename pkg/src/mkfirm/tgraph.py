"""Transmission graph of a time-driven schedule.

One node per frame-hop.  Conjunctive edges chain the hops of a frame,
disjunctive edges order frames sharing an egress port (only adjacent pairs
are stored), and FIFO edges make sure frames of one queue are enqueued in
the order they are transmitted.
"""

from __future__ import annotations

import graphlib
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .core import FrameInstance, Instant, NetworkGraph, OpKey, Port, ScheduleError, Stream

SOURCE = "source"
SINK = "sink"


@dataclass(frozen=True)
class OpNode:
    frame: FrameInstance
    hop: int  # 1-based
    port: Port

    @property
    def key(self) -> OpKey:
        return (self.frame.stream, self.frame.index, self.hop)

    def __str__(self) -> str:
        return f"{self.frame.stream}#{self.frame.index}@{self.hop}"


Node = OpNode | str


@dataclass(frozen=True)
class TgEdge:
    src: Node
    dst: Node
    kind: str  # "conjunctive" | "disjunctive" | "fifo"
    weight: int


@dataclass
class TransmissionGraph:
    nodes: dict[OpKey, OpNode] = field(default_factory=dict)
    edges: list[TgEdge] = field(default_factory=list)
    sequences: dict[Port, list[OpNode]] = field(default_factory=dict)
    starts: dict[OpKey, Instant] = field(default_factory=dict)
    streams: dict[str, Stream] = field(default_factory=dict)
    network: NetworkGraph | None = None
    _out: dict[Node, list[TgEdge]] = field(default_factory=dict, repr=False)

    def add_edge(self, edge: TgEdge) -> None:
        self.edges.append(edge)
        self._out.setdefault(edge.src, []).append(edge)

    def out_edges(self, node: Node) -> list[TgEdge]:
        return self._out.get(node, [])

    def in_edges(self) -> dict[Node, list[TgEdge]]:
        res: dict[Node, list[TgEdge]] = {}
        for e in self.edges:
            res.setdefault(e.dst, []).append(e)
        return res

    def all_nodes(self) -> list[Node]:
        return [SOURCE, *self.nodes.values(), SINK]

    def disjunctive_closure(self) -> set[tuple[OpKey, OpKey]]:
        """Every ordered pair implied by the per-port sequences."""
        pairs = set()
        for seq in self.sequences.values():
            for a in range(len(seq)):
                for b in range(a + 1, len(seq)):
                    pairs.add((seq[a].key, seq[b].key))
        return pairs

    def to_text(self) -> str:
        """Plain node/edge list, one item per line."""
        lines = [f"node {SOURCE}", *(f"node {n}" for n in self.nodes.values()), f"node {SINK}"]
        for e in self.edges:
            lines.append(f"edge {e.src} {e.dst} {e.kind} {e.weight}")
        return "\n".join(lines) + "\n"


def _order_key(node: OpNode, start: Instant, streams: Mapping[str, Stream]):
    return (start, -streams[node.frame.stream].pcp, node.frame.stream, node.frame.index)


def build_graph(starts: Mapping[OpKey, Instant], streams: Iterable[Stream],
                network: NetworkGraph) -> TransmissionGraph:
    """Build the graph for the frames whose hops appear in ``starts``.

    ``starts`` maps ``(stream, frame index, hop)`` to the transmission start
    assigned by the input schedule.  Every hop of a listed frame must be
    present.
    """
    streams = {s.id: s for s in streams}
    g = TransmissionGraph(starts=dict(starts), streams=streams, network=network)
    frames: dict[tuple[str, int], int] = {}
    for sid, idx, hop in starts:
        if sid not in streams:
            raise ScheduleError(f"unknown stream {sid}")
        frames[(sid, idx)] = frames.get((sid, idx), 0) + 1
    for (sid, idx), n in sorted(frames.items()):
        s = streams[sid]
        hops = s.hops
        if n != len(hops) or any((sid, idx, h) not in starts for h in range(1, len(hops) + 1)):
            raise ScheduleError(f"frame {sid}#{idx} lacks start times for some hops")
        network.check_route(s.route)
        f = s.frame(idx)
        chain = []
        for h, port in enumerate(hops, start=1):
            node = OpNode(f, h, port)
            g.nodes[node.key] = node
            chain.append(node)
            g.sequences.setdefault(port, []).append(node)
        g.add_edge(TgEdge(SOURCE, chain[0], "conjunctive", f.release))
        for a, b in zip(chain, chain[1:]):
            g.add_edge(TgEdge(a, b, "conjunctive", network.link(*a.port).dmax(s.size)))
        last = chain[-1]
        g.add_edge(TgEdge(last, SINK, "conjunctive", network.link(*last.port).dmax(s.size)))

    for port, seq in g.sequences.items():
        seq.sort(key=lambda n: _order_key(n, starts[n.key], streams))
        link = network.link(*port)
        for a, b in zip(seq, seq[1:]):
            g.add_edge(TgEdge(a, b, "disjunctive", link.dmax(streams[a.frame.stream].size)))
    _add_fifo_edges(g, network)
    topo_sort(g)
    return g


def _add_fifo_edges(g: TransmissionGraph, network: NetworkGraph) -> None:
    streams = g.streams
    pos = {n.key: i for seq in g.sequences.values() for i, n in enumerate(seq)}
    for port, seq in g.sequences.items():
        by_pcp: dict[int, list[OpNode]] = {}
        for n in seq:
            by_pcp.setdefault(streams[n.frame.stream].pcp, []).append(n)
        for group in by_pcp.values():
            for a in range(len(group)):
                f = group[a]
                for b in range(a + 1, len(group)):
                    f2 = group[b]
                    if f.hop == 1 or f2.hop == 1:
                        if f.hop == 1 and f2.hop == 1 and f.frame.release > f2.frame.release:
                            raise ScheduleError(
                                f"FIFO violation on {port}: {f2} released before {f} "
                                f"but transmitted after it")
                        continue
                    pf = g.nodes[(f.frame.stream, f.frame.index, f.hop - 1)]
                    pf2 = g.nodes[(f2.frame.stream, f2.frame.index, f2.hop - 1)]
                    if pf.port == pf2.port:
                        if pos[pf.key] > pos[pf2.key]:
                            raise ScheduleError(
                                f"FIFO violation on {port}: {f} precedes {f2} but follows it "
                                f"on {pf.port}")
                        continue
                    # +1: simultaneous arrivals would leave the queue order open
                    w = (network.link(*pf.port).dmax(streams[f.frame.stream].size)
                         - network.link(*pf2.port).dmin(streams[f2.frame.stream].size) + 1)
                    g.add_edge(TgEdge(pf, pf2, "fifo", w))


def topo_sort(g: TransmissionGraph) -> list[Node]:
    ts = graphlib.TopologicalSorter()
    for n in g.all_nodes():
        ts.add(n)
    for e in g.edges:
        ts.add(e.dst, e.src)
    try:
        order = list(ts.static_order())
    except graphlib.CycleError as exc:
        cyc = " -> ".join(str(n) for n in exc.args[1])
        raise ScheduleError(f"transmission graph has a cycle: {cyc}") from None
    return order


def critical_costs(g: TransmissionGraph) -> dict[Node, int]:
    """Longest-path cost from the source to every reachable node."""
    cost: dict[Node, int] = {SOURCE: 0}
    for n in topo_sort(g):
        if n not in cost:
            continue
        for e in g.out_edges(n):
            c = cost[n] + e.weight
            if e.dst not in cost or c > cost[e.dst]:
                cost[e.dst] = c
    return cost


def critical_path_cost(g: TransmissionGraph, node: Node | OpKey) -> int:
    if isinstance(node, tuple):
        node = g.nodes[node]
    cost = critical_costs(g)
    if node not in cost:
        raise ScheduleError(f"{node} is not reachable from the source")
    return cost[node]
