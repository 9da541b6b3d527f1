"""File formats: a line-oriented text format for schedules and JSON for
scenarios.

Schedule text format, one record per line, ``#`` starts a comment::

    hypercycle <ns>
    gcl <src> <dst> <queue> <start_ns> <end_ns>
    psfp <bridge> <stream> <start_ns> <end_ns> <forward|elevate> <slot>
    op <stream> <frame> <hop> <start_ns> <latest_ns> <earliest_ns>

Windows are half-open ``[start, end)`` in hypercycle-local time.  ``op``
lines carry the per-frame-hop start bounds needed to re-verify a schedule.
"""

from __future__ import annotations

import io
import json
from pathlib import Path
from typing import TextIO

from ..core import Link, MuPattern, NetworkGraph, Schedule, SporadicStream, Stream
from ..token_bucket import TokenBucket
from .scenario import Scenario
from ..sim.delay import DelayModel

FORMAT_HEADER = "# mkfirm schedule v1"


def write_schedule(sched: Schedule, fh: TextIO) -> None:
    fh.write(FORMAT_HEADER + "\n")
    fh.write(f"hypercycle {sched.hypercycle}\n")
    for port in sorted(sched.gcl):
        for g in sorted(sched.gcl[port], key=lambda g: (g.start, g.queue, g.end)):
            fh.write(f"gcl {port[0]} {port[1]} {g.queue} {g.start} {g.end}\n")
    for bridge in sorted(sched.psfp):
        for p in sorted(sched.psfp[bridge], key=lambda p: (p.stream, p.start, p.end, p.action)):
            fh.write(f"psfp {bridge} {p.stream} {p.start} {p.end} {p.action} {p.slot}\n")
    for key in sorted(sched.starts):
        sid, idx, hop = key
        latest = sched.latest.get(key, sched.starts[key])
        earliest = sched.earliest.get(key, sched.starts[key])
        fh.write(f"op {sid} {idx} {hop} {sched.starts[key]} {latest} {earliest}\n")


def schedule_text(sched: Schedule) -> str:
    buf = io.StringIO()
    write_schedule(sched, buf)
    return buf.getvalue()


def read_schedule(fh: TextIO) -> Schedule:
    sched: Schedule | None = None
    for lineno, raw in enumerate(fh, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        try:
            if tok[0] == "hypercycle":
                sched = Schedule(int(tok[1]))
                continue
            if sched is None:
                raise ValueError("'hypercycle' must come first")
            if tok[0] == "gcl" and len(tok) == 6:
                sched.add_gcl((tok[1], tok[2]), int(tok[3]), int(tok[4]), int(tok[5]))
            elif tok[0] == "psfp" and len(tok) == 7:
                if tok[5] not in ("forward", "elevate"):
                    raise ValueError(f"unknown action {tok[5]!r}")
                sched.add_psfp(tok[1], tok[2], int(tok[3]), int(tok[4]), tok[5], int(tok[6]))
            elif tok[0] == "op" and len(tok) == 7:
                key = (tok[1], int(tok[2]), int(tok[3]))
                sched.starts[key] = int(tok[4])
                sched.latest[key] = int(tok[5])
                sched.earliest[key] = int(tok[6])
            else:
                raise ValueError(f"malformed record {tok[0]!r}")
        except (ValueError, IndexError) as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    if sched is None:
        raise ValueError("empty schedule file")
    sched.validate()
    return sched


def load_schedule(path: str | Path) -> Schedule:
    with open(path) as fh:
        return read_schedule(fh)


# ------------------------------------------------------------- scenarios


def scenario_to_dict(sc: Scenario) -> dict:
    net = sc.network
    links = []
    for (u, v), l in sorted(net.links.items()):
        d = {"src": u, "dst": v, "rate": l.rate, "kind": l.kind}
        if l.kind == "wireless":
            d.update(d_min=l.d_min, d_max=l.d_max)
        else:
            d.update(prop_delay=l.prop_delay, proc_delay=l.proc_delay)
        links.append(d)
    hist_names = {id(h): name for name, h in sc.histograms.items()}
    return {
        "vertices": dict(sorted(net.vertices.items())),
        "links": links,
        "streams": [{"id": s.id, "route": list(s.route), "pcp": s.pcp, "period": s.period,
                     "size": s.size, "latency": s.latency, "phase": s.phase, "mu": str(s.mu),
                     "direction": sc.direction.get(s.id, "wired")} for s in sc.streams],
        "sporadics": [{"id": sp.id, "route": list(sp.route), "size": sp.size,
                       "min_inter_event": sp.min_inter_event, "pcp": sp.pcp} for sp in sc.sporadics],
        "histograms": {name: {"edges": list(h.edges), "probs": list(h.probs)}
                       for name, h in sorted(sc.histograms.items())},
        "wireless_delays": [{"src": u, "dst": v, "histogram": hist_names[id(m)]}
                            for (u, v), m in sorted(sc.delay_models.items())],
    }


def scenario_from_dict(d: dict) -> Scenario:
    net = NetworkGraph()
    for v, kind in d["vertices"].items():
        net.add_vertex(v, kind)
    for l in d["links"]:
        net.add_link(Link(**l))
    streams = [Stream(s["id"], tuple(s["route"]), s["pcp"], s["period"], s["size"], s["latency"],
                      s.get("phase", 0), MuPattern.parse(s.get("mu", "0"))) for s in d["streams"]]
    direction = {s["id"]: s.get("direction", "wired") for s in d["streams"]}
    spor = [SporadicStream(sp["id"], tuple(sp["route"]), sp["size"], sp["min_inter_event"],
                           sp.get("pcp", 7)) for sp in d.get("sporadics", [])]
    hists = {name: DelayModel("histogram", edges=tuple(h["edges"]), probs=tuple(h["probs"]))
             for name, h in d.get("histograms", {}).items()}
    models = {(w["src"], w["dst"]): hists[w["histogram"]] for w in d.get("wireless_delays", [])}
    return Scenario(net, streams, spor, models, direction, hists)


def save_scenario(sc: Scenario, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(sc), indent=1) + "\n")


def load_scenario(path: str | Path) -> Scenario:
    return scenario_from_dict(json.loads(Path(path).read_text()))


def buckets_rows(buckets: dict) -> list[tuple]:
    return [(u, v, tb.b, tb.r.numerator, tb.r.denominator, f"{float(tb.r):.6f}")
            for (u, v), tb in sorted(buckets.items()) if isinstance(tb, TokenBucket)]


BUCKET_COLUMNS = ("src", "dst", "b_bits", "r_num", "r_den", "r_bps")
