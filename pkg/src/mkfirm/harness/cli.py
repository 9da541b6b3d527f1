"""Weakly-hard TSN schedule augmentation: scenarios, schedules, studies.

Every subcommand regenerates its inputs from ``--config`` and ``--seed``, so
commands can run in any order; ``verify`` and ``simulate`` can instead read a
schedule file written by ``schedule`` or ``augment``.

Exit codes: 0 success, 2 infeasible schedule, 3 verification failure,
4 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from ..augment_multihop import augment_multihop, uncovered_ops, verify_latency
from ..core import ScheduleError, format_duration
from ..sim.analysis import analyze
from ..sim.engine import Adversary, Simulator
from ..tgraph import build_graph
from ..token_bucket import link_buckets
from .config import ConfigError, load_config
from .io import BUCKET_COLUMNS, buckets_rows, load_schedule, save_scenario, write_schedule
from .scenario import generate_scenario
from .scheduler import InfeasibleSchedule, schedule_primary
from .studies import (FIVEG_COLUMNS, SCHED_COLUMNS, VerificationError, run_5g_study,
                      run_schedulability_study, schedulability_rows, write_rows)

EXIT_OK, EXIT_INFEASIBLE, EXIT_VERIFY, EXIT_CONFIG = 0, 2, 3, 4

log = logging.getLogger("mkfirm")


def _ext(fmt: str) -> str:
    return "csv" if fmt == "csv" else "jsonl"


def _out(args, name: str) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out / name


def _write_table(args, stem: str, columns, rows) -> Path:
    path = _out(args, f"{stem}.{_ext(args.format)}")
    with open(path, "w", newline="") as fh:
        write_rows(fh, columns, rows, args.format)
    return path


def _cfg(args):
    cfg = load_config(args.config, args.seed)
    if args.horizon is not None:
        if args.horizon <= 0:
            raise ConfigError("--horizon must be positive")
        cfg = cfg.with_overrides(simulation={"horizon": args.horizon})
    return cfg


def _augmented(sc):
    primary = schedule_primary(sc.network, sc.streams)
    buckets = link_buckets(sc.network, sc.streams, sc.sporadics)
    return primary, buckets, augment_multihop(primary.graph, buckets)


# ------------------------------------------------------------- commands


def cmd_generate(args) -> int:
    cfg = _cfg(args)
    sc = generate_scenario(cfg)
    path = _out(args, "scenario.json")
    save_scenario(sc, path)
    print(f"{len(sc.streams)} isochronous, {len(sc.sporadics)} sporadic streams -> {path}")
    return EXIT_OK


def cmd_schedule(args) -> int:
    sc = generate_scenario(_cfg(args))
    primary = schedule_primary(sc.network, sc.streams)
    path = _out(args, "primary.sched")
    with open(path, "w") as fh:
        write_schedule(primary.schedule, fh)
    print(f"primary schedule, hypercycle {format_duration(primary.schedule.hypercycle)} -> {path}")
    return EXIT_OK


def cmd_buckets(args) -> int:
    sc = generate_scenario(_cfg(args))
    buckets = link_buckets(sc.network, sc.streams, sc.sporadics)
    path = _write_table(args, "buckets", BUCKET_COLUMNS, buckets_rows(buckets))
    print(f"{sum(tb.b > 0 for tb in buckets.values())} links with elevated traffic -> {path}")
    return EXIT_OK


def cmd_augment(args) -> int:
    sc = generate_scenario(_cfg(args))
    _, _, aug = _augmented(sc)
    path = _out(args, "augmented.sched")
    with open(path, "w") as fh:
        write_schedule(aug, fh)
    print(f"augmented schedule -> {path}")
    return EXIT_OK


def _schedule_for(args, sc):
    buckets = link_buckets(sc.network, sc.streams, sc.sporadics)
    if args.schedule:
        sched = load_schedule(args.schedule)
        graph = build_graph(sched.starts, sc.streams, sc.network)
    else:
        primary = schedule_primary(sc.network, sc.streams)
        graph = primary.graph
        sched = augment_multihop(graph, buckets)
    return sched, graph, buckets


def cmd_verify(args) -> int:
    sc = generate_scenario(_cfg(args))
    sched, graph, buckets = _schedule_for(args, sc)
    rep = verify_latency(sched, graph, buckets)
    if args.schedule:
        bad = uncovered_ops(sched, graph, buckets)
        if bad:
            sid, idx, hop = bad[0]
            print(f"verification failed: {len(bad)} operations lack room for elevated traffic, "
                  f"first {sid} frame {idx} hop {hop}", file=sys.stderr)
            return EXIT_VERIFY
    rows = [(sid, v.worst_latency, v.slack, int(v.passed)) for sid, v in sorted(rep.streams.items())]
    path = _write_table(args, "verify", ("stream", "worst_latency_ns", "slack_ns", "passed"), rows)
    for port in rep.wrap_conflicts:
        print(f"wrap conflict on {port[0]}->{port[1]}")
    print(f"{sum(r[3] for r in rows)}/{len(rows)} streams within bounds -> {path}")
    if not rep.passed:
        print(f"verification failed: {rep.first_failure() or 'wrap conflict'}", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _cfg(args)
    sc = generate_scenario(cfg)
    sched, _, buckets = _schedule_for(args, sc)
    simcfg = cfg.section("simulation")
    adversary = Adversary(buckets) if simcfg.get("adversary") else None
    skew_max = cfg.dur("simulation", "clock_skew")
    skew = {}
    if skew_max:
        rng = np.random.default_rng([cfg.seed, 0x5EED])
        skew = {v: int(rng.integers(-skew_max, skew_max + 1))
                for v in sorted(sc.network.vertices) if sc.network.is_bridge(v)}
    sim = Simulator(sc.network, sched, sc.streams, sc.delay_models, sc.sporadics, adversary,
                    skew, seed=cfg.seed, record=args.trace)
    trace = sim.run(cfg.horizon)
    stats = analyze(trace, sc.streams)
    rows = [(st.stream, st.released, st.delivered, st.met, st.discarded, st.elevated,
             st.window_misses, st.max_latency, st.min_latency, st.max_jitter,
             None if st.verdict is None else int(bool(st.verdict)))
            for st in stats.values()]
    cols = ("stream", "released", "delivered", "met", "discarded", "elevated", "window_misses",
            "max_latency_ns", "min_latency_ns", "max_jitter_ns", "mk_passed")
    path = _write_table(args, "sim_stats", cols, rows)
    if args.trace:
        from ..sim.analysis import TRACE_COLUMNS
        _write_table(args, "trace", TRACE_COLUMNS, trace.events)
    print(f"simulated {cfg.horizon} hypercycles -> {path}")
    return EXIT_OK


def cmd_study_schedulability(args) -> int:
    cfg = _cfg(args)
    rows = run_schedulability_study(cfg, instances=args.instances, workers=args.workers)
    path = _write_table(args, "schedulability", SCHED_COLUMNS, schedulability_rows(rows))
    for r in rows:
        print(f"N={r.n_sporadic:3d}: {r.feasible}/{r.instances} feasible "
              f"(primary {r.primary_feasible})")
    print(f"-> {path}")
    return EXIT_OK


def cmd_study_5g(args) -> int:
    cfg = _cfg(args)
    if cfg.kind != "5g":
        raise ConfigError("study-5g needs a config with topology.kind: 5g")
    rep = run_5g_study(cfg, workers=args.workers)
    path = _write_table(args, "5g_frames", FIVEG_COLUMNS, rep.rows)
    summary = _out(args, "5g_summary.json")
    summary.write_text(json.dumps(rep.summary(), indent=1, sort_keys=True) + "\n")
    for name, run in rep.runs.items():
        bad = [sid for sid, ok in run.verdicts().items() if ok is False]
        print(f"{name}: (m,k) violations in {bad or 'no stream'}")
    print(f"-> {path}, {summary}")
    return EXIT_OK


def cmd_report(args) -> int:
    out = Path(args.out_dir)
    lines = ["# Study report", ""]
    sched = out / "schedulability.csv"
    if sched.exists():
        lines += ["## Schedulability", "", "| sporadic streams | feasible | primary feasible |",
                  "|---|---|---|"]
        with open(sched) as fh:
            for r in csv.DictReader(fh):
                lines.append(f"| {r['n_sporadic']} | {r['feasible']}/{r['instances']} | "
                             f"{r['primary_feasible']}/{r['instances']} |")
        lines.append("")
    summ = out / "5g_summary.json"
    if summ.exists():
        s = json.loads(summ.read_text())
        lines += ["## 5G-TSN simulation", "",
                  f"{s['cycles']} hypercycles, seed {s['seed']}, unbounded stream "
                  f"`{s['unbounded_stream']}`.", "",
                  "| stream | worst primary | worst augmented | prolongation | "
                  + " | ".join(f"{r} met / mk" for r in s["runs"]) + " |",
                  "|---|---|---|---|" + "---|" * len(s["runs"])]
        for sid in sorted(s["prolongation_ns"]):
            cells = []
            for run in s["runs"].values():
                st = run[sid]
                mk = {True: "ok", False: "VIOLATED", None: "-"}[st["mk_passed"]]
                cells.append(f"{st['met']}/{st['released']} {mk}")
            lines.append(f"| {sid} | {format_duration(s['primary_worst_latency_ns'][sid])} | "
                         f"{format_duration(s['augmented_worst_latency_ns'][sid])} | "
                         f"{format_duration(s['prolongation_ns'][sid])} | " + " | ".join(cells) + " |")
        lines.append("")
    if len(lines) == 2:
        raise ConfigError(f"no study outputs found in {out}")
    path = out / "report.md"
    path.write_text("\n".join(lines))
    print("\n".join(lines))
    return EXIT_OK


COMMANDS = {
    "generate": (cmd_generate, "generate a scenario and write it as JSON"),
    "schedule": (cmd_schedule, "compute the primary schedule"),
    "buckets": (cmd_buckets, "compute per-link token buckets"),
    "augment": (cmd_augment, "augment the primary schedule"),
    "verify": (cmd_verify, "check worst-case latencies of the augmented schedule"),
    "simulate": (cmd_simulate, "simulate the augmented schedule"),
    "study-schedulability": (cmd_study_schedulability, "feasible instances vs sporadic load"),
    "study-5g": (cmd_study_5g, "5G-TSN bounded and unbounded degradation runs"),
    "report": (cmd_report, "summarise study outputs in an out-dir as markdown"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML scenario file (defaults: 3x4 grid)")
    common.add_argument("--seed", type=int, help="overrides the seed in the config")
    common.add_argument("--horizon", type=int, help="simulated hypercycles")
    common.add_argument("--out-dir", default="out", help="output directory (default: out)")
    common.add_argument("--format", choices=("csv", "json-lines"), default="csv")
    common.add_argument("-v", "--verbose", action="store_true")
    p = argparse.ArgumentParser(prog="mkfirm", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, (fn, help_) in COMMANDS.items():
        sp = sub.add_parser(name, parents=[common], help=help_)
        sp.set_defaults(fn=fn)
        if name in ("verify", "simulate"):
            sp.add_argument("--schedule", help="schedule file instead of recomputing")
        if name == "simulate":
            sp.add_argument("--trace", action="store_true", help="also write the event trace")
        if name.startswith("study"):
            sp.add_argument("--workers", type=int, help="worker processes")
        if name == "study-schedulability":
            sp.add_argument("--instances", type=int, help="instances per data point")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except VerificationError as exc:
        print(f"verification failed: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except (InfeasibleSchedule, ScheduleError) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
