import csv
import io
from collections import Counter
from pathlib import Path

import pytest

from helpers import MBIT, line_network, line_route
from mkfirm.augment_multihop import augment_multihop, verify_latency
from mkfirm.core import Link, MuPattern, NetworkGraph, Stream
from mkfirm.harness.cli import main
from mkfirm.harness.config import ConfigError, build_config, load_config
from mkfirm.harness.io import (load_scenario, read_schedule, save_scenario, schedule_text,
                               scenario_to_dict)
from mkfirm.harness.scenario import (MuRequest, choose_mu_patterns, generate_scenario,
                                     shortest_route)
from mkfirm.harness.scheduler import InfeasibleSchedule, list_schedule, schedule_primary
from mkfirm.harness.studies import (VERDICTS, frame_verdict, run_schedulability_study,
                                    write_rows)
from mkfirm.weakly_hard import MkRequirement

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
US, MS = 1_000, 1_000_000


# ----------------------------------------------------------- scenarios


def test_grid_scenario_shape():
    sc = generate_scenario(load_config(CONFIGS / "grid.yaml"))
    assert len(sc.streams) == 24
    assert {s.period for s in sc.streams} <= {200 * US, 400 * US}
    assert all(s.size == 800 for s in sc.streams)
    assert all(s.latency in (s.period // 2, s.period * 3 // 4, s.period) for s in sc.streams)
    for s in sc.streams:
        sc.network.check_route(s.route)
        # BFS routes on the grid are shortest: Manhattan distance plus the two access links
        (r0, c0), (r1, c1) = (map(int, v[1:].split("_")) for v in (s.route[0], s.route[-1]))
        assert len(s.hops) == abs(r0 - r1) + abs(c0 - c1) + 2


def test_full_5g_scenario_shape():
    sc = generate_scenario(load_config(CONFIGS / "5g_full.yaml"))
    kinds = Counter(sc.direction.values())
    assert kinds == {"wired": 20, "uplink": 40, "downlink": 40}
    wired = [s for s in sc.streams if sc.direction[s.id] == "wired"]
    assert all((s.period, s.latency, str(s.mu)) == (5 * MS, 500 * US, "1") for s in wired)
    wl = [s for s in sc.streams if sc.direction[s.id] != "wired"]
    assert all(s.period == s.latency == 20 * MS for s in wl)
    assert {str(s.mu) for s in wl} == {"0", "001", "010", "100"}
    # every wireless stream crosses exactly one 5G hop
    for s in wl:
        assert sum(sc.network.link(*p).kind == "wireless" for p in s.hops) == 1


@pytest.mark.parametrize("name", ["grid.yaml", "5g_desk.yaml"])
def test_same_seed_same_scenario(name):
    cfg = load_config(CONFIGS / name)
    assert scenario_to_dict(generate_scenario(cfg)) == scenario_to_dict(generate_scenario(cfg))


def test_different_seeds_differ():
    cfg = load_config(CONFIGS / "grid.yaml")
    a = scenario_to_dict(generate_scenario(cfg, 1))
    b = scenario_to_dict(generate_scenario(cfg, 2))
    assert a["streams"] != b["streams"]


def test_shortest_route_tie_break():
    net = NetworkGraph()
    for v in ("A", "B", "C", "D"):
        net.add_vertex(v, "bridge")
    for u, v in (("A", "C"), ("A", "B"), ("B", "D"), ("C", "D")):
        net.add_duplex(u, v, MBIT)
    assert shortest_route(net, "A", "D") == ("A", "B", "D")


def test_shortest_route_skips_end_devices():
    net = NetworkGraph()
    net.add_vertex("B", "bridge")
    for v in ("E", "X", "Y"):
        net.add_vertex(v, "end-device")
    net.add_duplex("X", "E", MBIT)
    net.add_duplex("E", "Y", MBIT)
    with pytest.raises(Exception, match="unreachable"):
        shortest_route(net, "X", "Y")


# ------------------------------------------------------------ mu choice


def _reqs(n, pool, period=20 * MS):
    return [MuRequest(f"s{i}", period, tuple(pool)) for i in range(n)]


def test_six_streams_spread_evenly():
    got = choose_mu_patterns(_reqs(6, ["001", "010", "100"]))
    assert Counter(str(p) for p in got.values()) == {"001": 2, "010": 2, "100": 2}


def test_single_stream_gets_first_entry():
    assert choose_mu_patterns(_reqs(1, ["010", "100"])) == {"s0": MuPattern.parse("010")}


def test_three_streams_two_patterns():
    counts = Counter(str(p) for p in choose_mu_patterns(_reqs(3, ["01", "10"])).values())
    assert max(counts.values()) - min(counts.values()) <= 1


def test_round_robin_is_per_period_class():
    reqs = _reqs(2, ["01", "10"]) + [MuRequest("t", 5 * MS, ("01", "10"))]
    got = choose_mu_patterns(reqs)
    assert str(got["t"]) == "01"


def test_pool_violating_requirement_is_rejected():
    with pytest.raises(ValueError, match="violates"):
        choose_mu_patterns([MuRequest("s", MS, ("001", "011"), MkRequirement(2, 3))])
    with pytest.raises(ValueError):
        choose_mu_patterns([MuRequest("s", MS, ())])


# ------------------------------------------------------------ scheduler


def _two_hop(n_talkers=1):
    net = NetworkGraph()
    net.add_vertex("B", "bridge")
    net.add_vertex("L", "end-device")
    net.add_link(Link("B", "L", 100 * MBIT))
    for i in range(n_talkers):
        net.add_vertex(f"T{i}", "end-device")
        net.add_link(Link(f"T{i}", "B", 100 * MBIT))
    return net


def test_single_stream_starts_at_release():
    net = _two_hop()
    s = Stream("a", ("T0", "B", "L"), 5, 1 * MS, 800, 1 * MS, phase=100 * US)
    res = schedule_primary(net, [s])
    assert res.schedule.starts[("a", 0, 1)] == 100 * US
    assert res.schedule.starts[("a", 0, 2)] == 100 * US + 8 * US


def test_colliding_same_pcp_streams_are_serialised():
    net = _two_hop(2)
    a = Stream("a", ("T0", "B", "L"), 5, 1 * MS, 800, 1 * MS)
    b = Stream("b", ("T1", "B", "L"), 5, 1 * MS, 800, 1 * MS)
    starts = list_schedule(net, [a, b])
    first, second = sorted([starts[("a", 0, 2)], starts[("b", 0, 2)]])
    assert second == first + net.link("B", "L").dmax(800)


def test_higher_pcp_goes_first():
    net = _two_hop(2)
    lo = Stream("a", ("T0", "B", "L"), 3, 1 * MS, 800, 1 * MS)
    hi = Stream("b", ("T1", "B", "L"), 6, 1 * MS, 800, 1 * MS)
    starts = list_schedule(net, [lo, hi])
    assert starts[("b", 0, 2)] < starts[("a", 0, 2)]


def test_grid_primary_is_feasible_with_zero_buckets():
    sc = generate_scenario(load_config(CONFIGS / "grid.yaml"))
    res = schedule_primary(sc.network, sc.streams)
    again = augment_multihop(res.graph, {})
    assert again.starts == res.schedule.starts
    assert verify_latency(res.schedule, res.graph).passed


def test_infeasible_names_first_failing_stream():
    net = _two_hop(3)
    # three 1500 B frames, 120 us per hop: the third arrives at 480 us
    streams = [Stream(f"s{i}", (f"T{i}", "B", "L"), 5, 1 * MS, 12_000, 400 * US) for i in range(3)]
    with pytest.raises(InfeasibleSchedule) as err:
        schedule_primary(net, streams)
    assert err.value.stream == "s2"


# ------------------------------------------------------- schedulability


@pytest.fixture(scope="module")
def sched_rows():
    cfg = load_config(CONFIGS / "grid.yaml")
    return run_schedulability_study(cfg, instances=8, counts=[0, 2, 4, 8, 16])


def test_no_sporadics_matches_primary_count(sched_rows):
    assert sched_rows[0].n_sporadic == 0
    assert sched_rows[0].feasible == sched_rows[0].primary_feasible


def test_feasible_count_is_monotone(sched_rows):
    counts = [r.feasible for r in sched_rows]
    assert counts == sorted(counts, reverse=True)
    assert all(r.instances == 8 for r in sched_rows)


def test_tiny_instance_is_always_feasible():
    cfg = build_config({"topology": {"rows": 1, "cols": 2}, "streams": {"isochronous": 2}})
    rows = run_schedulability_study(cfg, instances=100, counts=[0])
    assert (rows[0].feasible, rows[0].instances) == (100, 100)


def test_schedulability_is_deterministic():
    cfg = build_config({"topology": {"rows": 2, "cols": 2}, "streams": {"isochronous": 6}})
    assert (run_schedulability_study(cfg, instances=4, counts=[0, 3])
            == run_schedulability_study(cfg, instances=4, counts=[0, 3]))


# --------------------------------------------------------------- verdicts


@pytest.mark.parametrize("release, arrival, elevated, verdict", [
    (0, 19 * MS, False, "met"),
    (0, 19 * MS, True, "elevated+met"),
    (0, 20 * MS, False, "late"),
    (0, None, True, "discarded"),
])
def test_frame_verdict(release, arrival, elevated, verdict):
    assert frame_verdict(release, arrival, 20 * MS, elevated) == verdict
    assert verdict in VERDICTS


def test_write_rows_formats():
    buf = io.StringIO()
    write_rows(buf, ("a", "b"), [(1, None), (2, 3)])
    assert buf.getvalue() == "a,b\n1,\n2,3\n"
    buf = io.StringIO()
    write_rows(buf, ("a", "b"), [(1, None)], "json-lines")
    assert buf.getvalue() == '{"a": 1, "b": null}\n'


# --------------------------------------------------------------------- io


def test_schedule_text_round_trip():
    net = line_network(3)
    streams = [Stream("f", line_route(0, 2), 5, 500 * US, 800, 500 * US, mu="01"),
               Stream("g", line_route(2, 0), 6, 250 * US, 800, 250 * US)]
    res = schedule_primary(net, streams)
    text = schedule_text(res.schedule)
    back = read_schedule(io.StringIO(text))
    assert schedule_text(back) == text
    assert back.starts == res.schedule.starts


def test_schedule_reader_reports_line():
    with pytest.raises(ValueError, match="line 2"):
        read_schedule(io.StringIO("hypercycle 100\ngcl A B x 0 10\n"))


def test_scenario_json_round_trip(tmp_path):
    sc = generate_scenario(load_config(CONFIGS / "5g_desk.yaml"))
    save_scenario(sc, tmp_path / "sc.json")
    back = load_scenario(tmp_path / "sc.json")
    assert scenario_to_dict(back) == scenario_to_dict(sc)


# ----------------------------------------------------------------- config


@pytest.mark.parametrize("raw, msg", [
    ({"topology": {"kind": "ring"}}, "unknown topology"),
    ({"streams": {"bogus": 1}}, "unknown config key"),
    ({"streams": {"periods": ["200 furlongs"]}}, "periods"),
    ({"streams": {"latency_factors": [1.5]}}, "latency factors"),
    ({"topology": {"kind": "5g"}, "streams": {"mu_pool": [1]}}, "quoted"),
    ({"topology": {"kind": "5g"}, "streams": {"mu_pool": ["012"]}}, "mu-pattern"),
    ({"simulation": {"horizon": 0}}, "horizon"),
])
def test_config_errors(raw, msg):
    with pytest.raises(ConfigError, match=msg):
        build_config(raw)


def test_unquoted_pattern_in_yaml(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("topology: {kind: 5g}\nstreams: {mu_pool: [001, 010]}\n")
    with pytest.raises(ConfigError, match="quoted"):
        load_config(p)


def test_seed_argument_overrides_file(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("seed: 7\n")
    assert load_config(p).seed == 7
    assert load_config(p, seed=3).seed == 3


# -------------------------------------------------------------------- CLI


def test_cli_pipeline(tmp_path):
    out = str(tmp_path)
    base = ["--config", str(CONFIGS / "grid.yaml"), "--out-dir", out]
    for cmd in ("generate", "schedule", "buckets", "augment", "verify"):
        assert main([cmd, *base]) == 0
    assert main(["verify", *base, "--schedule", str(tmp_path / "augmented.sched")]) == 0
    assert main(["simulate", *base, "--horizon", "20"]) == 0
    with open(tmp_path / "sim_stats.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 24 and all(r["met"] == r["released"] for r in rows)


def test_cli_study_and_report(tmp_path):
    out = str(tmp_path)
    assert main(["study-schedulability", "--config", str(CONFIGS / "grid.yaml"), "--out-dir", out,
                 "--instances", "2", "--format", "csv"]) == 0
    assert main(["report", "--out-dir", out]) == 0
    assert "Schedulability" in (tmp_path / "report.md").read_text()


def test_cli_infeasible_exit_code(tmp_path):
    p = tmp_path / "c.yaml"
    # 1 us deadlines cannot be met
    p.write_text("streams: {periods: [200us], latency_factors: [0.005]}\n")
    assert main(["schedule", "--config", str(p), "--out-dir", str(tmp_path)]) == 2


def test_cli_verification_failure_exit_code(tmp_path):
    # a primary schedule checked against the real buckets: prolongation is missing
    out = str(tmp_path)
    p = tmp_path / "c.yaml"
    p.write_text("streams: {sporadic: 16}\n")
    cfg = ["--config", str(p), "--out-dir", out]
    assert main(["schedule", *cfg]) == 0
    assert main(["verify", *cfg, "--schedule", str(tmp_path / "primary.sched")]) == 3


def test_cli_config_error_exit_code(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("streams: {typo: 1}\n")
    assert main(["generate", "--config", str(p), "--out-dir", str(tmp_path)]) == 4
    assert main(["generate", "--config", str(tmp_path / "missing.yaml")]) == 4
    assert main(["simulate", "--horizon", "0", "--out-dir", str(tmp_path)]) == 4
