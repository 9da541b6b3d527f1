from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from helpers import MBIT
from mkfirm.augment_port import (ScheduledTx, SlotTiming, augment_port, elevate_window,
                                 forward_window, overlap_time, surely_ahead, token_catchup)
from mkfirm.core import Link, NetworkGraph, Schedule, ScheduleError, Stream
from mkfirm.sim.engine import Adversary, Simulator
from mkfirm.token_bucket import TokenBucket

MS, US = 1_000_000, 1_000
PORT = Link("B", "D", 100 * MBIT)


def txs_for(specs, period=1 * MS, mu="0"):
    """``specs``: (stream id, pcp, size, open) in slot order."""
    streams, txs = {}, []
    for sid, pcp, size, open_ in specs:
        s = Stream(sid, ("B", "D"), pcp, period, size, period, mu=mu)
        streams[sid] = s
        txs.append(ScheduledTx(s.frame(0), open_, open_ + PORT.ser(size), pcp))
    return streams, txs


def test_zero_bucket_keeps_the_schedule():
    streams, txs = txs_for([("a", 5, 800, 0), ("b", 5, 1600, 20 * US), ("c", 3, 800, 60 * US)])
    aug = augment_port(PORT, txs, TokenBucket(PORT.port, 0), streams)
    for tx, a in zip(txs, aug.txs):
        assert (a.new_open, a.new_close, a.theta) == (tx.open, tx.close, tx.open)
    assert aug.deferments == [0, 0, 0]


def test_single_burst_prolongs_by_drain_time():
    streams, txs = txs_for([("a", 5, 800, 10 * US)])
    tb = TokenBucket(PORT.port, 12_000, Fraction(1))
    a = augment_port(PORT, txs, tb, streams).txs[0]
    # about the serialization of the elevated frame, 120 us
    assert a.theta - a.new_open == tb.burst_time(PORT.rate) == 120_001


def _three_slot_case():
    # F3 (pcp 5), F2 (pcp 4), F4 (pcp 6) back to back, 100 B each
    streams, txs = txs_for([("F3", 5, 800, 0), ("F2", 4, 800, 8_000), ("F4", 6, 800, 16_000)])
    tb = TokenBucket(PORT.port, 800, Fraction(1 * MBIT))
    return streams, txs, tb


def test_three_slots_by_hand():
    streams, txs, tb = _three_slot_case()
    aug = augment_port(PORT, txs, tb, streams)
    burst, catchup = 8_081, 81  # ceil(800/99e6 s), ceil(8 us * 1/99)
    assert tb.burst_time(PORT.rate) == burst
    assert token_catchup(8_000, PORT.rate, tb) == catchup
    f3, f2, f4 = aug.txs
    assert (f3.new_open, f3.theta, f3.new_close) == (0, burst, burst + 8_000)
    # F2 overlaps F3: starts after F3's close plus the tokens refilled meanwhile
    assert (f2.new_open, f2.theta) == (8_000, f3.new_close + catchup)
    # F4 would overtake F2's prolonged slot: deferred to its close
    assert f4.new_open == f2.new_close == 24_162
    assert aug.deferments == [0, 0, f4.new_open - 16_000]
    assert f4.theta == f4.new_open + burst


def test_three_slots_against_port_simulation():
    streams, txs, tb = _three_slot_case()
    aug = augment_port(PORT, txs, tb, streams)
    net = NetworkGraph()
    net.add_vertex("B", "end-device")
    net.add_vertex("D", "end-device")
    net.add_link(PORT)
    sched = Schedule(1 * MS)
    for g in aug.gcl:
        sched.add_gcl(g.port, g.queue, g.start, g.end)
    for a in aug.txs:
        sched.starts[(a.frame.stream, 0, 1)] = a.new_open
    adv = Adversary({PORT.port: tb}, {PORT.port: 800}, greedy=1.0)
    trace = Simulator(net, sched, streams.values(), adversary=adv, seed=3).run(200)
    assert trace.injected[PORT.port]
    for a in aug.txs:
        recs = trace.records[a.frame.stream]
        assert all(r.arrival is not None for r in recs)
        # arrival = start + serialization; the worst start is theta
        worst = max(r.arrival - r.release for r in recs) - PORT.ser(800)
        assert a.new_open <= worst <= a.theta
    # transmission order F3, F2, F4 is kept in every cycle
    for i in range(200):
        order = sorted(streams, key=lambda sid: trace.records[sid][i].arrival)
        assert order == ["F3", "F2", "F4"]


def test_unsorted_input_is_rejected():
    streams, txs = txs_for([("a", 5, 800, 50 * US), ("b", 5, 800, 0)])
    with pytest.raises(ScheduleError):
        augment_port(PORT, txs, TokenBucket(PORT.port, 0), streams)


def test_saturated_bucket_is_rejected():
    streams, txs = txs_for([("a", 5, 800, 0)])
    with pytest.raises(ScheduleError, match="saturates"):
        augment_port(PORT, txs, TokenBucket(PORT.port, 800, Fraction(PORT.rate)), streams)


def test_elevate_window_examples():
    s = Stream("s", ("B", "D"), 5, 20 * MS, 800, 20 * MS, mu="1")
    f = s.frame(0)
    assert elevate_window(f, 10 * MS - 100, 100) == (10 * MS + 1, 20 * MS)
    assert elevate_window(f, 20 * MS - 101, 100) is None
    assert elevate_window(f, 20 * MS - 100, 100) is None


def test_ineligible_frames_get_no_elevate_window():
    streams, txs = txs_for([("a", 5, 800, 0)], mu="0")
    aug = augment_port(PORT, txs, TokenBucket(PORT.port, 800), streams)
    assert [p.action for p in aug.psfp] == ["forward"]
    streams, txs = txs_for([("a", 5, 800, 0)], mu="1")
    aug = augment_port(PORT, txs, TokenBucket(PORT.port, 800), streams)
    # an early window before the forward window, a late one after it
    fwd, early, late = aug.psfp
    assert (fwd.action, early.action, late.action) == ("forward", "elevate", "elevate")
    assert early.start == 0 and early.end == fwd.start and fwd.end == late.start


def test_surely_ahead():
    x = SlotTiming(5, 0, 10, 0, 0, 0, 1)
    assert surely_ahead(x, SlotTiming(5, 11, 20, 0, 0, 0, 1))
    assert not surely_ahead(x, SlotTiming(5, 10, 20, 0, 0, 0, 1))
    t1 = SlotTiming(5, 7, 7, 0, 0, 0, 1, talker=True)
    t2 = SlotTiming(5, 7, 7, 5, 0, 0, 1, talker=True)
    assert surely_ahead(t1, t2)


def test_overlap_time():
    tb = TokenBucket(PORT.port, 0, Fraction(1 * MBIT))
    assert overlap_time(8_000, PORT.rate, tb) == 8_081


slot_specs = st.lists(st.tuples(st.integers(0, 7), st.sampled_from([800, 1600, 12_000]),
                                st.sampled_from([0, 1_000, 8_000, 50_000])),
                      min_size=1, max_size=6)


@settings(max_examples=80, deadline=None)
@given(slot_specs, st.sampled_from([0, 800, 12_000]), st.sampled_from([0, 20_000, 1_000_000]))
def test_port_invariants(specs, b, r):
    t, rows = 0, []
    for i, (pcp, size, gap) in enumerate(specs):
        t += gap
        rows.append((f"s{i}", pcp, size, t))
        t += PORT.ser(size)
    streams, txs = txs_for(rows, period=10 * MS, mu="1")
    tb = TokenBucket(PORT.port, b, Fraction(r))
    aug = augment_port(PORT, txs, tb, streams)
    opens = [a.new_open for a in aug.txs]
    assert opens == sorted(opens)  # transmission order survives
    for tx, a in zip(txs, aug.txs):
        assert a.new_open >= tx.open
        assert a.theta >= a.new_open + tb.burst_time(PORT.rate)
        assert a.new_close == a.theta + PORT.ser(streams[tx.frame.stream].size)
        assert a.earliest <= a.new_open
    for sid, s in streams.items():
        wins = sorted((p.start, p.end) for p in aug.psfp if p.stream == sid)
        fwd = [(p.start, p.end) for p in aug.psfp if p.stream == sid and p.action == "forward"]
        assert len(fwd) == 1
        # windows abut; with the late window present they tile [release, deadline)
        assert all(a[1] == b[0] for a, b in zip(wins, wins[1:]))
        if fwd[0][1] < s.frame(0).deadline:
            assert (wins[0][0], wins[-1][1]) == (0, s.frame(0).deadline)
    if b == 0 and r == 0 and all(g >= 0 for _, _, g in specs):
        assert [a.new_open for a in aug.txs] == [tx.open for tx in txs]


def test_forward_window_formula():
    assert forward_window(100, 150, 8, 8) == (108, 159)
