"""Periodic gate tables: when can a queue start a transmission of a given
length without the gate closing mid-frame."""

from __future__ import annotations

from bisect import bisect_right


class GateTable:
    """Open intervals of one queue gate, repeated every hypercycle."""

    def __init__(self, intervals: list[tuple[int, int]], H: int):
        self.H = H
        self.always = intervals == [(0, H)]
        spans: list[list[int]] = []
        for k in range(3):
            for s, e in intervals:
                s, e = s + k * H, e + k * H
                if spans and s <= spans[-1][1]:
                    spans[-1][1] = max(spans[-1][1], e)
                else:
                    spans.append([s, e])
        self.spans = spans
        self.ends = [e for _, e in spans]

    def next_start(self, t: int, ser: int) -> int | None:
        """Earliest ``t' >= t`` with the gate open during ``[t', t' + ser)``."""
        if self.always:
            return t
        if not self.spans:
            return None
        base = (t // self.H - 1) * self.H
        tt = t - base
        i = bisect_right(self.ends, tt)
        for s, e in self.spans[i:]:
            st = max(s, tt)
            if st + ser <= e:
                return st + base
        return None
