import math
from decimal import Decimal

import numpy as np
import pytest

from rangegov.config import DEFAULTS
from rangegov.errors import DataError
from rangegov.model import BAR_SECONDS, Candle4H, RangeDefinition, d12
from rangegov.structure import (
    absorption_footprints, derive_range, map_swings, range_persistence,
    realized_volatility, resolve_range, volume_nodes, wick_to_body,
)

T0 = 1609459200


def bar(i, o, h, lo, c, v="10"):
    return Candle4H(T0 + i * BAR_SECONDS, d12(o), d12(h), d12(lo), d12(c), d12(v))


def flat_bar(i, price, v="10"):
    return bar(i, price, price, price, price, v)


def bars_from_closes(closes, wick=0.0):
    out = []
    prev = closes[0]
    for i, c in enumerate(closes):
        o = prev
        h = max(o, c) * (1 + wick)
        lo = min(o, c) * (1 - wick)
        out.append(bar(i, repr(float(o)), repr(float(h)), repr(float(lo)), repr(float(c))))
        prev = c
    return out


# --- swings ------------------------------------------------------------------

def test_swing_needs_clearance_on_both_sides():
    highs = [100, 101, 102, 103, 104, 110, 104, 103, 102, 101, 100]
    candles = [bar(i, h, h, h - 1, h) for i, h in enumerate(highs)]
    swings = map_swings(candles, lookback=5)
    kinds = {(s.index, s.kind) for s in swings}
    assert (5, "high") in kinds
    assert all(k == "high" or i == 5 for i, k in kinds)


def test_swing_tie_breaks_to_earlier_bar():
    highs = [100, 101, 102, 103, 104, 110, 104, 110, 104, 103, 102, 101, 100]
    candles = [bar(i, h, h, h - 1, h) for i, h in enumerate(highs)]
    swings = [s for s in map_swings(candles, lookback=5) if s.kind == "high"]
    assert [s.index for s in swings] == [5]


def test_swing_ends_excluded():
    highs = [100, 101, 150, 101, 100, 99, 98, 97, 96, 95, 94]
    candles = [bar(i, h, h, h - 1, h) for i, h in enumerate(highs)]
    assert all(s.index != 2 for s in map_swings(candles, lookback=5))


def test_swings_match_window_scan_oracle():
    rng = np.random.default_rng(17)
    closes = 100 * np.exp(np.cumsum(rng.normal(0, 0.01, size=200)))
    candles = []
    for i, c in enumerate(closes):
        h = c * (1 + abs(rng.normal(0, 0.004)))
        lo = c * (1 - abs(rng.normal(0, 0.004)))
        candles.append(bar(i, repr(float(c)), repr(float(h)), repr(float(lo)), repr(float(c))))

    L = 5
    highs = [float(c.high) for c in candles]
    lows = [float(c.low) for c in candles]
    expected = set()
    for i in range(L, len(candles) - L):
        if all(highs[i] > highs[j] for j in range(i - L, i)) and \
           all(highs[i] >= highs[j] for j in range(i + 1, i + L + 1)):
            expected.add((i, "high"))
        if all(lows[i] < lows[j] for j in range(i - L, i)) and \
           all(lows[i] <= lows[j] for j in range(i + 1, i + L + 1)):
            expected.add((i, "low"))
    got = {(s.index, s.kind) for s in map_swings(candles, L)}
    assert got == expected


# --- range construction --------------------------------------------------------

def oscillation(n=40, lo=100.0, hi=104.0, period=8):
    """Closes bouncing between boundaries, extremes touching them."""
    closes = []
    for i in range(n):
        phase = (i % period) / period
        closes.append(lo + (hi - lo) * (0.5 - 0.5 * math.cos(2 * math.pi * phase)))
    candles = []
    prev = closes[0]
    for i, c in enumerate(closes):
        h = max(prev, c)
        l = min(prev, c)
        # touch bars kiss the boundary without closing beyond
        if abs(c - hi) < 0.3:
            h = hi
        if abs(c - lo) < 0.3:
            l = lo
        candles.append(bar(i, repr(prev), repr(h), repr(l), repr(c)))
        prev = c
    return candles


def test_derive_range_finds_boundaries_and_touches():
    candles = oscillation()
    swings = map_swings(candles, 5)
    rng = derive_range(candles, swings)
    assert rng is not None
    assert float(rng.lower) == pytest.approx(100.0, abs=0.5)
    assert float(rng.upper) == pytest.approx(104.0, abs=0.5)
    assert rng.touch_count_lower >= 2 and rng.touch_count_upper >= 2
    assert rng.established_at >= T0


def test_derive_range_rejects_trend():
    candles = bars_from_closes([100 * 1.01 ** i for i in range(40)])
    swings = map_swings(candles, 5)
    assert derive_range(candles, swings) is None


def test_derive_range_rejects_zero_width():
    candles = [flat_bar(i, "100") for i in range(40)]
    swings = map_swings(candles, 5)
    assert derive_range(candles, swings) is None


def test_resolve_range_sees_through_unconfirmed_tail():
    # a short tail cannot form confirmed swings, so the trailing window still
    # derives the oscillation's boundaries
    candles = oscillation(40)
    last = float(candles[-1].close)
    for k in range(5):
        c = last * (1.05 + 0.01 * k)
        candles.append(bar(40 + k, repr(last), repr(c * 1.001), repr(last * 0.999), repr(c)))
        last = c
    resolved = resolve_range(candles)
    assert resolved is not None
    rng, _ = resolved
    assert float(rng.upper) == pytest.approx(104.0, abs=0.5)
    assert float(rng.lower) == pytest.approx(100.0, abs=0.5)


def test_resolve_range_walks_past_confirmed_distorting_swing():
    # the tail forms a confirmed swing high at 110 that only one bar ever
    # touches, so late anchors fail and the walk-back lands on the range
    candles = oscillation(40)
    # (close, explicit high): bar 45 is a wick peak only one bar ever touches
    tail = [(105, None), (106.5, None), (108, None), (109, None), (109.2, None),
            (108.8, 110.0), (107.5, None), (106.8, None), (106.0, None),
            (106.6, None), (107.0, None), (109.0, None)]
    prev = float(candles[-1].close)
    for k, (c, peak) in enumerate(tail):
        high = peak if peak is not None else max(prev, c)
        candles.append(bar(40 + k, repr(prev), repr(float(high)),
                           repr(float(min(prev, c))), repr(float(c))))
        prev = float(c)
    resolved = resolve_range(candles)
    assert resolved is not None
    rng, anchor = resolved
    assert anchor < 50
    assert float(rng.upper) == pytest.approx(104.0, abs=0.5)
    assert float(rng.lower) == pytest.approx(100.0, abs=0.5)


# --- realized volatility -------------------------------------------------------

def test_realized_volatility_alternating_closed_form():
    n, w = 30, 20
    closes = [100.0 * (1.01 if i % 2 else 1.0) for i in range(n)]
    candles = bars_from_closes(closes)
    vol = realized_volatility(candles, window=w)
    assert np.isnan(vol[w - 1]) and not np.isnan(vol[w])
    r = math.log(1.01)
    # alternating +-r with even window: mean 0, sample std r*sqrt(w/(w-1))
    expected = r * math.sqrt(w / (w - 1))
    assert vol[-1] == pytest.approx(expected, rel=1e-12)


def test_realized_volatility_matches_two_pass_oracle():
    rng = np.random.default_rng(23)
    closes = 100 * np.exp(np.cumsum(rng.normal(0, 0.01, size=60)))
    candles = bars_from_closes(list(closes))
    w = 20
    vol = realized_volatility(candles, window=w)
    logs = [math.log(c) for c in closes]
    rets = [b - a for a, b in zip(logs, logs[1:])]
    for t in range(w, len(closes)):
        sample = rets[t - w:t]
        mean = sum(sample) / w
        var = sum((x - mean) ** 2 for x in sample) / (w - 1)
        assert vol[t] == pytest.approx(math.sqrt(var), rel=1e-9)


def test_realized_volatility_scale_invariant():
    closes = [100.0, 101.5, 99.8, 102.2, 101.0] * 6
    a = realized_volatility(bars_from_closes(closes), 20)
    b = realized_volatility(bars_from_closes([c * 1000 for c in closes]), 20)
    assert a[-1] == pytest.approx(b[-1], rel=1e-9)


# --- wicks ---------------------------------------------------------------------

def test_wick_to_body_ratios():
    c = bar(0, "100", "103", "98", "101")
    upper, lower = wick_to_body(c)
    assert upper == pytest.approx(200.0)
    assert lower == pytest.approx(200.0)


def test_wick_to_body_doji_sentinel():
    c = bar(0, "100", "101", "99", "100")
    assert wick_to_body(c) == (None, None)


# --- volume profile -------------------------------------------------------------

def test_volume_nodes_split_proportionally():
    # one candle spanning exactly two 0.5-wide bins (median close 100)
    c = bar(0, "100", "100.75", "99.75", "100", v="8")
    profile = volume_nodes([c])
    assert profile.bin_width == pytest.approx(0.5)
    assert sum(profile.volumes) == pytest.approx(8.0, rel=1e-12)
    assert profile.volumes[0] == pytest.approx(4.0, rel=1e-12)
    assert profile.volumes[1] == pytest.approx(4.0, rel=1e-12)


def test_volume_nodes_degenerate_span_single_bin():
    c = flat_bar(0, "100", v="5")
    profile = volume_nodes([c])
    assert sum(profile.volumes) == pytest.approx(5.0)
    assert len(profile.volumes) == 1


def test_volume_nodes_conserve_total_on_random_panels():
    rng = np.random.default_rng(31)
    for _ in range(20):
        n = int(rng.integers(5, 60))
        closes = 100 * np.exp(np.cumsum(rng.normal(0, 0.02, size=n)))
        candles = []
        for i, c in enumerate(closes):
            h = c * (1 + abs(rng.normal(0, 0.01)))
            lo = c * (1 - abs(rng.normal(0, 0.01)))
            v = abs(rng.normal(50, 20)) + 1
            candles.append(bar(i, repr(float(c)), repr(float(h)), repr(float(lo)),
                               repr(float(c)), repr(float(v))))
        profile = volume_nodes(candles)
        total = sum(float(c.volume) for c in candles)
        assert sum(profile.volumes) == pytest.approx(total, rel=1e-9)


# --- absorption ------------------------------------------------------------------

def test_absorption_inclusive_threshold():
    orders = [(T0, 100.0, "499999.99"), (T0 + 60, 100.0, "500000")]
    events = absorption_footprints(orders)
    assert len(events) == 1 and events[0].size_usd == pytest.approx(500000.0)
    assert events[0].proxy is False


def test_absorption_bar_proxy():
    c = bar(0, "100", "100", "100", "100", v="6000")  # 600k notional
    small = bar(1, "100", "100", "100", "100", v="1000")
    events = absorption_footprints([c, small])
    assert len(events) == 1 and events[0].proxy is True
    assert events[0].size_usd == pytest.approx(600000.0)


# --- persistence ------------------------------------------------------------------

def test_range_persistence_counts_trailing_inside():
    rng = RangeDefinition(d12("100"), d12("104"), T0)
    closes = [102, 103, 105, 102, 101, 103]  # breakout at index 2
    candles = bars_from_closes([float(x) for x in closes])
    assert range_persistence(candles, rng) == 3
    assert range_persistence(bars_from_closes([105.0, 102.0]), rng) == 1
    assert range_persistence(bars_from_closes([102.0, 105.0]), rng) == 0
    # boundary close counts as inside
    assert range_persistence(bars_from_closes([104.0]), rng) == 1
