"""Structural metrics: swing mapping, range construction, volatility,
wick geometry, volume distribution, absorption, persistence."""
from __future__ import annotations

import math
from dataclasses import dataclass
from decimal import Decimal
from typing import Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .config import Config, DEFAULTS
from .errors import DataError
from .model import Candle4H, RangeDefinition, d12


@dataclass(frozen=True)
class SwingPoint:
    index: int
    kind: str          # "high" or "low"
    price: Decimal
    time: int


@dataclass(frozen=True)
class VolumeProfile:
    bin_edges: list    # n_bins + 1 ascending floats
    volumes: list      # n_bins floats, same units as candle volume
    bin_width: float

    @property
    def peak_price(self) -> float:
        i = int(np.argmax(self.volumes))
        return (self.bin_edges[i] + self.bin_edges[i + 1]) / 2


@dataclass(frozen=True)
class AbsorptionEvent:
    time: int
    price: float
    size_usd: float
    proxy: bool        # True when inferred from bar volume, not order flow


def map_swings(candles: Sequence[Candle4H], lookback: int = 5) -> list:
    """Local extremes with `lookback` bars of clearance on each side.

    Strict inequality; equal extremes resolve to the earlier bar. Bars within
    `lookback` of either end can never qualify.
    """
    n = len(candles)
    if lookback < 1:
        raise DataError("lookback must be >= 1")
    if n < 2 * lookback + 1:
        return []
    highs = np.array([float(c.high) for c in candles])
    lows = np.array([float(c.low) for c in candles])
    win_high = sliding_window_view(highs, lookback).max(axis=1)
    win_low = sliding_window_view(lows, lookback).min(axis=1)

    idx = np.arange(lookback, n - lookback)
    is_high = (highs[idx] > win_high[idx - lookback]) & (highs[idx] >= win_high[idx + 1])
    is_low = (lows[idx] < win_low[idx - lookback]) & (lows[idx] <= win_low[idx + 1])

    out = []
    for i in idx[is_high]:
        out.append(SwingPoint(int(i), "high", candles[i].high, candles[i].open_time))
    for i in idx[is_low]:
        out.append(SwingPoint(int(i), "low", candles[i].low, candles[i].open_time))
    out.sort(key=lambda s: (s.index, s.kind))
    return out


def derive_range(candles: Sequence[Candle4H], swings: Sequence[SwingPoint],
                 cfg: Config = DEFAULTS, end: Optional[int] = None):
    """Range over the trailing window ending at bar `end` (default: last).

    Boundaries come from confirmed swing extremes inside the window; each
    boundary needs `range_min_touches` bars whose extreme lands within the
    touch tolerance, and the width must strictly exceed `range_min_width`.
    Returns None when no range validates.
    """
    n = len(candles)
    if end is None:
        end = n - 1
    if end < 0 or end >= n:
        raise DataError("anchor outside the panel")
    start = max(0, end - cfg.range_window + 1)
    confirmed = end - cfg.swing_lookback
    sw_high = [s for s in swings if s.kind == "high" and start <= s.index <= confirmed]
    sw_low = [s for s in swings if s.kind == "low" and start <= s.index <= confirmed]
    if not sw_high or not sw_low:
        return None
    upper = max(s.price for s in sw_high)
    lower = min(s.price for s in sw_low)
    if lower <= 0 or upper <= lower:
        return None
    if upper / lower - 1 <= d12(cfg.range_min_width):
        return None

    tol = d12(cfg.range_touch_tolerance)
    ups = downs = 0
    established_at = None
    for i in range(start, end + 1):
        c = candles[i]
        if abs(c.high - upper) / upper <= tol:
            ups += 1
        if abs(c.low - lower) / lower <= tol:
            downs += 1
        if established_at is None and ups >= cfg.range_min_touches \
                and downs >= cfg.range_min_touches:
            established_at = c.open_time
    if established_at is None:
        return None
    return RangeDefinition(lower=lower, upper=upper, established_at=established_at,
                           touch_count_lower=downs, touch_count_upper=ups)


def resolve_range(candles: Sequence[Candle4H], cfg: Config = DEFAULTS):
    """Most recent anchor where a range derives, walking back from the end.

    Evaluation tails (taps, breakouts) legitimately distort trailing swing
    extremes, so the established structure is the latest one that validates.
    Returns (range, anchor_index) or None.
    """
    swings = map_swings(candles, cfg.swing_lookback)
    for end in range(len(candles) - 1, 2 * cfg.swing_lookback, -1):
        rng = derive_range(candles, swings, cfg, end=end)
        if rng is not None:
            return rng, end
    return None


def realized_volatility(candles: Sequence[Candle4H], window: int = 20) -> np.ndarray:
    """Rolling sample std of log close returns; NaN until enough history."""
    if window < 2:
        raise DataError("window must be >= 2")
    closes = np.array([float(c.close) for c in candles])
    n = len(closes)
    out = np.full(n, np.nan)
    if n < window + 1:
        return out
    rets = np.diff(np.log(closes))
    stds = sliding_window_view(rets, window).std(axis=1, ddof=1)
    out[window:] = stds
    return out


def wick_to_body(candle: Candle4H):
    """(upper, lower) wick-to-body ratios in percent; None/None on dojis."""
    body = abs(candle.close - candle.open)
    if candle.close <= 0 or body / candle.close < Decimal("1e-9"):
        return None, None
    upper = float((candle.high - max(candle.open, candle.close)) / body) * 100.0
    lower = float((min(candle.open, candle.close) - candle.low) / body) * 100.0
    return upper, lower


def wick_series(candles: Sequence[Candle4H]):
    """Per-bar (upper, lower) arrays with NaN at dojis."""
    ups = np.full(len(candles), np.nan)
    downs = np.full(len(candles), np.nan)
    for i, c in enumerate(candles):
        u, lo = wick_to_body(c)
        if u is not None:
            ups[i], downs[i] = u, lo
    return ups, downs


def volume_nodes(candles: Sequence[Candle4H], window: Optional[int] = None,
                 cfg: Config = DEFAULTS) -> VolumeProfile:
    """Volume by price bin over the trailing window.

    Bin width is `volume_bin_frac` of the window's median close; each bar's
    volume spreads uniformly over its low..high span.
    """
    bars = list(candles[-window:]) if window else list(candles)
    if not bars:
        raise DataError("no candles for volume profile")
    closes = np.array([float(c.close) for c in bars])
    width = float(np.median(closes)) * cfg.volume_bin_frac
    if width <= 0:
        raise DataError("degenerate bin width")
    lo = min(float(c.low) for c in bars)
    hi = max(float(c.high) for c in bars)
    n_bins = max(1, math.ceil((hi - lo) / width)) if hi > lo else 1
    edges = [lo + k * width for k in range(n_bins + 1)]
    volumes = [0.0] * n_bins

    def bin_of(price: float) -> int:
        k = int((price - lo) // width)
        return min(max(k, 0), n_bins - 1)

    for c in bars:
        vol = float(c.volume)
        if vol == 0:
            continue
        b_lo, b_hi = float(c.low), float(c.high)
        span = b_hi - b_lo
        if span <= 0:
            volumes[bin_of(b_lo)] += vol
            continue
        for k in range(bin_of(b_lo), bin_of(b_hi) + 1):
            seg = min(b_hi, edges[k + 1]) - max(b_lo, edges[k])
            if seg > 0:
                volumes[k] += vol * (seg / span)
    return VolumeProfile(bin_edges=edges, volumes=volumes, bin_width=width)


def absorption_footprints(data: Sequence, min_usd: Optional[float] = None,
                          cfg: Config = DEFAULTS) -> list:
    """Large resting-order executions.

    With per-order rows (time, price, usd) the threshold applies directly;
    with candles, bar volume x typical price stands in and events are marked
    as proxies. Threshold is inclusive.
    """
    limit = d12(min_usd if min_usd is not None else cfg.absorption_min_usd)
    out = []
    for row in data:
        if isinstance(row, Candle4H):
            notional = row.volume * row.typical
            if notional >= limit:
                out.append(AbsorptionEvent(row.open_time, float(row.typical),
                                           float(notional), proxy=True))
        else:
            time, price, usd = row
            if d12(usd) >= limit:
                out.append(AbsorptionEvent(int(time), float(price), float(usd),
                                           proxy=False))
    return out


def range_persistence(candles: Sequence[Candle4H], rng: RangeDefinition) -> int:
    """Trailing run of closes inside [lower, upper] (inclusive)."""
    count = 0
    for c in reversed(candles):
        if rng.lower <= c.close <= rng.upper:
            count += 1
        else:
            break
    return count
