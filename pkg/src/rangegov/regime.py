"""Regime classification, trigger-matrix synthesis, action and platform
advisories. Everything here is advisory output; nothing places orders."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .config import Config, DEFAULTS
from .errors import InsufficientInputsError
from .hypotheses import CONFIRMED, FALSIFIED, _ols_slope
from .model import Panel, RangeDefinition, d12, funding_by_bar, oi_by_bar
from .positioning import COLLAPSE, ROTATION, classify_oi_event
from .structure import (
    absorption_footprints,
    realized_volatility,
    resolve_range,
    wick_series,
)

ACCUMULATION = "accumulation"
DISTRIBUTION = "distribution"
TRENDING = "trending"
UNCLASSIFIED = "unclassified"

ALIGNED = "aligned"
DIVERGENT = "divergent"
NEUTRAL = "neutral"

CORE_TRIGGERS = ("funding", "shelf_migration", "oi_rotation")


@dataclass(frozen=True)
class RegimeLabel:
    label: str
    evidence: tuple          # (criterion, value, met) triples


@dataclass(frozen=True)
class TriggerMatrix:
    entries: tuple           # (name, state) pairs
    conviction: str          # low | medium | high
    expansion_probability_band: str   # baseline | elevated


def _oi_event_for(panel: Panel, start: int, cfg: Config):
    records = oi_by_bar(panel)[start:]
    if any(r is None for r in records) or len(records) < 2 or \
            float(records[0].oi_usd) == 0:
        return None
    values = [float(r.oi_usd) for r in records]
    shares = [float(r.long_share) if r.long_share is not None else None
              for r in records]
    return classify_oi_event(values, shares, cfg)


def classify_regime(panel: Panel, cfg: Config = DEFAULTS) -> RegimeLabel:
    """Accumulation / distribution / trending over the trailing 20 bars.

    Precedence when several fire: trending > distribution > accumulation.
    """
    n = len(panel.candles)
    w = cfg.regime_window
    if n < w:
        return RegimeLabel(UNCLASSIFIED, (("window", float(n), False),))
    bars = panel.candles[n - w:]
    closes = np.array([float(c.close) for c in bars])
    highs = np.array([float(c.high) for c in bars])
    lows = np.array([float(c.low) for c in bars])
    volumes = np.array([float(c.volume) for c in bars])
    evidence = []

    # shared measurements
    rv = realized_volatility(panel.candles, cfg.realized_vol_window)[n - w:]
    vol_slope = _ols_slope(list(rv))
    volume_slope = _ols_slope(list(volumes))
    oi_records = oi_by_bar(panel)[n - w:]
    oi_vals = [float(r.oi_usd) if r is not None else None for r in oi_records]
    oi_slope = _ols_slope(oi_vals)
    close_slope = _ols_slope(list(closes))
    half = w // 2

    # trending: directional closes plus rotating OI
    moves = np.sign(np.diff(closes))
    nonzero = moves[moves != 0]
    directional = float(max((nonzero > 0).sum(), (nonzero < 0).sum()) / len(moves)) \
        if len(moves) else 0.0
    dir_met = directional >= cfg.trend_directional_frac
    evidence.append(("directional_close_share", directional, dir_met))
    event = _oi_event_for(panel, n - w, cfg)
    rotation_met = event is not None and event.label == ROTATION
    evidence.append(("oi_rotation", None if event is None else event.oi_change_frac,
                     rotation_met))
    if dir_met and rotation_met:
        return RegimeLabel(TRENDING, tuple(evidence))

    # distribution: new highs on falling volume, toppy wicks, OI bleeding out
    new_highs = float(highs[half:].max()) > float(highs[:half].max())
    evidence.append(("new_window_highs", float(highs[half:].max()), new_highs))
    volume_down = volume_slope is not None and volume_slope < 0
    evidence.append(("volume_slope", volume_slope, volume_down))
    ups, _ = wick_series(bars)
    recent_ups = ups[w - cfg.wick_recent_window:]
    wick_rising = bool(np.any(~np.isnan(recent_ups)) and np.any(~np.isnan(ups))
                       and np.nanmean(recent_ups) > np.nanmean(ups))
    evidence.append(("upper_wick_rise", float(np.nanmean(recent_ups))
                     if np.any(~np.isnan(recent_ups)) else None, wick_rising))
    oi_down_price_up = (oi_slope is not None and oi_slope < 0
                        and close_slope is not None and close_slope > 0)
    evidence.append(("oi_decline_despite_strength", oi_slope, oi_down_price_up))
    if new_highs and volume_down and wick_rising and oi_down_price_up:
        return RegimeLabel(DISTRIBUTION, tuple(evidence))

    # accumulation: volatility bleeding off, contracting bars, absorption low
    vol_down = vol_slope is not None and vol_slope < 0
    evidence.append(("volatility_slope", vol_slope, vol_down))
    width_recent = float((highs[half:] - lows[half:]).mean())
    width_prior = float((highs[:half] - lows[:half]).mean())
    contracting = width_recent < width_prior
    evidence.append(("bar_width_contraction", width_recent, contracting))
    resolved = resolve_range(panel.candles, cfg)
    if resolved:
        lo, hi = float(resolved[0].lower), float(resolved[0].upper)
    else:
        lo, hi = float(lows.min()), float(highs.max())
    third = lo + (hi - lo) / 3.0
    absorbed = [e for e in absorption_footprints(bars, cfg=cfg) if e.price <= third]
    evidence.append(("absorption_low_third", float(len(absorbed)), bool(absorbed)))
    if vol_down and contracting and absorbed:
        return RegimeLabel(ACCUMULATION, tuple(evidence))

    return RegimeLabel(UNCLASSIFIED, tuple(evidence))


def build_trigger_matrix(states: dict, cfg: Config = DEFAULTS) -> TriggerMatrix:
    """Synthesize metric alignment states into a conviction call.

    `states` maps metric name to aligned/divergent/neutral (None = not
    evaluated). Needs at least 4 evaluated metrics. The three core expansion
    indicators decide: all aligned = high conviction and an elevated
    probability band; any one divergent caps conviction at low.
    """
    evaluated = {k: v for k, v in states.items() if v is not None}
    if len(evaluated) < cfg.trigger_min_metrics:
        raise InsufficientInputsError(
            "trigger matrix needs >= %d evaluated metrics, got %d"
            % (cfg.trigger_min_metrics, len(evaluated)))
    for name, state in evaluated.items():
        if state not in (ALIGNED, DIVERGENT, NEUTRAL):
            raise ValueError("bad state %r for %s" % (state, name))
    core = [evaluated.get(name) for name in CORE_TRIGGERS]
    if any(state == DIVERGENT for state in core):
        conviction = "low"
    elif all(state == ALIGNED for state in core):
        conviction = "high"
    else:
        conviction = "medium"
    band = "elevated" if conviction == "high" else "baseline"
    entries = tuple(sorted(evaluated.items()))
    return TriggerMatrix(entries, conviction, band)


def assemble_trigger_states(panel: Panel, rng: Optional[RangeDefinition],
                            cfg: Config = DEFAULTS) -> dict:
    """Read the panel into trigger-matrix states.

    funding: moderated toward neutral = aligned, elevated = divergent.
    shelf_migration: depth relocated beyond a boundary = aligned, clustered
    inside = divergent. oi_rotation: rotation = aligned, collapse = divergent.
    volatility_compression and liquidation_cluster round out the matrix.
    """
    from .cost import ELEVATED, NEUTRAL as MAG_NEUTRAL, classify_magnitude
    from .liquidity import shelf_migration
    from .positioning import boundary_cluster_share

    states: dict = {}
    if panel.funding:
        mag = classify_magnitude(panel.funding[-1].rate_8h, cfg)
        states["funding"] = ALIGNED if mag == MAG_NEUTRAL else \
            DIVERGENT if mag == ELEVATED else NEUTRAL
    else:
        states["funding"] = None

    if panel.books and rng is not None:
        mig = shelf_migration(panel.books[-1], rng, cfg)
        states["shelf_migration"] = ALIGNED if (mig.signal_up or mig.signal_down) \
            else DIVERGENT
    else:
        states["shelf_migration"] = None

    event = _oi_event_for(panel, max(0, len(panel.candles) - cfg.regime_window), cfg)
    if event is None:
        states["oi_rotation"] = None
    else:
        states["oi_rotation"] = ALIGNED if event.label == ROTATION else \
            DIVERGENT if event.label == COLLAPSE else NEUTRAL

    n = len(panel.candles)
    rv = realized_volatility(panel.candles, cfg.realized_vol_window)
    slope = _ols_slope(list(rv[max(0, n - cfg.regime_window):]))
    states["volatility_compression"] = None if slope is None else \
        (ALIGNED if slope < 0 else NEUTRAL)

    if panel.liquidations and rng is not None:
        share, clustered = boundary_cluster_share(panel.liquidations, rng, cfg)
        states["liquidation_cluster"] = ALIGNED if clustered else NEUTRAL
    else:
        states["liquidation_cluster"] = None
    return states


def range_position(close, rng: Optional[RangeDefinition],
                   cfg: Config = DEFAULTS) -> str:
    if rng is None:
        return "no-range"
    c = d12(close)
    prox = d12(cfg.position_proximity_frac)
    if abs(c - rng.upper) / rng.upper <= prox or c > rng.upper:
        return "near_upper"
    if abs(c - rng.lower) / rng.lower <= prox or c < rng.lower:
        return "near_lower"
    return "interior"


def recommend_action(regime: RegimeLabel, position: str, funding_state,
                     verdicts: dict, cfg: Config = DEFAULTS) -> dict:
    """Map the joint state onto one of six advisory postures.

    Precedence: confirmed expansion alignment, then cascade/spike fades, then
    boundary fades, then trend following, then standing aside.
    """
    def outcome(h):
        v = verdicts.get(h)
        return v.outcome if v is not None else None

    drag_periods = int(cfg.holding_days * cfg.settlements_per_day)
    rate = abs(float(funding_state.annualized_pct)) / (3 * 365 * 100) \
        if funding_state is not None else 0.0
    drag = rate * drag_periods

    adverse_funding = funding_state is not None and \
        funding_state.magnitude_class == "elevated"

    if outcome("H2") == CONFIRMED:
        action, stop, sizing = ("validate breakout",
                                "inside the prior range",
                                "wait for confirmation, then follow")
    elif outcome("H4") == CONFIRMED and position in ("near_upper", "near_lower"):
        action, stop, sizing = ("fade cascade extreme",
                                "beyond the liquidation cluster",
                                "size for multiple attempts")
    elif outcome("H3") == CONFIRMED:
        action, stop, sizing = ("fade spike toward midpoint",
                                "beyond the spike extreme",
                                "single attempt, quick invalidation")
    elif position in ("near_upper", "near_lower") and adverse_funding \
            and outcome("H1") != FALSIFIED:
        action, stop, sizing = ("fade extreme",
                                "beyond the boundary",
                                "size for multiple attempts")
    elif regime.label == TRENDING or outcome("H1") == FALSIFIED:
        action, stop, sizing = ("follow expansion",
                                "behind the last structural level",
                                "scale in on pullbacks")
    else:
        action, stop, sizing = ("stand aside",
                                "n/a",
                                "wait for alignment at a boundary")
    return {
        "action": action,
        "stop_distance_band": [cfg.stop_band_near, cfg.stop_band_far],
        "stop_placement": stop,
        "sizing_note": sizing,
        "funding_drag_frac": drag,
        "holding_days": cfg.holding_days,
        "regime": regime.label,
        "range_position": position,
        "advisory_only": True,
    }


def percentile_rank(history: Sequence[float], value: float) -> float:
    """Share of history strictly below `value`, in [0, 1]."""
    vals = [v for v in history if v is not None and not math.isnan(v)]
    if len(vals) < 2:
        return 0.0
    below = sum(1 for v in vals if v < value)
    return min(max(below / (len(vals) - 1), 0.0), 1.0)


def advise_platform_parameters(vol_history: Sequence[float],
                               cfg: Config = DEFAULTS) -> dict:
    """Leverage cap scaled 100x down to 20x by the 30-day volatility
    percentile; liquidation mode goes aggressive strictly above the 80th
    percentile of the 90-day distribution."""
    vals = [v for v in vol_history if v is not None and not math.isnan(v)]
    if not vals:
        raise InsufficientInputsError("no volatility history")
    current = vals[-1]
    short = vals[-(cfg.leverage_vol_days * cfg.bars_per_day):]
    long = vals[-(cfg.liq_mode_days * cfg.bars_per_day):]
    rank30 = percentile_rank(short, current)
    rank90 = percentile_rank(long, current)
    leverage = cfg.leverage_max - (cfg.leverage_max - cfg.leverage_min) * rank30
    mode = "aggressive" if rank90 > cfg.liq_mode_pctl else "gradual"
    return {
        "max_leverage": leverage,
        "liquidation_mode": mode,
        "vol_percentile_30d": rank30,
        "vol_percentile_90d": rank90,
        "current_volatility": current,
        "advisory_only": True,
    }


def narrative_filter(panel: Panel, event_time: int, cfg: Config = DEFAULTS) -> dict:
    """Before/after structural diff around an external narrative event.

    Answers whether boundaries, positioning or near-boundary behavior
    actually changed; unchanged structure marks the narrative irrelevant.
    """
    idx = None
    for i, c in enumerate(panel.candles):
        if c.open_time <= event_time < c.open_time + 14400:
            idx = i
            break
    if idx is None or idx < 2 * cfg.swing_lookback + 1:
        return {"relevant": None, "changes": [],
                "note": "event outside the panel or too early to compare"}
    before = Panel(instrument=panel.instrument, candles=panel.candles[:idx],
                   funding=[f for f in panel.funding
                            if f.settle_time <= panel.candles[idx - 1].close_time],
                   open_interest=[r for r in panel.open_interest
                                  if r.time <= panel.candles[idx - 1].close_time])
    changes = []
    rb = resolve_range(before.candles, cfg)
    ra = resolve_range(panel.candles, cfg)
    tol = float(cfg.range_touch_tolerance)
    if (rb is None) != (ra is None):
        changes.append("range resolution changed")
    elif rb and ra:
        for name, a, b in (("lower", rb[0].lower, ra[0].lower),
                           ("upper", rb[0].upper, ra[0].upper)):
            if b > 0 and abs(float(a - b)) / float(b) > tol:
                changes.append("range %s boundary moved" % name)
    oi_before = oi_by_bar(before)[-1] if before.open_interest else None
    oi_after = oi_by_bar(panel)[-1] if panel.open_interest else None
    if oi_before is not None and oi_after is not None and oi_before.oi_usd > 0:
        shift = abs(float(oi_after.oi_usd - oi_before.oi_usd)) / float(oi_before.oi_usd)
        if shift > cfg.oi_collapse_decline:
            changes.append("open interest moved %.1f%%" % (shift * 100))
    return {"relevant": bool(changes), "changes": changes,
            "event_bar": idx, "note": "structural diff at the event bar"}
