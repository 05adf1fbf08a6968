"""Threshold configuration.

Every numeric threshold the metric, hypothesis and advisory layers consume
lives here under a name that states which rule it bounds. Defaults are the
published reference values; overrides come from a JSON file (CLI --config or
the RG_CONFIG environment variable) with exactly these keys.
"""
from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass

from .errors import SchemaError


@dataclass(frozen=True)
class Config:
    # funding (8H basis, fractions per period)
    funding_elevated_abs: float = 0.0005       # |rate| above this is elevated
    funding_neutral_abs: float = 0.0001        # |rate| below this is neutral
    funding_periods_per_year: int = 1095       # 3 settlements/day x 365
    settlements_per_day: int = 3
    funding_bias_min_periods: int = 3          # consecutive same-sign settlements
    funding_spike_sigma: float = 2.0
    funding_spike_lookback: int = 30           # settlements, strictly before t
    funding_spike_sigma_floor: float = 1e-6
    basis_dislocation_abs: float = 0.005       # |(perp-spot)/spot| beyond this dislocates
    cumulative_short_days: int = 7
    cumulative_long_days: int = 30

    # open interest / positioning
    oi_baseline_days: int = 90                 # moving-average window for "elevated"
    oi_rotation_mix_shift: float = 0.05        # long-share shift, 5 percentage points
    oi_collapse_decline: float = 0.05          # total OI decline beyond this collapses
    oi_rotation_vol_floor: float = 1e-6
    long_short_extreme_high: float = 2.0       # ratio strictly above -> extreme
    long_short_extreme_low: float = 0.5        # ratio strictly below -> extreme
    gini_risk_threshold: float = 0.7
    kde_bandwidth_frac: float = 0.01           # of size-weighted mean event price
    boundary_cluster_min_share: float = 0.30
    boundary_cluster_distance: float = 0.02    # relative distance to a boundary

    # structural
    swing_lookback: int = 5                    # bars each side
    volume_bin_frac: float = 0.005             # of window median close
    absorption_min_usd: float = 500000.0
    realized_vol_window: int = 20              # log returns per estimate
    wick_baseline_window: int = 20
    wick_recent_window: int = 5
    range_window: int = 30                     # bars considered by derive_range
    range_touch_tolerance: float = 0.005
    range_min_touches: int = 2
    range_min_width: float = 0.001             # upper/lower - 1 must exceed this

    # hypothesis evaluators
    h1_signal_quorum: int = 3                  # of the three compression signals
    h1_tap_oi_drop_limit: float = 0.05         # OI drop on a failed tap stays under this
    h2_funding_moderation_abs: float = 0.0001
    h2_premoderation_bars: int = 3             # bars before breakout checked for moderation
    h2_shelf_migration_share: float = 0.20
    h2_rotation_window: int = 20               # bars for the rotation/collapse split
    h2_sustain_closes: int = 3                 # post-break closes that must hold
    h3_reversion_max_bars: int = 4
    h3_reversion_sigma: float = 1.0            # corridor width in realized-vol units
    h3_structural_closes: int = 2              # consecutive closes outside void the setup
    h4_recoil_frac: float = 0.5                # of the boundary excursion, strictly more
    h4_funding_decline_frac: float = 0.20
    h4_funding_decline_bars: int = 2
    h4_hit_rate_min: float = 0.5               # tap hit rate strictly above -> confirmed

    # liquidity
    depth_pctl_low: float = 0.25
    depth_pctl_high: float = 0.75
    depth_extreme_band: float = 0.005          # around each boundary, inclusive
    depth_trend_snapshots: int = 20
    slippage_order_usd: float = 1000000.0
    imbalance_depth_levels: int = 20
    imbalance_extreme: float = 0.3             # dominant-side ratio minus 1, strict
    impact_window_bars: int = 6                # 24h of 4H bars
    impact_band_low: float = 0.0001            # healthy regression-slope band
    impact_band_high: float = 0.001
    spread_uncertainty: float = 0.001          # spread fraction strictly above flags

    # quality
    timestamp_tolerance_s: int = 30
    price_mad_scale: float = 1.4826
    price_mad_sigma: float = 2.0
    price_degenerate_tol: float = 0.001        # fallback when MAD = 0
    volume_deviation_frac: float = 0.30
    funding_hard_bound: float = 0.0375         # |rate_8h| at or past this rejects
    book_spread_exclusion: float = 0.01
    oi_flow_discrepancy: float = 0.05
    max_interpolation_gap: int = 1             # single missing bars only
    wash_volume_mult: float = 5.0
    wash_volume_window: int = 20
    wash_body_frac: float = 0.0005

    # regime / advisory
    regime_window: int = 20
    trend_directional_frac: float = 0.60
    trigger_min_metrics: int = 4
    position_proximity_frac: float = 0.01      # "near boundary" band
    stop_band_near: float = 0.01
    stop_band_far: float = 0.02
    leverage_max: float = 100.0
    leverage_min: float = 20.0
    leverage_vol_days: int = 30                # percentile window for the leverage scale
    liq_mode_days: int = 90                    # distribution for the liquidation-mode cut
    liq_mode_pctl: float = 0.80                # strictly above -> aggressive
    holding_days: float = 10.0                 # advisory funding-drag horizon
    bars_per_day: int = 6

    # ingest
    merge_top_exchanges: int = 3

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **overrides) -> "Config":
        bad = set(overrides) - {f.name for f in dataclasses.fields(self)}
        if bad:
            raise SchemaError(f"unknown config keys: {sorted(bad)}")
        return dataclasses.replace(self, **overrides)


DEFAULTS = Config()


def from_dict(overrides: dict) -> Config:
    if not isinstance(overrides, dict):
        raise SchemaError("config overrides must be a JSON object")
    return DEFAULTS.replace(**overrides)


def load(path: str) -> Config:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"cannot read config {path}: {exc}") from exc
    return from_dict(data)


def from_env(explicit_path: str | None = None) -> Config:
    """Resolve config: explicit path wins, then RG_CONFIG, then defaults."""
    path = explicit_path or os.environ.get("RG_CONFIG")
    return load(path) if path else DEFAULTS
