"""Funding-side cost metrics on the normalized 8H basis."""
from __future__ import annotations

from dataclasses import dataclass
from decimal import Decimal
from typing import Optional, Sequence

import numpy as np

from .config import Config, DEFAULTS
from .ingestion import annualize_funding, cumulative_funding
from .model import d12

ELEVATED = "elevated"
NORMAL = "normal"
NEUTRAL = "neutral"


@dataclass(frozen=True)
class FundingState:
    bias_sign: str           # positive | negative | neutral
    bias_duration: int       # consecutive same-sign settlements at the end
    magnitude_class: str
    annualized_pct: float
    cumulative_7d: Optional[float]   # None when history is shorter than the window
    cumulative_30d: Optional[float]


def funding_bias_duration(rates: Sequence) -> list:
    """Run length of strictly same-sign settlements; zero rates reset."""
    out = []
    run = 0
    prev_sign = 0
    for r in rates:
        value = d12(r)
        sign = 1 if value > 0 else -1 if value < 0 else 0
        if sign == 0:
            run = 0
        elif sign == prev_sign:
            run += 1
        else:
            run = 1
        prev_sign = sign
        out.append(run)
    return out


def classify_magnitude(rate, cfg: Config = DEFAULTS) -> str:
    value = abs(d12(rate))
    if value > d12(cfg.funding_elevated_abs):
        return ELEVATED
    if value < d12(cfg.funding_neutral_abs):
        return NEUTRAL
    return NORMAL


def funding_spike(rates: Sequence, cfg: Config = DEFAULTS) -> list:
    """Per-settlement spike flags vs the trailing window, which sits strictly
    before the tested value. None until enough history."""
    look = cfg.funding_spike_lookback
    values = np.array([float(d12(r)) for r in rates])
    out: list = [None] * len(values)
    for t in range(look, len(values)):
        window = values[t - look:t]
        mean = window.mean()
        std = max(window.std(ddof=1), cfg.funding_spike_sigma_floor)
        out[t] = bool(abs(values[t] - mean) > cfg.funding_spike_sigma * std)
    return out


def build_funding_state(records: Sequence, cfg: Config = DEFAULTS) -> Optional[FundingState]:
    if not records:
        return None
    rates = [r.rate_8h for r in records]
    last = rates[-1]
    durations = funding_bias_duration(rates)
    per_day = cfg.settlements_per_day

    def cum(days: int) -> Optional[float]:
        window = days * per_day
        if window > len(rates):
            return None
        return float(cumulative_funding(rates, window))

    return FundingState(
        bias_sign="positive" if last > 0 else "negative" if last < 0 else "neutral",
        bias_duration=durations[-1],
        magnitude_class=classify_magnitude(last, cfg),
        annualized_pct=float(annualize_funding(last)),
        cumulative_7d=cum(cfg.cumulative_short_days),
        cumulative_30d=cum(cfg.cumulative_long_days),
    )
