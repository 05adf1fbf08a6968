import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rangegov.config import DEFAULTS
from rangegov.cost import (
    ELEVATED,
    NEUTRAL,
    NORMAL,
    build_funding_state,
    classify_magnitude,
    funding_bias_duration,
    funding_spike,
)
from rangegov.model import FundingRecord, SETTLE_SECONDS, d12


def records(rates, start=0):
    return [FundingRecord(settle_time=start + i * SETTLE_SECONDS, rate_8h=d12(r))
            for i, r in enumerate(rates)]


class TestBiasDuration:
    def test_run_length_counting(self):
        assert funding_bias_duration([0.0001, 0.0002, 0.0003, -0.0001]) == [1, 2, 3, 1]

    def test_all_zeros_stay_neutral(self):
        assert funding_bias_duration([0, 0, 0]) == [0, 0, 0]

    def test_zero_resets_a_run(self):
        assert funding_bias_duration([0.0001, 0, 0.0001]) == [1, 0, 1]

    def test_sign_flip_resets(self):
        assert funding_bias_duration([-0.1, -0.1, 0.2, -0.3]) == [1, 2, 1, 1]

    @given(st.lists(st.sampled_from([-0.0004, 0.0, 0.0003]), max_size=40),
           st.floats(min_value=0.01, max_value=100.0))
    def test_scale_invariance(self, rates, k):
        scaled = [r * k for r in rates]
        assert funding_bias_duration(rates) == funding_bias_duration(scaled)


class TestMagnitude:
    def test_elevated(self):
        assert classify_magnitude(0.0006) == ELEVATED
        assert classify_magnitude(-0.0006) == ELEVATED

    def test_neutral(self):
        assert classify_magnitude(0.00005) == NEUTRAL

    def test_normal_between(self):
        assert classify_magnitude(0.0003) == NORMAL

    def test_boundaries_are_strict(self):
        # exactly at a threshold falls in the middle class
        assert classify_magnitude(0.0005) == NORMAL
        assert classify_magnitude(0.0001) == NORMAL

    @given(st.floats(min_value=0, max_value=0.01),
           st.floats(min_value=0, max_value=0.01))
    def test_monotone_in_abs_rate(self, a, b):
        lo, hi = sorted([a, b])
        order = {NEUTRAL: 0, NORMAL: 1, ELEVATED: 2}
        assert order[classify_magnitude(lo)] <= order[classify_magnitude(hi)]


class TestSpike:
    def test_short_history_not_evaluated(self):
        flags = funding_spike([0.0001] * 29)
        assert flags == [None] * 29

    def test_constant_then_jump_is_flagged(self):
        rates = [0.0001] * 30 + [0.01]
        flags = funding_spike(rates)
        assert flags[:30] == [None] * 30
        assert flags[30] is True

    def test_constant_series_never_flags_itself(self):
        flags = funding_spike([0.0002] * 40)
        assert all(f is False for f in flags[30:])

    def test_window_sits_strictly_before_the_tested_value(self):
        # jump at 30 must not contaminate its own window
        rates = [0.0001] * 30 + [0.01, 0.0001]
        flags = funding_spike(rates)
        assert flags[30] is True

    def test_iid_noise_flag_rate_near_tail_expectation(self):
        rng = np.random.default_rng(7)
        rates = rng.normal(0.0, 1e-4, size=3000).tolist()
        flags = funding_spike(rates)
        evaluated = [f for f in flags if f is not None]
        rate = sum(evaluated) / len(evaluated)
        # two-sided 2-sigma tail of a normal is ~4.6%; sample-std windows widen it a bit
        assert 0.02 < rate < 0.10

    @given(st.lists(st.floats(min_value=-0.001, max_value=0.001), min_size=32, max_size=40),
           st.floats(min_value=-0.01, max_value=0.01))
    @settings(max_examples=30)
    def test_translation_invariance(self, rates, shift):
        base = funding_spike(rates)
        moved = funding_spike([r + shift for r in rates])
        assert base == moved


class TestFundingState:
    def test_empty_history(self):
        assert build_funding_state([]) is None

    def test_composed_fields(self):
        rates = [0.0] * 3 + [0.0008] * 90
        state = build_funding_state(records(rates))
        assert state.bias_sign == "positive"
        assert state.bias_duration == 90
        assert state.magnitude_class == ELEVATED
        assert state.annualized_pct == pytest.approx(87.6, rel=1e-9)
        assert state.cumulative_7d == pytest.approx(21 * 0.0008, rel=1e-9)
        assert state.cumulative_30d == pytest.approx(90 * 0.0008, rel=1e-9)

    def test_windows_longer_than_history_are_omitted(self):
        state = build_funding_state(records([0.0002] * 30))
        assert state.cumulative_7d == pytest.approx(21 * 0.0002, rel=1e-9)
        assert state.cumulative_30d is None

    def test_negative_bias(self):
        state = build_funding_state(records([-0.0003, -0.0002]))
        assert state.bias_sign == "negative"
        assert state.bias_duration == 2
        assert state.magnitude_class == NORMAL

    def test_zero_last_rate_is_neutral(self):
        state = build_funding_state(records([0.0004, 0.0]))
        assert state.bias_sign == "neutral"
        assert state.bias_duration == 0

    def test_duration_at_least_one_when_signed(self):
        for rates in ([0.0001], [0.0005, -0.0005], [-0.001, 0.002, 0.003]):
            state = build_funding_state(records(rates))
            if state.bias_sign != "neutral":
                assert state.bias_duration >= 1
