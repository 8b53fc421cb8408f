"""Log-weight arithmetic, ESS and resampling."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bridgepf.core import (
    ess_weights,
    log_sum_exp,
    resample_multinomial,
    resample_systematic,
    resample_trigger,
)

NEG_INF = -np.inf


class TestLogSumExp:
    def test_two_unit_weights(self):
        assert log_sum_exp([0.0, 0.0]) == pytest.approx(np.log(2.0), abs=1e-14)

    def test_dead_particle_identity(self):
        assert log_sum_exp([NEG_INF, 1.3]) == pytest.approx(1.3)
        assert log_sum_exp([NEG_INF, NEG_INF]) == NEG_INF

    def test_large_negative_values_do_not_underflow(self):
        # by hand: log(3 * exp(-1000)) = -1000 + log 3
        got = log_sum_exp([-1000.0, -1000.0, -1000.0])
        assert got == pytest.approx(-1000.0 + np.log(3.0), abs=1e-12)

    def test_empty_input_rejected(self):
        with pytest.raises(ValueError):
            log_sum_exp([])


class TestEss:
    def test_uniform_weights(self):
        for n in (1, 2, 7, 100):
            assert ess_weights(np.full(n, -3.2)) == pytest.approx(n)

    def test_one_hot(self):
        logw = np.full(5, NEG_INF)
        logw[2] = 0.4
        assert ess_weights(logw) == pytest.approx(1.0)

    def test_hand_computed_two_particle_case(self):
        # weights (0.75, 0.25): (1)^2 / (0.5625 + 0.0625) = 1.6
        logw = np.log([0.75, 0.25])
        assert ess_weights(logw) == pytest.approx(1.6, abs=1e-12)

    def test_all_dead_is_zero(self):
        assert ess_weights([NEG_INF, NEG_INF]) == 0.0

    @given(st.lists(st.floats(-30, 30), min_size=1, max_size=40),
           st.floats(-500, 500))
    @settings(max_examples=200, deadline=None)
    def test_shift_invariance(self, logw, c):
        logw = np.asarray(logw)
        assert ess_weights(logw + c) == pytest.approx(ess_weights(logw), rel=1e-9)


class TestTrigger:
    def test_uniform_weights_never_trigger_at_half(self):
        assert not resample_trigger(np.zeros(10), 0.5)

    def test_one_hot_triggers(self):
        logw = np.full(4, NEG_INF)
        logw[0] = 0.0
        assert resample_trigger(logw, 0.5)

    def test_threshold_zero_disables(self):
        logw = np.full(4, NEG_INF)
        logw[0] = 0.0
        assert not resample_trigger(logw, 0.0)


class TestMultinomial:
    def test_one_hot_collapses(self):
        logw = np.full(6, NEG_INF)
        logw[3] = -1.0
        parents = resample_multinomial(logw, 6, np.random.default_rng(0))
        assert np.all(parents == 3)

    def test_zero_weight_indices_never_chosen(self):
        with np.errstate(divide="ignore"):
            logw = np.log(np.array([1.0, 0.0, 0.0, 1.0]))
        parents = resample_multinomial(logw, 4000, np.random.default_rng(1))
        assert set(np.unique(parents)) <= {0, 3}

    def test_uniform_counts_within_binomial_bounds(self):
        n, draws = 8, 64000
        parents = resample_multinomial(np.zeros(n), draws, np.random.default_rng(2))
        counts = np.bincount(parents, minlength=n)
        # each count ~ Binomial(draws, 1/n): 5 sigma band
        mean = draws / n
        sd = np.sqrt(draws * (1 / n) * (1 - 1 / n))
        assert np.all(np.abs(counts - mean) < 5 * sd)

    def test_all_dead_rejected(self):
        with pytest.raises(ValueError):
            resample_multinomial(np.full(3, NEG_INF), 3, np.random.default_rng(0))


class TestSystematic:
    def test_uniform_weights_give_identity_multiset(self):
        n = 9
        parents = resample_systematic(np.zeros(n), n, np.random.default_rng(3))
        assert np.array_equal(np.sort(parents), np.arange(n))

    def test_half_half_splits_evenly(self):
        parents = resample_systematic(np.log([0.5, 0.5]), 4, np.random.default_rng(4))
        counts = np.bincount(parents, minlength=2)
        assert counts.tolist() == [2, 2]

    def test_exact_decimal_weights(self):
        # N * W = (6, 4) exactly, so floor == ceil pins the counts
        parents = resample_systematic(np.log([0.6, 0.4]), 10, np.random.default_rng(5))
        counts = np.bincount(parents, minlength=2)
        assert counts.tolist() == [6, 4]

    @given(st.lists(st.floats(-20, 5), min_size=2, max_size=25),
           st.integers(2, 64), st.integers(0, 2 ** 31))
    @settings(max_examples=200, deadline=None)
    def test_count_bounds(self, logw, n, seed):
        logw = np.asarray(logw)
        if np.max(logw) == NEG_INF:
            return
        parents = resample_systematic(logw, n, np.random.default_rng(seed))
        w = np.exp(logw - logw.max())
        w = w / w.sum()
        counts = np.bincount(parents, minlength=len(logw))
        assert np.all(counts >= np.floor(n * w) - 1e-9)
        assert np.all(counts <= np.ceil(n * w) + 1e-9)
