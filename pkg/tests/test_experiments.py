"""Tests for the power harness and theorem sweeps."""

import numpy as np
import pytest
from scipy import stats as sps

from invlab import experiments, models
from invlab.expectations import load_expectations, recalibrate
from invlab.experiments import (
    AlternativeSpec,
    NeymanScottModel,
    calibrate_critical,
    estimate_power,
    make_statistic,
    matrix_variate_sweep,
    neyman_scott_sweep,
    normal_means_model,
    spacings_sweep,
    theorem1_sweep,
    theorem2_sweep,
    trend_slope,
)


class TestAlternatives:
    def test_spike_centered_norm(self):
        alt = AlternativeSpec(kind="single_spike", scale=2.0)
        m = alt.mean_entries(50, 0.0, seed=0)
        assert np.linalg.norm(m - m.mean()) == pytest.approx(2.0)
        assert m.mean() == pytest.approx(0.0, abs=1e-12)

    def test_spike_uncentered(self):
        alt = AlternativeSpec(kind="single_spike", scale=3.0, centered=False)
        m = alt.mean_entries(10, 0.0, seed=0)
        assert m[0] == pytest.approx(3.0)
        assert np.all(m[1:] == 0.0)

    def test_smooth_profile_norm(self):
        alt = AlternativeSpec(
            kind="smooth_profile",
            scale=1.5,
            profile=lambda x: np.sqrt(2) * np.cos(2 * np.pi * x),
        )
        m = alt.mean_entries(200, 0.1, seed=0)
        assert np.linalg.norm(m - m.mean()) == pytest.approx(1.5)
        assert m.mean() == pytest.approx(0.1, abs=1e-12)

    def test_random_signs_deterministic_in_seed(self):
        alt = AlternativeSpec(kind="random_signs", scale=1.0)
        a = alt.mean_entries(20, 0.0, seed=5)
        b = alt.mean_entries(20, 0.0, seed=5)
        c = alt.mean_entries(20, 0.0, seed=6)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            AlternativeSpec(kind="bogus", scale=1.0)


class TestCalibration:
    def test_chisq_critical_matches_quantile_oracle(self):
        model = normal_means_model()
        crit = calibrate_critical(
            model, make_statistic("chisq", 20), 0.05, n=20, reps=20_000, seed=0
        )
        oracle = sps.chi2.ppf(0.95, 20)
        # MC quantile error at 2e4 reps
        se = np.sqrt(0.05 * 0.95 / 20_000) / sps.chi2.pdf(oracle, 20)
        assert abs(crit - oracle) < 4 * se

    def test_median_at_half_level(self):
        model = normal_means_model()
        stat = make_statistic("np", 30, alt=AlternativeSpec("single_spike", 1.0))
        crit = calibrate_critical(model, stat, 0.5, n=30, reps=20_000, seed=1)
        assert abs(crit) < 4 * np.sqrt(np.pi / 2 / 20_000) + 0.02

    def test_f_critical_matches_oracle(self):
        model = NeymanScottModel(nu=5)
        crit = calibrate_critical(
            model, make_statistic("anova_f", 10), 0.05, n=10, reps=20_000, seed=2
        )
        oracle = sps.f.ppf(0.95, 9, 40)
        se = np.sqrt(0.05 * 0.95 / 20_000) / sps.f.pdf(oracle, 9, 40)
        assert abs(crit - oracle) < 4 * se

    def test_too_few_reps_rejected(self):
        model = normal_means_model()
        with pytest.raises(ValueError, match="reps"):
            calibrate_critical(model, make_statistic("chisq", 5), 0.01, n=5, reps=100, seed=0)


class TestEstimatePower:
    def test_null_alternative_power_equals_level(self):
        model = normal_means_model()
        rep = estimate_power(
            model,
            make_statistic("chisq", 40),
            AlternativeSpec("single_spike", 0.0),
            0.05,
            n=40,
            reps=4000,
            seed=3,
        )
        assert abs(rep.power_hat - rep.level_hat) <= 4 * rep.gap_se
        assert abs(rep.level_hat - 0.05) <= 4 * rep.level_se

    def test_np_power_matches_normal_oracle(self):
        model = normal_means_model()
        alt = AlternativeSpec("single_spike", 3.0, centered=False)
        rep = estimate_power(
            model, make_statistic("np", 100, alt=alt), alt, 0.05, 100, 10_000, seed=4
        )
        oracle = sps.norm.sf(sps.norm.ppf(0.95) - 3.0)
        assert oracle == pytest.approx(0.912, abs=5e-4)
        # allow for calibration-induced critical-value error
        se_crit = np.sqrt(0.05 * 0.95 / 20_000) / sps.norm.pdf(sps.norm.ppf(0.95))
        se = np.hypot(rep.power_se, sps.norm.pdf(sps.norm.ppf(0.95) - 3.0) * se_crit)
        assert abs(rep.power_hat - oracle) < 4 * se

    def test_chisq_power_shrinks_with_n(self):
        model = normal_means_model()
        alt = AlternativeSpec("single_spike", 3.0, centered=False)
        gaps = {}
        for n in (100, 10_000):
            rep = estimate_power(
                model, make_statistic("chisq", n), alt, 0.05, n, 6000, seed=5
            )
            crit = sps.chi2.ppf(0.95, n)
            oracle_gap = sps.ncx2.sf(crit, n, 9.0) - 0.05
            assert abs(rep.gap - oracle_gap) < 4 * rep.gap_se + 0.01
            gaps[n] = rep.gap
        assert gaps[10_000] < gaps[100]

    def test_report_metadata(self):
        model = normal_means_model()
        rep = estimate_power(
            model,
            make_statistic("chisq", 10),
            AlternativeSpec("single_spike", 1.0),
            0.1,
            n=10,
            reps=1000,
            seed=6,
        )
        assert rep.reps == 1000 and rep.seed == 6
        assert 0.0 <= rep.level_hat <= 1.0 and 0.0 <= rep.power_hat <= 1.0
        assert rep.level_se > 0 and rep.power_se > 0

    def test_reproducible(self):
        model = normal_means_model()
        args = (
            model,
            make_statistic("chisq", 25),
            AlternativeSpec("single_spike", 2.0),
            0.05,
            25,
            2000,
            7,
        )
        assert estimate_power(*args) == estimate_power(*args)

    def test_workers_do_not_change_results(self):
        model = normal_means_model()
        alt = AlternativeSpec("single_spike", 2.0)
        a = estimate_power(
            model, make_statistic("chisq", 25), alt, 0.05, 25, 3000, 8, workers=1
        )
        b = estimate_power(
            model, make_statistic("chisq", 25), alt, 0.05, 25, 3000, 8, workers=8
        )
        assert a == b


class TestTheorem1Sweep:
    def test_zero_delta_gaps_vanish(self):
        rows = theorem1_sweep(0.0, (50,), reps=2000, seed=9, lbar_reps=500)
        assert abs(rows[0].chisq_gap) <= 4 * rows[0].chisq_gap_se

    def test_desk_scale_reproduction(self):
        rows = theorem1_sweep(3.0, (100, 1000), reps=4000, seed=10, lbar_reps=2000)
        for row in rows:
            crit = sps.chi2.ppf(0.95, row.n)
            oracle = sps.ncx2.sf(crit, row.n, 9.0) - 0.05
            assert abs(row.chisq_gap - oracle) < 4 * row.chisq_gap_se + 0.01
            assert row.chisq_gap <= row.lbar_bound + 4 * (row.chisq_gap_se + row.lbar_bound_se)
        assert rows[1].chisq_gap < rows[0].chisq_gap + 2 * (
            rows[0].chisq_gap_se + rows[1].chisq_gap_se
        )
        assert rows[1].lbar_bound < rows[0].lbar_bound

    def test_quarter_power_rate_probe_stays_in_band(self):
        # delta_n = 0.5 n^{1/4}: the gap neither collapses nor saturates.
        gaps = []
        for n in (100, 1000):
            delta = 0.5 * n**0.25
            rows = theorem1_sweep(delta, (n,), reps=3000, seed=11, lbar_reps=100)
            gaps.append(rows[0].chisq_gap)
        assert all(0.02 < g < 0.98 for g in gaps)


class TestTheorem2Sweep:
    def test_poisson_invariant_gap_decreases(self):
        rows = theorem2_sweep(
            models.poisson_family(), 1.5, (100, 1000), reps=3000, seed=12
        )
        assert rows[1].invariant_gap < rows[0].invariant_gap
        assert rows[0].invariant_gap > 0.08  # visible signal at n=100

    def test_quadratic_gap_above_floor(self):
        floor = load_expectations()["theorem2_quadratic_gap_floor"]
        rows = theorem2_sweep(
            models.normal_family(), 1.5, (100, 1000), reps=3000, seed=13
        )
        for row in rows:
            assert row.quadratic_gap > floor

    def test_zero_delta(self):
        rows = theorem2_sweep(models.normal_family(), 0.0, (100,), reps=2000, seed=14)
        assert abs(rows[0].invariant_gap) <= 4 * rows[0].invariant_gap_se
        assert abs(rows[0].quadratic_gap) <= 4 * rows[0].quadratic_gap_se

    def test_alternative_audit_columns(self):
        rows = theorem2_sweep(models.normal_family(), 1.0, (100,), reps=1000, seed=15)
        assert rows[0].centered_norm == pytest.approx(1.0)
        assert 0 < rows[0].max_dev <= 1.0

    def test_logistic_location_family_sweep(self):
        rows = theorem2_sweep(
            models.logistic_location_family(), 1.5, (100, 1000), reps=3000, seed=16
        )
        tol = 2 * (rows[0].invariant_gap_se + rows[1].invariant_gap_se)
        assert rows[1].invariant_gap <= rows[0].invariant_gap + tol


class TestNeymanScott:
    def test_f_gap_matches_noncentral_oracle(self):
        rows = neyman_scott_sweep((100, 1000), nu=5, delta=3.0, reps=4000, seed=17)
        for row in rows:
            ncp = 5 * 3.0**2  # nu * delta^2 / sigma^2
            crit = sps.f.ppf(0.95, row.n - 1, row.n * 4)
            oracle = sps.ncf.sf(crit, row.n - 1, row.n * 4, ncp) - 0.05
            assert abs(row.f_gap - oracle) < 4 * row.f_gap_se + 0.01
        assert rows[1].f_gap < rows[0].f_gap

    def test_zero_delta(self):
        rows = neyman_scott_sweep((50,), nu=3, delta=0.0, reps=2000, seed=18)
        assert abs(rows[0].f_gap) <= 4 * rows[0].f_gap_se

    def test_matrix_variate_gap_decreases(self):
        rows = matrix_variate_sweep((50, 500), delta=2.0, reps=3000, seed=19)
        tol = 2 * (rows[0].wilks_gap_se + rows[1].wilks_gap_se)
        assert rows[1].wilks_gap <= rows[0].wilks_gap + tol


class TestSpacingsSweep:
    def test_contiguous_cosine_alternative(self):
        h = models.cosine_profile({1: 2.0})
        rows = spacings_sweep(h, (100, 400), reps=3000, seed=20)
        tol01 = 2 * (rows[0].greenwood_gap_se + rows[1].greenwood_gap_se)
        assert rows[1].greenwood_gap <= rows[0].greenwood_gap + tol01
        floor = load_expectations()["spacings_quadratic_gap_floor"]
        for row in rows:
            assert row.quadratic_gap > floor

    def test_zero_profile(self):
        zero = models.profile_from_callable(lambda x: np.zeros_like(x), label="0")
        rows = spacings_sweep(zero, (100,), reps=2000, seed=21)
        assert abs(rows[0].greenwood_gap) <= 4 * rows[0].greenwood_gap_se
        assert abs(rows[0].moran_gap) <= 4 * rows[0].moran_gap_se

    def test_llr_gap_bounded(self):
        h = models.cosine_profile({1: 2.0})
        rows = spacings_sweep(h, (100, 400, 1600), reps=1500, seed=22)
        slope, se = trend_slope(
            [np.log(r.n) for r in rows],
            [r.llr_gap_p95 for r in rows],
            [r.llr_gap_p95_se for r in rows],
        )
        assert slope <= 2 * se


class TestTrendSlope:
    def test_exact_line(self):
        slope, _ = trend_slope([0, 1, 2], [1.0, 3.0, 5.0])
        assert slope == pytest.approx(2.0)

    def test_weights_prefer_precise_points(self):
        slope, _ = trend_slope([0, 1, 2], [0.0, 0.0, 10.0], ses=[0.1, 0.1, 100.0])
        assert abs(slope) < 0.5


class TestRecalibrate:
    def test_returns_floors(self):
        vals = recalibrate(seed=1, reps=400)
        assert set(vals) >= {"theorem2_quadratic_gap_floor", "spacings_quadratic_gap_floor"}
        assert vals["theorem2_quadratic_gap_floor"] <= 0.1
