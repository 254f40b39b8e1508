"""Tests for permutation/bootstrap laws, metrics, and the coupling."""

import itertools

import numpy as np
import pytest
from scipy import stats as sps
from scipy.integrate import quad

from invlab import permclt
from invlab.permclt import (
    EmpiricalLaw,
    cf_inequality_check,
    char_fn,
    hajek_coupling,
    perm_law_moments,
    rho0,
    rho2,
    rho2_multivariate,
    sample_boot_law,
    sample_perm_law,
    theorem_convergence_sweep,
    theorem_convergence_sweep_matrix,
    uniform_integrability_probe,
)
from invlab.rng import spawn_generator


class TestPermLawMoments:
    def test_hand_example(self):
        mean, var = perm_law_moments(np.array([-1.0, 0.0, 1.0]), np.array([1.0, 2.0, 4.0]))
        assert mean == pytest.approx(0.0)
        assert var == pytest.approx(14.0 / 3.0)

    def test_constant_x(self):
        _, var = perm_law_moments(np.array([1.0, 2.0, 3.0]), np.full(3, 5.0))
        assert var == pytest.approx(0.0)

    @pytest.mark.parametrize("n", [2, 3, 4, 5, 6, 7])
    def test_formula_equals_enumeration(self, n):
        rng = spawn_generator(n, 1)
        m = rng.normal(size=n)
        x = rng.normal(size=n)
        vals = np.array([m @ x[list(p)] for p in itertools.permutations(range(n))])
        mean, var = perm_law_moments(m, x)
        assert mean == pytest.approx(vals.mean(), abs=1e-10)
        assert var == pytest.approx(vals.var(), abs=1e-10)


class TestSampledLaws:
    def test_two_point_perm_law(self):
        law = sample_perm_law(np.array([1.0, -1.0]), np.array([0.0, 1.0]), 10_000, seed=0)
        plus = (law.values > 0).mean()
        assert abs(plus - 0.5) < 0.02
        assert set(np.unique(law.values)) == {-1.0, 1.0}

    def test_zero_weights_are_point_mass(self):
        m = np.zeros(5)
        x = np.arange(5.0)
        perm = sample_perm_law(m, x, 100, seed=1)
        boot = sample_boot_law(m, x, 100, seed=1)
        assert np.all(perm.values == 0.0)
        assert np.all(boot.values == 0.0)

    def test_perm_law_matches_moment_formula(self):
        rng = spawn_generator(2, 1)
        m = rng.normal(size=40)
        x = rng.normal(size=40)
        law = sample_perm_law(m, x, 20_000, seed=3)
        mean, var = perm_law_moments(m, x)
        se_mean = np.sqrt(var / 20_000)
        assert abs(law.mean - mean) < 4 * se_mean
        v = law.values.var()
        se_var = np.sqrt(np.mean((law.values - law.values.mean()) ** 4) / 20_000)
        assert abs(v - var) < 4 * se_var


class TestMetrics:
    def test_identical_laws(self):
        v = np.array([1.0, 2.0, 3.0])
        assert rho2(v, v) == 0.0
        assert rho0(v, v) == 0.0

    def test_point_mass_translation(self):
        a = np.zeros(100)
        b = np.full(100, 2.5)
        assert rho2(a, b) == pytest.approx(2.5)
        assert rho0(a, b) == pytest.approx(1.0)

    def test_rho0_bounded_by_one(self):
        rng = spawn_generator(3, 1)
        assert rho0(rng.normal(size=100), rng.normal(10.0, size=17)) <= 1.0

    def test_two_normal_samples_are_close(self):
        rng = spawn_generator(4, 1)
        hits = sum(
            rho2(rng.normal(size=10_000), rng.normal(size=10_000)) < 0.05
            for _ in range(20)
        )
        assert hits >= 19

    def test_metric_axioms_on_random_triples(self):
        rng = spawn_generator(5, 1)
        for _ in range(10):
            a = rng.normal(size=64)
            b = rng.normal(size=64) * rng.uniform(0.5, 2.0)
            c = rng.normal(size=64) + rng.uniform(-1, 1)
            for dist in (rho2, rho0):
                assert dist(a, b) == pytest.approx(dist(b, a), abs=1e-12)
                assert dist(a, b) >= 0
                assert dist(a, c) <= dist(a, b) + dist(b, c) + 1e-9

    def test_rho2_unequal_sizes_quantile_grid(self):
        rng = spawn_generator(6, 1)
        a = rng.normal(size=5000)
        b = rng.normal(size=3000)
        assert rho2(a, b) < 0.1

    def test_multivariate_combination(self):
        a = np.zeros((100, 2))
        b = np.zeros((100, 2))
        b[:, 0] = 3.0
        b[:, 1] = 4.0
        assert rho2_multivariate(a, b) == pytest.approx(5.0)


class TestCharFn:
    def test_t_zero(self):
        assert char_fn(np.arange(5.0), 0.0) == pytest.approx(1.0)

    def test_point_mass(self):
        c = 1.7
        val = char_fn(np.full(10, c), 2.0)
        assert val == pytest.approx(np.exp(2.0j * c))

    def test_gaussian_cf(self):
        rng = spawn_generator(7, 1)
        v = rng.normal(size=100_000)
        val = char_fn(v, 1.0)
        assert abs(val - np.exp(-0.5)) < 4 / np.sqrt(100_000)


class TestCfInequality:
    def test_identical(self):
        v = np.arange(10.0)
        assert cf_inequality_check(v, v, 1.0)

    def test_constant_shift(self):
        rng = spawn_generator(8, 1)
        w = rng.normal(size=1000)
        assert cf_inequality_check(w, w + 1.0, 1.0)

    def test_on_coupling_draws(self):
        rng = spawn_generator(9, 1)
        x = rng.normal(size=50)
        m = rng.normal(size=50)
        m -= m.mean()
        res = hajek_coupling(m, x, 2000, seed=10)
        for t in (0.5, 1.0, 2.0):
            assert cf_inequality_check(res.without_repl, res.with_repl, t)

    def test_rejects_unpaired(self):
        with pytest.raises(ValueError):
            cf_inequality_check(np.zeros(3), np.zeros(4), 1.0)


class TestUniformIntegrability:
    def test_zero_threshold_gives_second_moment(self):
        v = np.array([1.0, -2.0, 3.0])
        out = uniform_integrability_probe(v, [0.0])
        assert out[0] == pytest.approx(np.mean(v**2))

    def test_beyond_max_gives_zero(self):
        v = np.array([1.0, -2.0, 3.0])
        assert uniform_integrability_probe(v, [10.0])[0] == 0.0

    def test_gaussian_tail_moment(self):
        # oracle: E[Z^2 1(|Z| >= 3)] by quadrature; closed form
        # 2 (3 phi(3) + Q(3)) = 0.029291 confirms it.
        oracle = 2 * quad(lambda z: z * z * sps.norm.pdf(z), 3, 12)[0]
        assert oracle == pytest.approx(
            2 * (3 * sps.norm.pdf(3) + sps.norm.sf(3)), abs=1e-9
        )
        rng = spawn_generator(10, 1)
        v = rng.normal(size=100_000)
        out = uniform_integrability_probe(v, [3.0])[0]
        se = np.std(v**2 * (np.abs(v) >= 3)) / np.sqrt(v.size)
        assert abs(out - oracle) < 4 * se


class TestCoupling:
    def test_constant_x_zero_gap(self):
        m = np.array([1.0, -1.0, 0.5, -0.5])
        x = np.full(4, 3.3)
        res = hajek_coupling(m, x, 500, seed=11)
        assert res.gap_sq_mean == pytest.approx(0.0, abs=1e-20)
        assert np.all(res.without_repl == res.with_repl)

    @pytest.mark.parametrize("method", ["rank", "first_occurrence"])
    def test_n2_hand_enumeration(self, method):
        # For m=(1,-1), x=(0,1): E[(W - W')^2] = 1/2 for both constructions.
        m = np.array([1.0, -1.0])
        x = np.array([0.0, 1.0])
        res = hajek_coupling(m, x, 40_000, seed=12, method=method)
        se = res.gap_sq_se
        assert abs(res.gap_sq_mean - 0.5) < 4 * se

    def test_rank_gap_decays_and_bound_holds(self):
        prev = None
        for n in (100, 1000, 10_000):
            rng = spawn_generator(13, n)
            x = rng.normal(size=n)
            m = rng.normal(size=n)
            m -= m.mean()
            m /= np.linalg.norm(m)
            res = hajek_coupling(m, x, 1000, seed=14)
            assert res.bound_holds
            if prev is not None:
                assert res.gap_sq_mean < prev
            prev = res.gap_sq_mean

    def test_marginals_match_direct_laws(self):
        rng = spawn_generator(15, 1)
        n = 60
        x = rng.normal(size=n)
        m = rng.normal(size=n)
        m -= m.mean()
        res = hajek_coupling(m, x, 10_000, seed=16)
        perm = sample_perm_law(m, x, 10_000, seed=17)
        boot = sample_boot_law(m, x, 10_000, seed=18)
        assert rho0(res.without_repl, perm.values) < 0.02
        assert rho0(res.with_repl, boot.values) < 0.02

    def test_uncentered_weights_rejected(self):
        with pytest.raises(ValueError, match="centered"):
            hajek_coupling(np.array([1.0, 1.0]), np.array([0.0, 1.0]), 10, seed=0)

    def test_draws_view(self):
        m = np.array([1.0, -1.0])
        x = np.array([0.0, 1.0])
        res = hajek_coupling(m, x, 5, seed=19)
        draws = res.draws()
        assert len(draws) == 5
        assert draws[0].without_repl == pytest.approx(res.without_repl[0])


class TestEmpiricalLaw:
    def test_sorted_and_finite(self):
        law = EmpiricalLaw(np.array([3.0, 1.0, 2.0]))
        assert np.all(np.diff(law.values) >= 0)
        with pytest.raises(ValueError):
            EmpiricalLaw(np.array([np.inf]))
        with pytest.raises(ValueError):
            EmpiricalLaw(np.array([]))


class TestConvergenceSweep:
    @staticmethod
    def _normal_sampler(n, reps, rng):
        return rng.normal(size=(max(reps, 1), n))

    @staticmethod
    def _spike_builder(n):
        m = np.zeros(n)
        m[0] = 1.0
        m -= m.mean()
        return m * (1.0 / np.linalg.norm(m))

    def test_distances_decrease(self):
        rows = theorem_convergence_sweep(
            self._normal_sampler, self._spike_builder, (50, 500, 5000), 4000, seed=20
        )
        for prev, cur in zip(rows, rows[1:]):
            for col, se_col in (
                ("rho2_perm_boot", "se_rho2_perm_boot"),
                ("rho2_boot_iid", "se_rho2_boot_iid"),
                ("rho2_perm_iid", "se_rho2_perm_iid"),
            ):
                drop = getattr(prev, col) - getattr(cur, col)
                tol = 2 * (getattr(prev, se_col) + getattr(cur, se_col))
                assert drop >= -tol

    def test_zero_weights_give_zero_distances(self):
        rows = theorem_convergence_sweep(
            self._normal_sampler, lambda n: np.zeros(n), (50,), 500, seed=21
        )
        assert rows[0].rho2_perm_boot == pytest.approx(0.0)
        assert rows[0].rho2_perm_iid == pytest.approx(0.0)

    def test_second_moment_convergence_accompanies_rho2(self):
        # At the final grid point the second moments of the laws agree within noise.
        n, reps = 5000, 4000
        rng = spawn_generator(22, 1)
        x = rng.normal(size=n)
        m = self._spike_builder(n)
        perm = sample_perm_law(m, x, reps, seed=23)
        boot = sample_boot_law(m, x, reps, seed=24)
        gap = abs(perm.second_moment - boot.second_moment)
        se = np.sqrt(
            perm.values.var() * 2 / reps + boot.values.var() * 2 / reps
        ) * np.sqrt(2.0)
        assert gap < 3 * max(se, 0.05)

    def test_matrix_variant_decreases(self):
        def row_sampler(n, reps, rng):
            return rng.normal(size=(max(reps, 1), n, 2))

        def m_builder(n):
            mm = np.zeros((n, 2))
            mm[0, 0] = 1.0
            mm[1, 1] = 1.0
            mm -= mm.mean(axis=0, keepdims=True)
            mm /= np.linalg.norm(mm, axis=0, keepdims=True)
            return mm

        rows = theorem_convergence_sweep_matrix(
            row_sampler, m_builder, (50, 500), 2000, seed=25
        )
        tol = 2 * (rows[0].se_rho2_perm_iid + rows[1].se_rho2_perm_iid)
        assert rows[1].rho2_perm_iid <= rows[0].rho2_perm_iid + tol

    def test_diag_column_reports_mean_product(self):
        rows = theorem_convergence_sweep(
            self._normal_sampler, self._spike_builder, (50,), 200, seed=26
        )
        assert rows[0].diag_nmx == pytest.approx(0.0, abs=1e-12)
