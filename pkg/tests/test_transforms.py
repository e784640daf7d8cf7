import math

import numpy as np
import pytest

import entropot as ep
from entropot.core import Problem
from entropot.transforms import cost_oscillation
from conftest import random_marginal, random_problem

from test_core import CROSS, DIAG, HALF, symmetric_2x2


class TestCGammaTransform:
    def test_zero_cost_maps_log_marginals(self, rng):
        a = random_marginal(rng, 4)
        b = random_marginal(rng, 4)
        prob = Problem(a, b, np.zeros((4, 4)), 0.6)
        g = ep.c_gamma_transform(prob, 0.6 * np.log(a))
        np.testing.assert_allclose(g, 0.6 * np.log(b), atol=1e-12)

    def test_tightness_instance(self):
        # One column of the cost sits at max|C|, the other at zero: the
        # transform's oscillation reaches the bound exactly.
        M, gamma = 3.0, 0.7
        prob = Problem(HALF, HALF, [[M, 0.0], [M, 0.0]], gamma)
        g = ep.c_gamma_transform(prob, np.zeros(2))
        centered = g - gamma * np.log(HALF)
        assert centered[0] == pytest.approx(M - gamma * math.log(2.0), abs=1e-12)
        assert centered[1] == pytest.approx(-gamma * math.log(2.0), abs=1e-12)
        assert centered[0] - centered[1] == pytest.approx(M, abs=1e-10)

    def test_maximizes_over_second_argument(self, rng):
        prob = random_problem(rng, 5)
        f = rng.normal(size=5)
        g_star = ep.c_gamma_transform(prob, f)
        h_star = ep.dual_objective(prob, ep.DualPotentials(f, g_star))
        for _ in range(100):
            g = g_star + rng.normal(scale=0.5, size=5)
            h = ep.dual_objective(prob, ep.DualPotentials(f, g))
            assert h <= h_star + 1e-12

    def test_translation_rule(self, rng):
        prob = random_problem(rng, 4)
        f = rng.normal(size=4)
        eta = 1.3
        shifted = ep.c_gamma_transform(prob, f + eta)
        np.testing.assert_allclose(shifted, ep.c_gamma_transform(prob, f) - eta, atol=1e-10)

    def test_zero_marginal_gives_sentinel(self):
        prob = Problem(HALF, [1.0, 0.0], CROSS, 1.0)
        g = ep.c_gamma_transform(prob, np.zeros(2))
        assert g[1] == -np.inf
        assert np.isfinite(g[0])

    def test_rejects_nonfinite_input(self, rng):
        prob = random_problem(rng, 3)
        with pytest.raises(ValueError, match="finite"):
            ep.c_gamma_transform(prob, [np.inf, 0.0, 0.0])


class TestBarTransform:
    def test_zero_cost_symmetry(self, rng):
        a = random_marginal(rng, 4)
        b = random_marginal(rng, 4)
        prob = Problem(a, b, np.zeros((4, 4)), 0.8)
        f = ep.c_gamma_bar_transform(prob, 0.8 * np.log(b))
        np.testing.assert_allclose(f, 0.8 * np.log(a), atol=1e-12)

    def test_transpose_duality(self, rng):
        prob = random_problem(rng, 5)
        mirrored = Problem(prob.b, prob.a, prob.C.T, prob.gamma)
        g = rng.normal(size=5)
        np.testing.assert_allclose(
            ep.c_gamma_bar_transform(prob, g),
            ep.c_gamma_transform(mirrored, g),
            atol=1e-13,
        )

    def test_fixed_point_at_optimum(self):
        t = math.sqrt(DIAG)
        f_star = np.array([math.log(t)] * 2)
        g_star = np.array([math.log(t)] * 2)
        prob = symmetric_2x2()
        np.testing.assert_allclose(ep.c_gamma_bar_transform(prob, g_star), f_star, atol=1e-9)
        np.testing.assert_allclose(ep.c_gamma_transform(prob, f_star), g_star, atol=1e-9)

    def test_partial_maximization_dominates(self, rng):
        prob = random_problem(rng, 4)
        g = rng.normal(size=4)
        f_best = ep.c_gamma_bar_transform(prob, g)
        h_best = ep.dual_objective(prob, ep.DualPotentials(f_best, g))
        for _ in range(50):
            f = rng.normal(size=4)
            assert ep.dual_objective(prob, ep.DualPotentials(f, g)) <= h_best + 1e-12


class TestOscillation:
    def test_zero_for_equal_vectors(self, rng):
        x = rng.normal(size=5)
        assert ep.oscillation(x, x) == 0.0

    def test_range_of_difference(self):
        assert ep.oscillation([3.0, 1.0, 2.0], [0.0, 0.0, 0.0]) == 2.0

    def test_shift_invariance(self, rng):
        x = rng.normal(size=6)
        ref = rng.normal(size=6)
        assert ep.oscillation(x + 5.0, ref) == pytest.approx(ep.oscillation(x, ref), abs=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="length"):
            ep.oscillation([1.0, 2.0], [1.0])

    def test_nonfinite_reference(self):
        with pytest.raises(ValueError, match="finite"):
            ep.oscillation([1.0, 2.0], [-np.inf, 0.0])


class TestEquicontinuity:
    def test_transform_oscillation_bounded(self, rng):
        for _ in range(30):
            n = int(rng.integers(2, 8))
            prob = random_problem(rng, n, cost_scale=float(rng.random() * 4 + 0.1))
            bound = cost_oscillation(prob) + 1e-9
            f = rng.normal(scale=3.0, size=n)
            g = ep.c_gamma_transform(prob, f)
            assert ep.oscillation(g, prob.gamma * np.log(prob.b)) <= bound
            g0 = rng.normal(scale=3.0, size=n)
            f_bar = ep.c_gamma_bar_transform(prob, g0)
            assert ep.oscillation(f_bar, prob.gamma * np.log(prob.a)) <= bound

    def test_constant_cost_forces_zero_oscillation(self, rng):
        a = random_marginal(rng, 3)
        b = random_marginal(rng, 3)
        prob = Problem(a, b, np.full((3, 3), 2.5), 0.9)
        g = ep.c_gamma_transform(prob, rng.normal(size=3))
        f = ep.c_gamma_bar_transform(prob, rng.normal(size=3))
        assert ep.oscillation(g, prob.gamma * np.log(b)) == pytest.approx(0.0, abs=1e-10)
        assert ep.oscillation(f, prob.gamma * np.log(a)) == pytest.approx(0.0, abs=1e-10)

    def test_check_returns_both_components(self, rng):
        prob = random_problem(rng, 4)
        pot = ep.DualPotentials(rng.normal(size=4), rng.normal(size=4))
        osc_f, osc_g = ep.equicontinuity_check(prob, pot)
        assert osc_f == pytest.approx(
            ep.oscillation(pot.f, prob.gamma * np.log(prob.a)), abs=1e-14
        )
        assert osc_g == pytest.approx(
            ep.oscillation(pot.g, prob.gamma * np.log(prob.b)), abs=1e-14
        )

    def test_tightness_instance_achieves_cost_sup(self):
        M, gamma = 2.0, 0.5
        prob = Problem(HALF, HALF, [[M, 0.0], [M, 0.0]], gamma)
        g = ep.c_gamma_transform(prob, np.zeros(2))
        pot = ep.DualPotentials(ep.c_gamma_bar_transform(prob, g), g)
        _, osc_g = ep.equicontinuity_check(prob, pot)
        assert osc_g == pytest.approx(M, abs=1e-10)
