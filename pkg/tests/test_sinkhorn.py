import math

import numpy as np
import pytest

import entropot as ep
from entropot.core import Problem
from entropot.sinkhorn import (
    COLUMN,
    ITERATION_CAP,
    ROW,
    SinkhornAuditor,
    epsilon_parameters,
    iteration_bound,
)
from conftest import random_marginal, random_problem

from test_core import CROSS, HALF, PLAN_2X2, symmetric_2x2


class TestSolve:
    def test_zero_cost_converges_within_two_iterations(self, rng):
        a = random_marginal(rng, 5)
        b = random_marginal(rng, 5)
        prob = Problem(a, b, np.zeros((5, 5)), 0.4)
        result = ep.sinkhorn_solve(prob, ep.SinkhornConfig(delta=1e-9))
        assert result.converged
        assert result.iterations <= 2
        np.testing.assert_allclose(result.plan.P, np.outer(a, b), atol=1e-12)

    def test_symmetric_2x2_closed_form(self):
        result = ep.sinkhorn_solve(symmetric_2x2(), ep.SinkhornConfig(delta=1e-10))
        assert result.converged
        np.testing.assert_allclose(result.plan.P, PLAN_2X2, atol=1e-8)

    def test_iteration_bound_arithmetic(self):
        assert iteration_bound(1.0, 0.25, 0.1) == 162

    def test_iterations_within_bound(self, rng):
        for _ in range(5):
            prob = random_problem(rng, 6, gamma_rel=0.25)
            prob = Problem(prob.a, prob.b, prob.C / prob.C.max(), 0.25)
            result = ep.sinkhorn_solve(prob, ep.SinkhornConfig(delta=0.1))
            assert result.converged
            assert result.iterations <= 162

    def test_termination_contract(self, rng):
        prob = random_problem(rng, 8)
        delta = 1e-6
        result = ep.sinkhorn_solve(prob, ep.SinkhornConfig(delta=delta))
        row, col = ep.marginal_violations(result.plan, prob)
        assert result.converged
        assert row + col <= delta

    def test_iteration_cap_reported_not_raised(self, rng):
        prob = random_problem(rng, 6, gamma_rel=0.05)
        result = ep.sinkhorn_solve(prob, ep.SinkhornConfig(delta=1e-14, max_iterations=2))
        assert result.status == ITERATION_CAP
        assert result.iterations == 2

    def test_rejects_zero_marginals(self):
        prob = Problem([1.0, 0.0], HALF, CROSS, 1.0)
        with pytest.raises(ValueError, match="positive"):
            ep.sinkhorn_solve(prob, ep.SinkhornConfig(delta=1e-6))

    def test_gamma_conflict_rejected(self):
        with pytest.raises(ValueError, match="disagrees"):
            ep.sinkhorn_solve(symmetric_2x2(), ep.SinkhornConfig(gamma=0.5, delta=1e-6))

    def test_trace_alternates_sides(self, rng):
        prob = random_problem(rng, 4)
        result = ep.sinkhorn_solve(prob, ep.SinkhornConfig(delta=1e-8, record_trace=True))
        sides = [r.updated_side for r in result.trace]
        assert sides[0] == ROW
        assert all(s == (ROW if k % 2 == 1 else COLUMN) for k, s in enumerate(sides, start=1))

    def test_updated_side_is_exactly_feasible(self, rng):
        prob = random_problem(rng, 5)
        result = ep.sinkhorn_solve(prob, ep.SinkhornConfig(delta=1e-9, record_trace=True))
        for record in result.trace:
            if record.k < 2:
                continue
            if record.k % 2 == 0:
                assert record.col_violation <= 1e-10
            else:
                assert record.row_violation <= 1e-10

    def test_monotone_dual_ascent(self, rng):
        prob = random_problem(rng, 6)
        result = ep.sinkhorn_solve(prob, ep.SinkhornConfig(delta=1e-9, record_trace=True))
        values = [r.dual_value for r in result.trace]
        assert all(b >= a - 1e-10 for a, b in zip(values, values[1:]))


class TestConfig:
    def test_rejects_nonpositive_delta(self):
        with pytest.raises(ValueError):
            ep.SinkhornConfig(delta=0.0)

    def test_rejects_tiny_cap(self):
        with pytest.raises(ValueError):
            ep.SinkhornConfig(delta=1e-6, max_iterations=1)

    def test_rejects_negative_gamma(self):
        with pytest.raises(ValueError):
            ep.SinkhornConfig(gamma=-1.0, delta=1e-6)


class TestAuditor:
    def test_clean_run_has_no_violations(self, rng):
        for _ in range(5):
            n = int(rng.integers(3, 12))
            prob = random_problem(rng, n, gamma_rel=float(rng.uniform(0.1, 1.0)))
            reference = ep.reference_dual_optimum(prob)
            config = ep.SinkhornConfig(delta=1e-7)
            auditor = SinkhornAuditor(prob, config, reference=reference)
            result = ep.sinkhorn_solve(prob, config, callback=auditor)
            assert auditor.finish(result) == []

    def test_arbitrary_positive_initialization(self, rng):
        # The oscillation bound and the improvement inequalities hold from
        # iteration 2 on regardless of the starting potentials.
        prob = random_problem(rng, 7)
        config = ep.SinkhornConfig(delta=1e-8)
        for _ in range(3):
            init = ep.DualPotentials(rng.normal(scale=5.0, size=7), rng.normal(scale=5.0, size=7))
            auditor = SinkhornAuditor(prob, config)
            result = ep.sinkhorn_solve(prob, config, init=init, callback=auditor)
            assert result.converged
            assert auditor.finish(result) == []

    def test_flags_seeded_violation(self, rng):
        prob = random_problem(rng, 4)
        config = ep.SinkhornConfig(delta=1e-8)
        auditor = SinkhornAuditor(prob, config, reference=(None, 1e9))
        result = ep.sinkhorn_solve(prob, config, callback=auditor)
        names = {name for _, name, _ in auditor.finish(result)}
        assert "suboptimality_bound" in names

    def test_row_update_gain_is_kl_of_row_sums(self, rng):
        prob = random_problem(rng, 5)
        seen = []

        def spy(record, pot):
            plan = ep.plan_from_potentials(prob, pot)
            seen.append((record.k, record.dual_value, plan.row_sums.copy(), plan.col_sums.copy()))

        ep.sinkhorn_solve(prob, ep.SinkhornConfig(delta=1e-10), callback=spy)
        for (k0, h0, rows0, cols0), (k1, h1, _, _) in zip(seen, seen[1:]):
            if k0 < 2:
                continue
            if k0 % 2 == 0:
                expected = prob.gamma * ep.kl_divergence(prob.a, rows0)
            else:
                expected = prob.gamma * ep.kl_divergence(prob.b, cols0)
            assert h1 - h0 == pytest.approx(expected, abs=1e-10)


class TestLiftMarginals:
    def test_point_mass_example(self):
        a_t, b_t = ep.lift_marginals([1.0, 0.0], [0.0, 1.0], 0.8)
        np.testing.assert_allclose(a_t, [0.95, 0.05], atol=1e-15)
        np.testing.assert_allclose(b_t, [0.05, 0.95], atol=1e-15)
        assert a_t.min() >= 0.8 / 16 - 1e-15

    def test_distortion_and_floor(self, rng):
        for delta in (0.3, 1.0, 1.9):
            n = int(rng.integers(2, 20))
            a = random_marginal(rng, n)
            b = random_marginal(rng, n)
            a_t, b_t = ep.lift_marginals(a, b, delta)
            for orig, lifted in ((a, a_t), (b, b_t)):
                assert lifted.sum() == pytest.approx(1.0, abs=1e-14)
                assert np.abs(lifted - orig).sum() <= delta / 4 + 1e-12
                assert lifted.min() >= delta / (8 * n) - 1e-15

    def test_applies_even_to_already_positive_input(self):
        a = np.array([0.4, 0.6])
        a_t, _ = ep.lift_marginals(a, a, 0.8)
        assert not np.allclose(a_t, a)

    def test_small_delta_barely_moves(self, rng):
        a = random_marginal(rng, 8)
        a_t, _ = ep.lift_marginals(a, a, 1e-6)
        assert np.abs(a_t - a).sum() <= 2.5e-7

    @pytest.mark.parametrize("delta", [0.0, 2.0, -1.0])
    def test_rejects_out_of_range_delta(self, delta):
        with pytest.raises(ValueError):
            ep.lift_marginals(HALF, HALF, delta)


class TestEpsilonSolve:
    def test_parameter_rule(self):
        gamma, delta = epsilon_parameters(100, 1.0, 0.1)
        assert gamma == pytest.approx(0.005429, abs=1e-6)
        assert delta == pytest.approx(0.0125, abs=1e-15)

    def test_huge_epsilon_terminates_immediately(self, rng):
        a = random_marginal(rng, 4)
        b = random_marginal(rng, 4)
        C = rng.random((4, 4))
        C /= C.max()
        run = ep.sinkhorn_epsilon_solve(a, b, C, epsilon=17.0)
        assert run.result.converged
        assert run.result.iterations == 1

    def test_zero_cost_shortcut(self, rng):
        a = random_marginal(rng, 3)
        b = random_marginal(rng, 3)
        run = ep.sinkhorn_epsilon_solve(a, b, np.zeros((3, 3)), epsilon=0.1)
        assert run.note is not None
        assert run.result.iterations == 0
        np.testing.assert_allclose(run.result.plan.P, np.outer(a, b), atol=1e-14)

    def test_vanilla_and_lifted_certify(self, rng):
        n = 16
        a = random_marginal(rng, n)
        b = random_marginal(rng, n)
        C = rng.random((n, n))
        epsilon = 0.25 * float(C.max())
        exact_cost = ep.exact_ot(a, b, C)[1]
        for variant in ("vanilla", "lifted"):
            run = ep.sinkhorn_epsilon_solve(a, b, C, epsilon, variant=variant)
            algorithm_cert = ep.certify(run.result, run.problem, epsilon, "sinkhorn",
                                        exact_cost=exact_cost)
            assert algorithm_cert.satisfied
            assert algorithm_cert.gap <= epsilon

    def test_lifted_run_violation_against_originals(self, rng):
        n = 8
        a = random_marginal(rng, n)
        b = random_marginal(rng, n)
        C = rng.random((n, n))
        epsilon = 0.3 * float(C.max())
        run = ep.sinkhorn_epsilon_solve(a, b, C, epsilon, variant="lifted")
        row, col = ep.marginal_violations(run.result.plan, run.problem)
        assert row + col <= run.config.delta * 2  # delta/2 internal + delta/2 lift budget

    def test_zero_marginals_compacted(self, rng):
        a = np.array([0.5, 0.0, 0.3, 0.2])
        b = np.array([0.25, 0.25, 0.0, 0.5])
        C = rng.random((4, 4))
        epsilon = 0.25 * float(C.max())
        run = ep.sinkhorn_epsilon_solve(a, b, C, epsilon)
        assert np.all(run.result.plan.P[1, :] == 0)
        assert np.all(run.result.plan.P[:, 2] == 0)
        cert = ep.certify(run.result, run.problem, epsilon, "sinkhorn")
        assert cert.satisfied

    def test_rejects_tiny_instance(self):
        with pytest.raises(ValueError, match="n >= 2"):
            ep.sinkhorn_epsilon_solve([1.0], [1.0], [[1.0]], 0.1)
