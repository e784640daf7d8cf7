"""Scikit-learn style estimator facade over the functional solvers.

The solvers are fit-shaped: hyperparameters in the constructor, a ``fit``
that consumes a cost matrix with a pair of marginals and exposes the solution
through trailing-underscore attributes. There is no transform of new data
(like clustering or manifold estimators); the value of the sklearn surface is
``get_params``/``set_params``/``clone`` compatibility for parameter sweeps.

Either give ``epsilon`` (the target transport-cost accuracy; the
regularization and termination threshold are then derived from the instance
at fit time) or give ``gamma`` with an explicit ``delta``.
"""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .core import Problem
from .greenkhorn import greenkhorn_epsilon_solve, greenkhorn_solve
from .rounding import certified_cost, round_to_polytope
from .sinkhorn import (
    LIFTED,
    VANILLA,
    SinkhornConfig,
    sinkhorn_epsilon_solve,
    sinkhorn_solve,
)
from .validation import check_cost_matrix, check_marginal


class _BaseTransportSolver(BaseEstimator):
    def __init__(self, epsilon=None, gamma=None, delta=None, lifted=False,
                 max_iter=None, record_trace=False):
        self.epsilon = epsilon
        self.gamma = gamma
        self.delta = delta
        self.lifted = lifted
        self.max_iter = max_iter
        self.record_trace = record_trace

    def _marginals(self, C, a, b):
        C = check_cost_matrix(C, "C")
        if C.shape[0] != C.shape[1]:
            raise ValueError(f"cost matrix must be square, got {C.shape}")
        n = C.shape[0]
        a = np.full(n, 1.0 / n) if a is None else check_marginal(a, "a")
        b = np.full(n, 1.0 / n) if b is None else check_marginal(b, "b")
        if a.size != n or b.size != n:
            raise ValueError("marginal lengths must match the cost matrix")
        return C, a, b

    def fit(self, C, a=None, b=None):
        """Solve the transport instance (C, a, b); marginals default to uniform.

        Sets ``plan_``, ``f_``, ``g_``, ``n_iter_``, ``converged_``,
        ``gamma_``, ``delta_``, ``trace_``, and ``result_``.
        """
        C, a, b = self._marginals(C, a, b)
        if self.epsilon is not None:
            variant = LIFTED if self.lifted else VANILLA
            run = self._epsilon_solve(a, b, C, float(self.epsilon), variant,
                                      self.record_trace)
            result = run.result
            self.problem_ = run.problem
            self.epsilon_run_ = run
        else:
            if self.gamma is None:
                raise ValueError("set epsilon or gamma before fitting")
            if self.lifted:
                raise ValueError("lifted marginals require the epsilon parameterization")
            delta = 1e-9 if self.delta is None else float(self.delta)
            problem = Problem(a, b, C, float(self.gamma))
            config = SinkhornConfig(delta=delta, max_iterations=self.max_iter,
                                    record_trace=self.record_trace)
            result = self._solve(problem, config)
            self.problem_ = problem
            self.epsilon_run_ = None
        self.result_ = result
        self.plan_ = np.asarray(result.plan.P)
        self.f_ = result.potentials.f.copy()
        self.g_ = result.potentials.g.copy()
        self.n_iter_ = result.iterations
        self.converged_ = result.converged
        self.gamma_ = result.gamma
        self.delta_ = result.delta
        self.trace_ = list(result.trace)
        return self

    def rounded_plan(self):
        """Final plan projected onto the transport polytope of the fitted marginals."""
        check_is_fitted(self, "result_")
        return np.asarray(round_to_polytope(self.result_.plan,
                                            self.problem_.a, self.problem_.b).P)

    def transport_cost(self, rounded=True):
        """Cost of the (optionally rounded) fitted plan."""
        check_is_fitted(self, "result_")
        P = self.rounded_plan() if rounded else self.plan_
        return certified_cost(P, self.problem_)


class SinkhornSolver(_BaseTransportSolver):
    """Entropic transport via alternating full-row/column dual updates.

    Examples
    --------
    >>> import numpy as np
    >>> C = np.array([[0.0, 1.0], [1.0, 0.0]])
    >>> solver = SinkhornSolver(gamma=1.0, delta=1e-10)
    >>> plan = solver.fit(C, [0.5, 0.5], [0.5, 0.5]).plan_
    >>> np.round(plan, 6)
    array([[0.365529, 0.134471],
           [0.134471, 0.365529]])
    """

    @staticmethod
    def _epsilon_solve(a, b, C, epsilon, variant, record_trace):
        return sinkhorn_epsilon_solve(a, b, C, epsilon, variant=variant,
                                      record_trace=record_trace)

    @staticmethod
    def _solve(problem, config):
        return sinkhorn_solve(problem, config)


class GreenkhornSolver(_BaseTransportSolver):
    """Entropic transport via greedy single-coordinate dual updates."""

    @staticmethod
    def _epsilon_solve(a, b, C, epsilon, variant, record_trace):
        return greenkhorn_epsilon_solve(a, b, C, epsilon, variant=variant,
                                        record_trace=record_trace)

    @staticmethod
    def _solve(problem, config):
        return greenkhorn_solve(problem, config)
