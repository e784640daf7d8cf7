"""Alternating full-row/full-column dual ascent (the Sinkhorn iteration).

The iteration counter k starts at 0; even counters rebalance the row
potential, odd counters the column potential, and after each update the plan
is rebuilt from the potentials to evaluate the termination statistic
||P1 - a||_1 + ||P^T 1 - b||_1 <= delta. The just-updated side is exactly
feasible after every iteration.

A solver run is strictly sequential; distinct runs over distinct problems
share nothing and may proceed in parallel.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import core
from .core import DualPotentials, Problem, TransportPlan
from .transforms import cost_oscillation, equicontinuity_check
from .validation import as_float_vector, check_marginal

ROW = "row"
COLUMN = "column"
CONVERGED = "converged"
ITERATION_CAP = "iteration_cap"

VANILLA = "vanilla"
LIFTED = "lifted"

# Safety valve against floating-point stalls: cap at this multiple of the
# a-priori iteration bound when the caller does not pin max_iterations.
_CAP_FACTOR = 10


@dataclass(frozen=True)
class SinkhornConfig:
    """Solver knobs: regularization, l1 termination threshold, iteration cap.

    ``gamma=None`` means "use the problem's own gamma"; setting both to
    different values is rejected at solve time. ``max_iterations=None``
    resolves to ten times the worst-case iteration bound.
    """

    gamma: float = None
    delta: float = 1e-9
    max_iterations: int = None
    record_trace: bool = False

    def __post_init__(self):
        if self.gamma is not None and (not math.isfinite(self.gamma) or self.gamma <= 0):
            raise ValueError(f"gamma must be positive, got {self.gamma!r}")
        if not math.isfinite(self.delta) or self.delta <= 0:
            raise ValueError(f"delta must be positive, got {self.delta!r}")
        if self.max_iterations is not None and self.max_iterations < 2:
            raise ValueError(f"max_iterations must be at least 2, got {self.max_iterations!r}")


@dataclass(frozen=True)
class IterationRecord:
    """Per-iteration telemetry for plots and invariant audits (scalars only)."""

    k: int
    dual_value: float
    row_violation: float
    col_violation: float
    updated_side: str
    updated_index: int = None
    equicontinuity_f: float = math.nan
    equicontinuity_g: float = math.nan

    @property
    def violation_sum(self):
        return self.row_violation + self.col_violation


@dataclass
class SolveResult:
    """Output of a solver run: final plan, potentials, and optional trace."""

    plan: TransportPlan
    potentials: DualPotentials
    iterations: int
    trace: list = field(default_factory=list)
    status: str = CONVERGED
    gamma: float = None
    delta: float = None
    cache_drift: float = 0.0

    @property
    def converged(self):
        return self.status == CONVERGED


def iteration_bound(cost_sup, gamma, delta):
    """Worst-case Sinkhorn iteration count 2 + 2*ceil(2*max|C| / (gamma*delta))."""
    if cost_sup == 0:
        return 2
    return 2 + 2 * math.ceil(2.0 * cost_sup / (gamma * delta))


def epsilon_parameters(n, cost_sup, epsilon):
    """Parameter rule for an epsilon-accurate rounded plan: gamma = eps/(4 log n),
    delta = eps/(8 max|C|). The two budget halves match: 2*gamma*log(n) = eps/2
    and 4*delta*max|C| = eps/2."""
    if n < 2:
        raise ValueError("epsilon-driven parameter rule needs n >= 2")
    if cost_sup <= 0:
        raise ValueError("epsilon-driven parameter rule needs a nonzero cost matrix")
    return epsilon / (4.0 * math.log(n)), epsilon / (8.0 * cost_sup)


def _resolve_gamma(problem, config):
    if config.gamma is None:
        return problem.gamma
    if not math.isclose(config.gamma, problem.gamma, rel_tol=0.0, abs_tol=0.0):
        raise ValueError(
            f"config gamma {config.gamma!r} disagrees with problem gamma {problem.gamma!r}"
        )
    return config.gamma


def _resolve_cap(problem, config, gamma):
    if config.max_iterations is not None:
        return config.max_iterations
    return max(2, _CAP_FACTOR * iteration_bound(problem.cost_sup, gamma, config.delta))


def sinkhorn_solve(problem, config, init=None, callback=None):
    """Run the alternating dual ascent until the violation sum drops below delta.

    Parameters
    ----------
    problem : Problem
        Instance with strictly positive marginals (compact zeros away first).
    config : SinkhornConfig
        Termination threshold, optional gamma override, iteration cap, tracing.
    init : DualPotentials, optional
        Any finite starting potentials; defaults to f = gamma*log(a),
        g = gamma*log(b). The per-iteration oscillation bound holds for every
        positive start.
    callback : callable, optional
        Invoked after every iteration as ``callback(record, potentials)`` with
        a copy of the current potentials; used by the invariant auditors.

    Returns
    -------
    SolveResult
        Hitting the iteration cap is reported in ``status``, never raised.
    """
    check_marginal(problem.a, "a", strictly_positive=True)
    check_marginal(problem.b, "b", strictly_positive=True)
    gamma = _resolve_gamma(problem, config)
    max_iterations = _resolve_cap(problem, config, gamma)
    a, b, C = problem.a, problem.b, problem.C

    log_a = np.log(a)
    log_b = np.log(b)
    if init is None:
        f = gamma * log_a.copy()
        g = gamma * log_b.copy()
    else:
        f = as_float_vector(init.f, "init.f").copy()
        g = as_float_vector(init.g, "init.g").copy()
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(g))):
            raise ValueError("initial potentials must be finite")

    tracing = config.record_trace or callback is not None
    trace = []

    # Two persistent n x n buffers keep the loop allocation-free: M carries
    # the shifted costs, then the log plan, then the plan itself; T holds the
    # max-shifted exponentials of the update reduction.
    M = np.empty_like(C)
    T = np.empty_like(C)

    k = 0
    while True:
        # One max-shifted reduction per update: T = exp(shifted - peak) both
        # closes the log-sum-exp for the new potential and, rescaled by
        # target/sums, is exactly the rebuilt plan exp((f + g - C)/gamma).
        # No entry can overflow: the rebalanced side is bounded by its target.
        with np.errstate(under="ignore"):
            if k % 2 == 0:
                np.subtract(g[None, :], C, out=M)
                M /= gamma
                peak = M.max(axis=1)
                np.subtract(M, peak[:, None], out=T)
                np.exp(T, out=T)
                sums = T.sum(axis=1)
                f = gamma * (log_a - (peak + np.log(sums)))
                P = np.multiply(T, (a / sums)[:, None], out=T)
            else:
                np.subtract(f[:, None], C, out=M)
                M /= gamma
                peak = M.max(axis=0)
                np.subtract(M, peak[None, :], out=T)
                np.exp(T, out=T)
                sums = T.sum(axis=0)
                g = gamma * (log_b - (peak + np.log(sums)))
                P = np.multiply(T, (b / sums)[None, :], out=T)
            k += 1

        row_sums = P.sum(axis=1)
        col_sums = P.sum(axis=0)
        row_violation = float(np.abs(row_sums - a).sum())
        col_violation = float(np.abs(col_sums - b).sum())

        if tracing:
            pot = DualPotentials(f, g)
            osc_f, osc_g = equicontinuity_check(problem, pot)
            record = IterationRecord(
                k=k,
                dual_value=core.dual_objective(problem, pot),
                row_violation=row_violation,
                col_violation=col_violation,
                updated_side=ROW if (k - 1) % 2 == 0 else COLUMN,
                equicontinuity_f=osc_f,
                equicontinuity_g=osc_g,
            )
            if config.record_trace:
                trace.append(record)
            if callback is not None:
                callback(record, pot.copy())

        if row_violation + col_violation <= config.delta:
            status = CONVERGED
            break
        if k >= max_iterations:
            status = ITERATION_CAP
            break

    return SolveResult(
        plan=TransportPlan(P),
        potentials=DualPotentials(f, g),
        iterations=k,
        trace=trace,
        status=status,
        gamma=gamma,
        delta=config.delta,
    )


def lift_marginals(a, b, delta):
    """Perturb (a, b) towards uniform so every entry is at least delta/(8n).

    Returns (1 - delta/8) * ((a, b) + delta/(n(8-delta)) * 1), renormalized
    against accumulated rounding so the outputs sum to one exactly. The l1
    distortion is at most delta/4 per vector.
    """
    if not (0 < delta < 2):
        raise ValueError(f"delta must lie in (0, 2), got {delta!r}")
    a = check_marginal(a, "a")
    b = check_marginal(b, "b")
    n = a.size

    def lift(x):
        lifted = (1.0 - delta / 8.0) * (x + delta / (n * (8.0 - delta)))
        return lifted / lifted.sum()

    return lift(a), lift(b)


@dataclass
class EpsilonRun:
    """A solver run configured by the epsilon-driven parameter rule.

    ``problem`` keeps the original marginals (with the resolved gamma) so
    certificates measure accuracy against the instance actually asked about,
    even when the run itself used lifted marginals.
    """

    result: SolveResult
    problem: Problem
    config: SinkhornConfig
    epsilon: float
    variant: str
    lifted_marginals: tuple = None
    note: str = None


def _epsilon_problem(a, b, C, epsilon):
    a = check_marginal(a, "a")
    b = check_marginal(b, "b")
    C = np.asarray(C, dtype=np.float64)
    if a.size < 2:
        raise ValueError("epsilon-driven parameter rule needs n >= 2")
    if not (math.isfinite(epsilon) and epsilon > 0):
        raise ValueError(f"epsilon must be positive, got {epsilon!r}")
    return a, b, C


def _trivial_zero_cost_run(a, b, C, gamma, delta, epsilon, variant, record_trace):
    problem = Problem(a, b, C, gamma)
    with np.errstate(divide="ignore"):
        pot = DualPotentials(gamma * np.log(a), gamma * np.log(b))
    plan = core.plan_from_potentials(problem, pot)
    result = SolveResult(plan=plan, potentials=pot, iterations=0, trace=[],
                         status=CONVERGED, gamma=gamma, delta=delta)
    config = SinkhornConfig(gamma=gamma, delta=delta, record_trace=record_trace)
    return EpsilonRun(result=result, problem=problem, config=config, epsilon=epsilon,
                      variant=variant, note="zero cost matrix: a b^T is already optimal")


def sinkhorn_epsilon_solve(a, b, C, epsilon, variant=VANILLA, record_trace=False, callback=None):
    """Solve to epsilon accuracy: gamma = eps/(4 log n), delta = eps/(8 max|C|).

    ``variant="lifted"`` first nudges the marginals away from zero by
    ``lift_marginals`` and terminates at delta/2 against the lifted pair, so
    the combined violation against the original marginals stays below delta.
    The vanilla variant with zero marginal entries runs on the compacted
    instance and embeds the result back (zero rows/columns preserved).

    Returns the unrounded run plus the parameters used; a zero cost matrix
    short-circuits to the trivially optimal product plan with a note.
    """
    a, b, C = _epsilon_problem(a, b, C, epsilon)
    if variant not in (VANILLA, LIFTED):
        raise ValueError(f"unknown variant {variant!r}")
    n = a.size
    cost_sup = float(np.max(C)) if C.size else 0.0
    if cost_sup == 0.0:
        gamma = epsilon / (4.0 * math.log(n))
        return _trivial_zero_cost_run(a, b, C, gamma, 2.0, epsilon, variant, record_trace)
    gamma, delta = epsilon_parameters(n, cost_sup, epsilon)

    problem = Problem(a, b, C, gamma)
    if variant == LIFTED:
        lift_delta = min(delta, 1.0)
        a_t, b_t = lift_marginals(a, b, lift_delta)
        run_problem = Problem(a_t, b_t, C, gamma)
        config = SinkhornConfig(gamma=gamma, delta=delta / 2.0, record_trace=record_trace)
        result = sinkhorn_solve(run_problem, config, callback=callback)
        return EpsilonRun(result=result, problem=problem, config=config, epsilon=epsilon,
                          variant=variant, lifted_marginals=(a_t, b_t))

    config = SinkhornConfig(gamma=gamma, delta=delta, record_trace=record_trace)
    if np.any(a == 0) or np.any(b == 0):
        compact, cmap = core.compact_zeros(problem)
        result = sinkhorn_solve(compact, config, callback=callback)
        result.plan = core.embed_plan(result.plan, cmap, n)
        result.potentials = core.embed_potentials(result.potentials, cmap, n)
        return EpsilonRun(result=result, problem=problem, config=config, epsilon=epsilon,
                          variant=variant, note="zero marginals compacted away for the solve")
    result = sinkhorn_solve(problem, config, callback=callback)
    return EpsilonRun(result=result, problem=problem, config=config, epsilon=epsilon, variant=variant)


class SinkhornAuditor:
    """Re-derives the per-iteration inequalities of a run and logs breaches.

    Designed as a solver callback: feed it every ``(record, potentials)`` pair,
    then call ``finish(result)``. Checks (with their slack):

    * monotone dual ascent, and for k >= 2 the quadratic improvement lower
      bound gain >= (gamma/2) * violation_sum^2        (1e-10)
    * the row/column update gain equals gamma * KL(target || current sums)
      exactly                                           (1e-10)
    * the just-updated side of the plan is exactly feasible for k >= 2 (1e-10)
    * oscillation of the potentials against gamma*log(marginal) stays within
      max(C) - min(C)                                   (1e-9)
    * with a reference optimum: dual suboptimality <= max|C| * violation_sum
      for k >= 2                                        (1e-8)
    * on finish: the a-priori iteration bound and the termination contract.

    Violations are collected, not raised, so benchmark runs can report them.
    """

    def __init__(self, problem, config, reference=None):
        self.problem = problem
        self.gamma = problem.gamma if config.gamma is None else config.gamma
        self.delta = config.delta
        self.cost_osc = cost_oscillation(problem)
        self.cost_sup = problem.cost_sup
        self.reference_value = None if reference is None else reference[1]
        self.violations = []
        self._prev = None

    def _flag(self, k, name, detail):
        self.violations.append((k, name, detail))

    def __call__(self, record, pot):
        k = record.k
        h = record.dual_value
        plan = core.plan_from_potentials(self.problem, pot)
        v = record.violation_sum

        if k >= 2:
            side_violation = record.col_violation if k % 2 == 0 else record.row_violation
            if side_violation > 1e-10:
                self._flag(k, "alternating_exactness",
                           f"just-updated side violation {side_violation:.3e}")
            bound = self.cost_osc + 1e-9
            if record.equicontinuity_f > bound or record.equicontinuity_g > bound:
                self._flag(k, "equicontinuity",
                           f"oscillations ({record.equicontinuity_f:.3e}, {record.equicontinuity_g:.3e})"
                           f" exceed {self.cost_osc:.3e}")
            if self.reference_value is not None:
                gap = self.reference_value - h
                if gap > self.cost_sup * v + 1e-8:
                    self._flag(k, "suboptimality_bound",
                               f"dual gap {gap:.3e} > max|C| * violation {self.cost_sup * v:.3e}")

        if self._prev is not None:
            pk, ph, pv, prow, pcol = self._prev
            gain = h - ph
            if gain < -1e-10:
                self._flag(k, "monotone_ascent", f"dual value decreased by {-gain:.3e}")
            if pk >= 2:
                if gain < 0.5 * self.gamma * pv * pv - 1e-10:
                    self._flag(k, "improvement_lower_bound",
                               f"gain {gain:.3e} < (gamma/2) * violation^2 {0.5 * self.gamma * pv * pv:.3e}")
                if pk % 2 == 0:
                    expected = self.gamma * core.kl_divergence(self.problem.a, prow)
                else:
                    expected = self.gamma * core.kl_divergence(self.problem.b, pcol)
                if math.isfinite(expected) and abs(gain - expected) > 1e-10:
                    self._flag(k, "update_gain_identity",
                               f"gain {gain!r} != gamma * KL {expected!r}")

        self._prev = (k, h, v, plan.row_sums.copy(), plan.col_sums.copy())

    def finish(self, result):
        bound = iteration_bound(self.cost_sup, self.gamma, self.delta)
        if result.converged and result.iterations > bound:
            self._flag(result.iterations, "iteration_bound",
                       f"{result.iterations} iterations exceed the bound {bound}")
        if result.converged:
            row, col = core.marginal_violations(result.plan, self.problem)
            if row + col > self.delta * (1 + 1e-12):
                self._flag(result.iterations, "termination_contract",
                           f"final violation {row + col:.3e} > delta {self.delta:.3e}")
        return self.violations
