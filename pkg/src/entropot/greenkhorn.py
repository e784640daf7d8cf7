"""Greedy single-coordinate dual ascent (the Greenkhorn iteration).

Each iteration measures the row and column mismatches with the scalar
Bregman divergence rho(x, y) = y - x + x log(x/y), updates the single
potential coordinate with the largest mismatch so that its marginal becomes
exact, and maintains the plan's row/column sums incrementally in O(n) work.
Cached sums are rebuilt from the potentials every n iterations to bound
floating-point drift, and the termination test is re-verified against an
exact rebuild before the solver reports convergence.

Marginals may contain zeros: with the initialization u = a, v = b and the
convention rho(0, 0) = 0, zero coordinates are never selected and their rows
or columns stay identically zero.

Runs are strictly sequential; distinct runs share nothing.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import core
from .core import DualPotentials, Problem, TransportPlan
from .sinkhorn import (
    COLUMN,
    CONVERGED,
    ITERATION_CAP,
    LIFTED,
    ROW,
    VANILLA,
    EpsilonRun,
    IterationRecord,
    SinkhornConfig,
    SolveResult,
    _epsilon_problem,
    _trivial_zero_cost_run,
    lift_marginals,
)
from .transforms import equicontinuity_check
from .validation import as_float_vector, check_marginal

_CAP_FACTOR = 10


@dataclass
class GreenkhornState:
    """Mutable solver state: potentials, cached sums, and their mismatches."""

    f: np.ndarray
    g: np.ndarray
    row_sums: np.ndarray
    col_sums: np.ndarray
    rho_row: np.ndarray
    rho_col: np.ndarray
    k: int = 0


def iteration_bound(n, cost_sup, gamma, delta):
    """Worst-case iteration count 2*ceil(56 n max|C|/(gamma delta)) + 2*ceil(4 n max|C|/gamma)."""
    if cost_sup == 0:
        return 2
    return 2 * math.ceil(56.0 * n * cost_sup / (gamma * delta)) + 2 * math.ceil(
        4.0 * n * cost_sup / gamma
    )


def epsilon_parameters(n, cost_sup, epsilon):
    """Parameter rule for an epsilon-accurate rounded plan: gamma = eps/(6 log n),
    delta = min(1, eps/(8 max|C|)). The delta clamp keeps the general-mass
    excess-cost bound within budget even when the plan mass is not one."""
    if n < 2:
        raise ValueError("epsilon-driven parameter rule needs n >= 2")
    if cost_sup <= 0:
        raise ValueError("epsilon-driven parameter rule needs a nonzero cost matrix")
    return epsilon / (6.0 * math.log(n)), min(1.0, epsilon / (8.0 * cost_sup))


def generalized_pinsker_check(x, y):
    """Evaluate both sides of ||x - y||_1^2 <= 7 * sum_i rho(x_i, y_i).

    The inequality is valid when the mismatch total is at most one (callers
    filter); the pair (lhs, rhs) is returned either way so the caller can
    assert or log.
    """
    x = as_float_vector(x, "x")
    y = as_float_vector(y, "y")
    if x.shape != y.shape:
        raise ValueError("x and y must have the same length")
    if np.any(x < 0) or np.any(y < 0):
        raise ValueError("generalized Pinsker check requires nonnegative inputs")
    lhs = float(np.abs(x - y).sum()) ** 2
    rhs = 7.0 * float(np.sum(core.rho(x, y)))
    return lhs, rhs


def _initial_state(problem, gamma):
    a, b = problem.a, problem.b
    with np.errstate(divide="ignore"):
        f = gamma * np.log(a)
        g = gamma * np.log(b)
    log_P = (f[:, None] + g[None, :] - problem.C) / gamma
    with np.errstate(under="ignore"):
        P = np.exp(log_P)
    row_sums = P.sum(axis=1)
    col_sums = P.sum(axis=0)
    return GreenkhornState(
        f=f,
        g=g,
        row_sums=row_sums,
        col_sums=col_sums,
        rho_row=np.asarray(core.rho(a, row_sums)),
        rho_col=np.asarray(core.rho(b, col_sums)),
    )


def _recompute_sums(problem, gamma, f, g):
    log_P = (f[:, None] + g[None, :] - problem.C) / gamma
    with np.errstate(under="ignore"):
        P = np.exp(log_P)
    return P.sum(axis=1), P.sum(axis=0)


def _relative_drift(cached, exact):
    scale = np.maximum(np.abs(exact), 1e-300)
    return float(np.max(np.abs(cached - exact) / scale))


def greenkhorn_solve(problem, config, callback=None, callback_stride=1):
    """Run the greedy coordinate ascent until the violation sum drops below delta.

    Ties are deterministic: argmax takes the lowest index, and an exact tie
    between the best row and best column mismatch takes the column branch.
    A +inf mismatch (cached sum underflowed to zero against a positive
    target) forces selection of that coordinate; the exact rebalance that
    follows restores a finite cache.

    Trace records and callback invocations happen every ``callback_stride``
    iterations. Each emitted record evaluates the dual objective, an O(n^2)
    reduction, so stride-1 tracing loses the O(n) per-iteration cost profile;
    curve sampling at stride n keeps it amortized.
    """
    check_marginal(problem.a, "a")
    check_marginal(problem.b, "b")
    gamma = problem.gamma if config.gamma is None else config.gamma
    if config.gamma is not None and config.gamma != problem.gamma:
        raise ValueError(
            f"config gamma {config.gamma!r} disagrees with problem gamma {problem.gamma!r}"
        )
    if callback_stride < 1:
        raise ValueError("callback_stride must be a positive integer")
    n_rows, n_cols = problem.shape
    period = max(n_rows, n_cols)
    cap = config.max_iterations
    if cap is None:
        cap = max(2, _CAP_FACTOR * iteration_bound(max(n_rows, n_cols), problem.cost_sup,
                                                   gamma, config.delta))

    a, b = problem.a, problem.b
    log_a = np.where(a > 0, np.log(np.where(a > 0, a, 1.0)), -np.inf)
    log_b = np.where(b > 0, np.log(np.where(b > 0, b, 1.0)), -np.inf)
    Cg = problem.C / gamma
    CgT = np.ascontiguousarray(Cg.T)
    a_support = a > 0
    b_support = b > 0
    all_positive = bool(np.all(a_support) and np.all(b_support))

    # rho via (y - x) + x*log1p((x - y)/y); see core.rho for why the naive
    # log-ratio form cannot drive the greedy selection near convergence.
    def rho_against_a(sums):
        if all_positive:
            return (sums - a) + a * np.log1p((a - sums) / sums)
        out = sums.copy()
        diff = a[a_support] - sums[a_support]
        out[a_support] = -diff + a[a_support] * np.log1p(diff / sums[a_support])
        return out

    def rho_against_b(sums):
        if all_positive:
            return (sums - b) + b * np.log1p((b - sums) / sums)
        out = sums.copy()
        diff = b[b_support] - sums[b_support]
        out[b_support] = -diff + b[b_support] * np.log1p(diff / sums[b_support])
        return out

    # Potentials are carried divided by gamma (phi = f/gamma, psi = g/gamma)
    # so the inner loop never divides.
    state = _initial_state(problem, gamma)
    phi = state.f / gamma
    psi = state.g / gamma
    row_sums, col_sums = state.row_sums, state.col_sums
    rho_row, rho_col = state.rho_row.copy(), state.rho_col.copy()

    tracing = config.record_trace or callback is not None
    trace = []
    cache_drift = 0.0
    k = 0
    status = None

    def emit(side, index):
        pot = DualPotentials(gamma * phi, gamma * psi)
        osc_f, osc_g = equicontinuity_check(problem, pot)
        record = IterationRecord(
            k=k,
            dual_value=core._dual_value(problem, pot.f, pot.g),
            row_violation=float(np.abs(row_sums - a).sum()),
            col_violation=float(np.abs(col_sums - b).sum()),
            updated_side=side,
            updated_index=index,
            equicontinuity_f=osc_f,
            equicontinuity_g=osc_g,
        )
        if config.record_trace:
            trace.append(record)
        if callback is not None:
            callback(record, pot)

    def exact_violation():
        nonlocal cache_drift, row_sums, col_sums, rho_row, rho_col
        exact_rows, exact_cols = _recompute_sums(problem, gamma, gamma * phi, gamma * psi)
        cache_drift = max(cache_drift,
                          _relative_drift(row_sums, exact_rows),
                          _relative_drift(col_sums, exact_cols))
        row_sums, col_sums = exact_rows, exact_cols
        rho_row = rho_against_a(row_sums)
        rho_col = rho_against_b(col_sums)
        return float(np.abs(row_sums - a).sum() + np.abs(col_sums - b).sum())

    with np.errstate(under="ignore", divide="ignore", invalid="ignore"):
        # The initialization may already be feasible (all-ones kernel); check first.
        if float(np.abs(row_sums - a).sum() + np.abs(col_sums - b).sum()) <= config.delta:
            status = CONVERGED

        while status is None:
            I = int(np.argmax(rho_row))
            J = int(np.argmax(rho_col))
            if rho_row[I] > rho_col[J]:
                z = psi - Cg[I]
                shift = z.max()
                ez = np.exp(z - shift)
                mass = float(ez.sum())
                old_scale = math.exp(phi[I] + shift)
                phi[I] = log_a[I] - (shift + math.log(mass))
                new_scale = math.exp(phi[I] + shift)
                col_sums += (new_scale - old_scale) * ez
                np.maximum(col_sums, 0.0, out=col_sums)
                row_sums[I] = a[I]
                rho_row[I] = 0.0
                rho_col = rho_against_b(col_sums)
                side, index = ROW, I
            else:
                z = phi - CgT[J]
                shift = z.max()
                ez = np.exp(z - shift)
                mass = float(ez.sum())
                old_scale = math.exp(psi[J] + shift)
                psi[J] = log_b[J] - (shift + math.log(mass))
                new_scale = math.exp(psi[J] + shift)
                row_sums += (new_scale - old_scale) * ez
                np.maximum(row_sums, 0.0, out=row_sums)
                col_sums[J] = b[J]
                rho_col[J] = 0.0
                rho_row = rho_against_a(row_sums)
                side, index = COLUMN, J
            k += 1

            if tracing and k % callback_stride == 0:
                emit(side, index)

            if k % period == 0:
                exact_violation()

            violation = float(np.abs(row_sums - a).sum() + np.abs(col_sums - b).sum())
            if violation <= config.delta:
                # Cached sums drift; only an exact rebuild may declare convergence.
                if exact_violation() <= config.delta:
                    status = CONVERGED
                    break
            if k >= cap:
                status = ITERATION_CAP
                break

    pot = DualPotentials(gamma * phi, gamma * psi)
    plan = core.plan_from_potentials(problem, pot)
    return SolveResult(
        plan=plan,
        potentials=pot,
        iterations=k,
        trace=trace,
        status=status,
        gamma=gamma,
        delta=config.delta,
        cache_drift=cache_drift,
    )


def greenkhorn_epsilon_solve(a, b, C, epsilon, variant=VANILLA, record_trace=False, callback=None):
    """Solve to epsilon accuracy: gamma = eps/(6 log n), delta = min(1, eps/(8 max|C|)).

    ``variant="lifted"`` perturbs the marginals with ``lift_marginals`` and
    terminates at delta/2 against the lifted pair so the combined violation
    against the original marginals stays below delta. Vanilla handles zero
    marginal entries natively (zero coordinates are never updated).
    """
    a, b, C = _epsilon_problem(a, b, C, epsilon)
    if variant not in (VANILLA, LIFTED):
        raise ValueError(f"unknown variant {variant!r}")
    n = a.size
    cost_sup = float(np.max(C)) if C.size else 0.0
    if cost_sup == 0.0:
        gamma = epsilon / (6.0 * math.log(n))
        return _trivial_zero_cost_run(a, b, C, gamma, 2.0, epsilon, variant, record_trace)
    gamma, delta = epsilon_parameters(n, cost_sup, epsilon)

    problem = Problem(a, b, C, gamma)
    if variant == LIFTED:
        a_t, b_t = lift_marginals(a, b, delta)
        run_problem = Problem(a_t, b_t, C, gamma)
        config = SinkhornConfig(gamma=gamma, delta=delta / 2.0, record_trace=record_trace)
        result = greenkhorn_solve(run_problem, config, callback=callback)
        return EpsilonRun(result=result, problem=problem, config=config, epsilon=epsilon,
                          variant=variant, lifted_marginals=(a_t, b_t))

    config = SinkhornConfig(gamma=gamma, delta=delta, record_trace=record_trace)
    result = greenkhorn_solve(problem, config, callback=callback)
    return EpsilonRun(result=result, problem=problem, config=config, epsilon=epsilon, variant=variant)


class GreenkhornAuditor:
    """Re-derives the per-iteration inequalities of a greedy run.

    Feed every ``(record, potentials)`` callback pair, then ``finish(result)``.
    Checks (with their slack):

    * the gain of each update equals gamma * rho(target_I, current_sum_I)
      for the selected coordinate                       (1e-10)
    * gain >= (gamma/28n) * violation_sum^2 while both mismatch totals are
      at most one, and gain >= gamma/n otherwise        (1e-12)
    * with a reference optimum: the sup-norm distance of the potentials to
      the reference never increases                     (1e-7)
    * with a reference optimum: dual suboptimality <= 2 max|C| * violation_sum
      at every iteration including the start            (1e-7)
    * the initial dual gap is at most 4 max|C|          (1e-7); whether the
      tighter 2 max|C| holds is logged, not asserted
    * the reference pair itself stays within 2 max|C| of gamma*log(a, b) (1e-7)
    * on finish: the a-priori iteration bound, the termination contract, and
      cached-sum drift at most 1e-9 relative.

    Requires strictly positive marginals (audit instances are compacted).
    """

    def __init__(self, problem, config, reference=None):
        check_marginal(problem.a, "a", strictly_positive=True)
        check_marginal(problem.b, "b", strictly_positive=True)
        self.problem = problem
        self.gamma = problem.gamma if config.gamma is None else config.gamma
        self.delta = config.delta
        self.cost_sup = problem.cost_sup
        self.n = max(problem.shape)
        self.violations = []
        self.initial_gap = None
        self.initial_gap_within_tight_bound = None

        state = _initial_state(problem, self.gamma)
        h0 = core._dual_value(problem, state.f, state.g)
        self._prev = {
            "k": 0,
            "h": h0,
            "row_sums": state.row_sums,
            "col_sums": state.col_sums,
            "violation": float(np.abs(state.row_sums - problem.a).sum()
                               + np.abs(state.col_sums - problem.b).sum()),
        }

        if reference is not None:
            ref_pot, ref_value = reference
            self.ref_f, self.ref_g, self.ref_value = ref_pot.f, ref_pot.g, ref_value
            ga = self.gamma * np.log(problem.a)
            gb = self.gamma * np.log(problem.b)
            radius = max(float(np.max(np.abs(self.ref_f - ga))),
                         float(np.max(np.abs(self.ref_g - gb))))
            if radius > 2.0 * self.cost_sup + 1e-7:
                self._flag(0, "reference_normalization",
                           f"reference potential radius {radius:.3e} > 2*max|C| {2 * self.cost_sup:.3e}")
            self.initial_gap = ref_value - h0
            if self.initial_gap > 4.0 * self.cost_sup + 1e-7:
                self._flag(0, "initial_gap_bound",
                           f"initial dual gap {self.initial_gap:.3e} > 4*max|C| {4 * self.cost_sup:.3e}")
            self.initial_gap_within_tight_bound = bool(
                self.initial_gap <= 2.0 * self.cost_sup + 1e-7
            )
            self._prev["distance"] = max(float(np.max(np.abs(state.f - self.ref_f))),
                                         float(np.max(np.abs(state.g - self.ref_g))))
            self._check_suboptimality(0, h0, self._prev["violation"])
        else:
            self.ref_value = None

    def _flag(self, k, name, detail):
        self.violations.append((k, name, detail))

    def _check_suboptimality(self, k, h, violation):
        gap = self.ref_value - h
        if gap > 2.0 * self.cost_sup * violation + 1e-7:
            self._flag(k, "suboptimality_bound",
                       f"dual gap {gap:.3e} > 2*max|C|*violation {2 * self.cost_sup * violation:.3e}")

    def __call__(self, record, pot):
        k = record.k
        h = record.dual_value
        plan = core.plan_from_potentials(self.problem, pot)
        violation = record.violation_sum
        prev = self._prev

        gain = h - prev["h"]
        if record.updated_side == ROW:
            selected = core.rho(self.problem.a[record.updated_index],
                                prev["row_sums"][record.updated_index])
        else:
            selected = core.rho(self.problem.b[record.updated_index],
                                prev["col_sums"][record.updated_index])
        if math.isfinite(selected) and abs(gain - self.gamma * selected) > 1e-10:
            self._flag(k, "update_gain_identity",
                       f"gain {gain!r} != gamma * rho {self.gamma * selected!r}")

        mismatch_row = float(np.sum(core.rho(self.problem.a, prev["row_sums"])))
        mismatch_col = float(np.sum(core.rho(self.problem.b, prev["col_sums"])))
        if max(mismatch_row, mismatch_col) <= 1.0:
            floor = self.gamma / (28.0 * self.n) * prev["violation"] ** 2
            if gain < floor - 1e-12:
                self._flag(k, "improvement_lower_bound",
                           f"gain {gain:.3e} < (gamma/28n) * violation^2 {floor:.3e}")
        else:
            if gain < self.gamma / self.n - 1e-12:
                self._flag(k, "improvement_lower_bound",
                           f"gain {gain:.3e} < gamma/n {self.gamma / self.n:.3e}")

        if self.ref_value is not None:
            distance = max(float(np.max(np.abs(pot.f - self.ref_f))),
                           float(np.max(np.abs(pot.g - self.ref_g))))
            if distance > prev["distance"] + 1e-7:
                self._flag(k, "non_expansion",
                           f"sup-norm distance grew {prev['distance']:.6e} -> {distance:.6e}")
            self._check_suboptimality(k, h, violation)
        else:
            distance = None

        self._prev = {
            "k": k,
            "h": h,
            "row_sums": plan.row_sums.copy(),
            "col_sums": plan.col_sums.copy(),
            "violation": violation,
            "distance": distance,
        }

    def finish(self, result):
        bound = iteration_bound(self.n, self.cost_sup, self.gamma, self.delta)
        if result.converged and result.iterations > bound:
            self._flag(result.iterations, "iteration_bound",
                       f"{result.iterations} iterations exceed the bound {bound}")
        if result.converged:
            row, col = core.marginal_violations(result.plan, self.problem)
            if row + col > self.delta * (1 + 1e-12):
                self._flag(result.iterations, "termination_contract",
                           f"final violation {row + col:.3e} > delta {self.delta:.3e}")
        if result.cache_drift > 1e-9:
            self._flag(result.iterations, "cache_coherence",
                       f"incremental sums drifted {result.cache_drift:.3e} relative")
        return self.violations
