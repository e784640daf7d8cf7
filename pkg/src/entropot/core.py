"""Problem representation and the operations every solver shares.

The entropic optimal transport instance is the triple (a, b, C) plus a
regularization strength gamma. All solver arithmetic happens in the dual/log
domain: potentials (f, g) with plan entries exp((f_i + g_j - C_ij) / gamma).
The scaling-vector form u = exp(f/gamma), v = exp(g/gamma) is mathematically
identical but underflows at the small gamma values the epsilon-driven
parameter rules produce, so it is never materialized.

``Problem`` and ``GibbsKernel`` are immutable after construction and safe to
share across threads; potentials, plans, and solver state are single-owner
mutable values.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .exceptions import NumericalOverflowError
from .validation import (
    as_float_vector,
    check_cost_matrix,
    check_gamma,
    check_marginal,
)

# Largest exponent that exp() maps into the finite float64 range.
_EXP_OVERFLOW = math.log(np.finfo(np.float64).max)  # ~709.78


def _readonly(arr):
    out = np.array(arr, dtype=np.float64, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Problem:
    """Immutable transport instance: marginals a, b, cost C, regularization gamma.

    The public contract is square (len(a) == len(b) == C.shape[0]); rectangular
    instances arise internally from zero-marginal compaction and are accepted.
    """

    a: np.ndarray
    b: np.ndarray
    C: np.ndarray
    gamma: float

    def __post_init__(self):
        a = check_marginal(self.a, "a")
        b = check_marginal(self.b, "b")
        C = check_cost_matrix(self.C, "C")
        if C.shape != (a.size, b.size):
            raise ValueError(f"C has shape {C.shape}, expected ({a.size}, {b.size})")
        object.__setattr__(self, "a", _readonly(a))
        object.__setattr__(self, "b", _readonly(b))
        object.__setattr__(self, "C", _readonly(C))
        object.__setattr__(self, "gamma", check_gamma(self.gamma))

    @property
    def n(self):
        """Number of source points (equals target points in the square case)."""
        return self.a.size

    @property
    def shape(self):
        return self.C.shape

    @property
    def cost_sup(self):
        """Largest absolute cost entry."""
        return float(np.max(self.C)) if self.C.size else 0.0

    def with_gamma(self, gamma):
        """Same instance under a different regularization strength."""
        return Problem(self.a, self.b, self.C, gamma)


@dataclass(frozen=True)
class GibbsKernel:
    """Log-domain Gibbs kernel: log_K[i, j] = -C[i, j] / gamma (never exponentiated here)."""

    log_K: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "log_K", _readonly(self.log_K))


@dataclass
class DualPotentials:
    """Row/column potentials (f, g) in the log domain.

    Entries are finite for positive marginals. Coordinates whose marginal is
    zero carry -inf (the zero scaling u_i = 0 in log form); +inf and nan are
    never valid.
    """

    f: np.ndarray
    g: np.ndarray

    def __post_init__(self):
        self.f = as_float_vector(self.f, "f").copy()
        self.g = as_float_vector(self.g, "g").copy()
        for name, vec in (("f", self.f), ("g", self.g)):
            if np.any(np.isnan(vec)) or np.any(vec == np.inf):
                raise ValueError(f"potential {name} contains nan or +inf entries")

    def copy(self):
        return DualPotentials(self.f.copy(), self.g.copy())


@dataclass(frozen=True)
class TransportPlan:
    """Nonnegative matrix with cached row sums, column sums, and total mass."""

    P: np.ndarray
    row_sums: np.ndarray = field(default=None)
    col_sums: np.ndarray = field(default=None)
    total: float = field(default=None)

    def __post_init__(self):
        P = np.asarray(self.P, dtype=np.float64)
        if P.ndim != 2:
            raise ValueError(f"plan must be a matrix, got shape {P.shape}")
        if np.any(P < 0) or not np.all(np.isfinite(P)):
            raise ValueError("plan entries must be finite and nonnegative")
        object.__setattr__(self, "P", _readonly(P))
        object.__setattr__(self, "row_sums", _readonly(P.sum(axis=1)))
        object.__setattr__(self, "col_sums", _readonly(P.sum(axis=0)))
        object.__setattr__(self, "total", float(self.row_sums.sum()))

    @property
    def shape(self):
        return self.P.shape


@dataclass(frozen=True)
class CompactionMap:
    """Indices of the rows/columns kept when zero-marginal coordinates are dropped."""

    kept_rows: np.ndarray
    kept_cols: np.ndarray
    original_shape: tuple

    def __post_init__(self):
        for name, idx, bound in (
            ("kept_rows", self.kept_rows, self.original_shape[0]),
            ("kept_cols", self.kept_cols, self.original_shape[1]),
        ):
            arr = np.asarray(idx, dtype=np.intp)
            if arr.ndim != 1 or (arr.size and (np.any(np.diff(arr) <= 0) or arr[0] < 0 or arr[-1] >= bound)):
                raise ValueError(f"{name} must be strictly increasing indices within [0, {bound})")
            object.__setattr__(self, name, arr)

    @property
    def is_identity(self):
        n, m = self.original_shape
        return self.kept_rows.size == n and self.kept_cols.size == m


def build_kernel(problem):
    """Build the log-domain Gibbs kernel log_K = -C / gamma.

    One division and one negation per entry; no exponentiation happens here.

    Raises
    ------
    NumericalOverflowError
        If any entry of C / gamma is not finite (tiny gamma against huge cost).
    """
    with np.errstate(over="ignore"):
        log_K = -(problem.C / problem.gamma)
    if not np.all(np.isfinite(log_K)):
        i, j = np.argwhere(~np.isfinite(log_K))[0]
        raise NumericalOverflowError(
            f"kernel entry ({i}, {j}) overflowed: C={problem.C[i, j]!r}, gamma={problem.gamma!r}"
        )
    return GibbsKernel(log_K)


def _log_plan(problem, f, g):
    """Log-domain plan entries (f_i + g_j - C_ij) / gamma."""
    return (f[:, None] + g[None, :] - problem.C) / problem.gamma


def plan_from_potentials(problem, pot):
    """Reconstruct the transport plan P_ij = exp((f_i + g_j - C_ij) / gamma).

    Computed fully in the log domain with a single exponentiation per entry.
    Underflow flushes entries to exact zero (documented behavior, not an
    error); -inf potentials likewise give zero rows or columns.

    Raises
    ------
    NumericalOverflowError
        If any entry exponentiates past the float64 range, naming (i, j).
    """
    log_P = _log_plan(problem, pot.f, pot.g)
    big = log_P > _EXP_OVERFLOW
    if np.any(big):
        i, j = np.argwhere(big)[0]
        raise NumericalOverflowError(f"plan entry ({i}, {j}) overflowed: log value {log_P[i, j]!r}")
    with np.errstate(under="ignore"):
        return TransportPlan(np.exp(log_P))


def _dual_value(problem, f, g):
    """Dual objective tolerating -inf potentials at zero-marginal coordinates.

    Uses the convention 0 * (-inf) = 0 in the linear terms, which matches
    restricting the problem to the support of (a, b).
    """
    a, b = problem.a, problem.b
    linear = float(np.dot(f[a > 0], a[a > 0]) + np.dot(g[b > 0], b[b > 0]))
    aggregate = float(logsumexp(_log_plan(problem, f, g)))
    if aggregate > _EXP_OVERFLOW:
        raise NumericalOverflowError(f"dual objective aggregate overflowed: log value {aggregate!r}")
    return linear - problem.gamma * math.exp(aggregate)


def dual_objective(problem, pot):
    """Evaluate h(f, g) = <f, a> + <g, b> - gamma * sum_ij exp((f_i + g_j - C_ij)/gamma).

    The double sum is reduced by log-sum-exp and exponentiated once, so the
    value is stable even when individual plan entries underflow.

    Raises
    ------
    ValueError
        If the potentials contain -inf entries (zero-marginal coordinates must
        be compacted away before evaluating the objective).
    NumericalOverflowError
        If the aggregate itself exceeds the float64 range.
    """
    if not (np.all(np.isfinite(pot.f)) and np.all(np.isfinite(pot.g))):
        raise ValueError("dual_objective requires finite potentials")
    return _dual_value(problem, pot.f, pot.g)


def marginal_violations(plan, problem):
    """l1 marginal violations (||P 1 - a||_1, ||P^T 1 - b||_1).

    These equal the l1 norms of the dual gradient blocks at the potentials
    that generated the plan.
    """
    if plan.shape != problem.shape:
        raise ValueError(f"plan shape {plan.shape} does not match problem shape {problem.shape}")
    row = float(np.abs(plan.row_sums - problem.a).sum())
    col = float(np.abs(plan.col_sums - problem.b).sum())
    return row, col


def kl_divergence(x, y):
    """KL(x || y) = sum_i x_i log(x_i / y_i) with 0 log 0 = 0.

    Returns +inf when some x_i > 0 sits on y_i = 0 (the standard sentinel;
    Pinsker-style lower bounds stay vacuously true).
    """
    x = as_float_vector(x, "x")
    y = as_float_vector(y, "y")
    if x.shape != y.shape:
        raise ValueError("x and y must have the same length")
    if np.any(x < 0) or np.any(y < 0):
        raise ValueError("KL divergence requires nonnegative inputs")
    support = x > 0
    if np.any(y[support] == 0):
        return math.inf
    xs, ys = x[support], y[support]
    return float(np.dot(xs, np.log(xs / ys)))


def rho(x, y):
    """Bregman mismatch rho(x, y) = y - x + x log(x / y) for the entropy kernel.

    Vectorizes over array inputs. Conventions: rho(0, y) = y (in particular
    rho(0, 0) = 0) and rho(x, 0) = +inf for x > 0. Always nonnegative, zero
    iff x == y.

    Evaluated as (y - x) + x*log1p((x - y)/y): the naive log(x/y) form loses
    every significant digit once |x - y| drops near sqrt(eps)*x, and the
    greedy solver selects coordinates by exactly these tiny values.
    """
    x_arr = np.asarray(x, dtype=np.float64)
    y_arr = np.asarray(y, dtype=np.float64)
    if np.any(x_arr < 0) or np.any(y_arr < 0):
        raise ValueError("rho requires nonnegative inputs")
    with np.errstate(divide="ignore", invalid="ignore"):
        safe_y = np.where(y_arr > 0, y_arr, 1.0)
        out = (y_arr - x_arr) + x_arr * np.log1p((x_arr - y_arr) / safe_y)
        out = np.where(x_arr == 0, y_arr, out)
        out = np.where((x_arr > 0) & (y_arr == 0), np.inf, out)
    if np.ndim(x) == 0 and np.ndim(y) == 0:
        return float(out)
    return out


def compact_zeros(problem):
    """Drop zero-marginal rows/columns, returning the compact instance and index map.

    The compacted marginals still sum to one because only exact zeros are
    removed. The optimal plan of the original instance is zero outside the
    kept rows and columns, so nothing is lost.
    """
    kept_rows = np.flatnonzero(problem.a > 0)
    kept_cols = np.flatnonzero(problem.b > 0)
    if kept_rows.size == 0 or kept_cols.size == 0:
        raise ValueError("cannot compact an all-zero marginal")
    cmap = CompactionMap(kept_rows, kept_cols, problem.shape)
    if cmap.is_identity:
        return problem, cmap
    compact = Problem(
        problem.a[kept_rows],
        problem.b[kept_cols],
        problem.C[np.ix_(kept_rows, kept_cols)],
        problem.gamma,
    )
    return compact, cmap


def embed_plan(compact_plan, cmap, n):
    """Embed a compacted plan back into the full n x n grid, zero elsewhere.

    Marginal violations of the embedded plan against the original marginals
    equal those of the compact plan against the compacted marginals.
    """
    rows, cols = cmap.kept_rows, cmap.kept_cols
    if compact_plan.shape != (rows.size, cols.size):
        raise ValueError(
            f"compact plan shape {compact_plan.shape} does not match map ({rows.size}, {cols.size})"
        )
    if (rows.size and rows[-1] >= n) or (cols.size and cols[-1] >= n):
        raise IndexError(f"compaction map indices exceed target size {n}")
    full = np.zeros((n, n))
    full[np.ix_(rows, cols)] = compact_plan.P
    return TransportPlan(full)


def embed_potentials(compact_pot, cmap, n):
    """Embed compacted potentials into length n, -inf at dropped coordinates."""
    f = np.full(n, -np.inf)
    g = np.full(n, -np.inf)
    f[cmap.kept_rows] = compact_pot.f
    g[cmap.kept_cols] = compact_pot.g
    return DualPotentials(f, g)
