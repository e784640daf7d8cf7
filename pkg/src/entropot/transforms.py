"""Partial maximizations of the dual objective and their oscillation diagnostics.

For fixed f, the dual objective h(f, .) has a unique maximizer g given in
closed form by a log-sum-exp reduction; symmetrically for fixed g. The range
(max minus min) of the maximizer measured against gamma*log(marginal) is
bounded by max(C) - min(C), independent of the marginals and the input
vector, and that bound is what the per-iteration solver diagnostics assert.

All functions here are pure and safe under arbitrary concurrency.
"""

import numpy as np
from scipy.special import logsumexp

from .validation import as_float_vector


def c_gamma_transform(problem, f):
    """Maximizer of h(f, .) over the column potential.

    g_j = gamma*log(b_j) - gamma*logsumexp_i((f_i - C_ij)/gamma). The shift
    inside logsumexp is the exact column max. Coordinates with b_j = 0 return
    the -inf sentinel.
    """
    f = as_float_vector(f, "f")
    if not np.all(np.isfinite(f)):
        raise ValueError("transform input must be finite")
    gamma = problem.gamma
    lse = logsumexp((f[:, None] - problem.C) / gamma, axis=0)
    with np.errstate(divide="ignore"):
        return gamma * (np.log(problem.b) - lse)


def c_gamma_bar_transform(problem, g):
    """Maximizer of h(., g) over the row potential; mirror of `c_gamma_transform`."""
    g = as_float_vector(g, "g")
    if not np.all(np.isfinite(g)):
        raise ValueError("transform input must be finite")
    gamma = problem.gamma
    lse = logsumexp((g[None, :] - problem.C) / gamma, axis=1)
    with np.errstate(divide="ignore"):
        return gamma * (np.log(problem.a) - lse)


def oscillation(x, ref):
    """Range of x - ref: max(x - ref) - min(x - ref).

    Nonnegative and invariant under adding a constant to x. `ref` must be
    finite (zero-marginal coordinates are excluded upstream by compaction).
    """
    x = as_float_vector(x, "x")
    ref = as_float_vector(ref, "ref")
    if x.shape != ref.shape:
        raise ValueError("x and ref must have the same length")
    if not np.all(np.isfinite(ref)):
        raise ValueError("ref entries must be finite")
    diff = x - ref
    return float(np.max(diff) - np.min(diff))


def equicontinuity_check(problem, pot):
    """Oscillations of f against gamma*log(a) and g against gamma*log(b).

    Returns the pair of values rather than asserting, so callers can log the
    margin to the max(C) - min(C) bound over time. Coordinates whose marginal
    is zero are excluded (the bound concerns the support only).
    """
    gamma = problem.gamma
    row_support = problem.a > 0
    col_support = problem.b > 0
    osc_f = oscillation(pot.f[row_support], gamma * np.log(problem.a[row_support]))
    osc_g = oscillation(pot.g[col_support], gamma * np.log(problem.b[col_support]))
    return osc_f, osc_g


def cost_oscillation(problem):
    """max(C) - min(C), the equicontinuity bound for transforms and iterates."""
    return float(np.max(problem.C) - np.min(problem.C))
