"""Ground-truth machinery: exact transportation LP, reference dual optimum, certificates.

The exact solver is a purpose-built transportation network simplex over the
bipartite graph of rows and columns. The basis is a spanning tree; pivots
select the most negative reduced cost (lowest index on ties) and fall back to
Bland's anti-cycling rule after a long degenerate streak, which guarantees
termination. Optimality is certified by dual feasibility of the final
spanning-tree potentials (all reduced costs nonnegative to tolerance), and
the reported flows are recomputed exactly from the optimal tree so they carry
no pivot-accumulated drift.

Solves are independent per instance and parallel-safe across instances.
"""

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from . import core
from .core import DualPotentials, TransportPlan
from .exceptions import OracleError
from .rounding import certified_cost, round_to_polytope
from .sinkhorn import SinkhornConfig, sinkhorn_solve
from .validation import as_float_vector, check_cost_matrix, check_marginal

# Reduced costs are certified nonnegative down to this tolerance.
DUAL_FEASIBILITY_TOL = 1e-10

_MAX_ORACLE_SIZE = 512


@dataclass(frozen=True)
class Certificate:
    """Accuracy certificate for a solver run against the exact optimum.

    ``gap = rounded_cost - exact_cost`` is the realized excess cost and
    ``bound`` is the a-priori excess implied by the run's regularization and
    final marginal violation; ``satisfied`` records whether the gap met the
    requested epsilon.
    """

    rounded_plan: TransportPlan
    rounded_cost: float
    exact_cost: float
    epsilon: float
    gap: float
    bound: float
    satisfied: bool


def _spanning_tree_state(adj, n_nodes, m, C, root=0):
    """BFS over the basis tree: parents, depths, and dual potentials."""
    parent = np.full(n_nodes, -1, dtype=np.intp)
    depth = np.zeros(n_nodes, dtype=np.intp)
    pi = np.zeros(n_nodes)
    parent[root] = root
    seen = np.zeros(n_nodes, dtype=bool)
    seen[root] = True
    queue = deque([root])
    visited = 1
    while queue:
        u = queue.popleft()
        for w in adj[u]:
            if not seen[w]:
                seen[w] = True
                parent[w] = u
                depth[w] = depth[u] + 1
                cost = C[u, w - m] if u < m else C[w, u - m]
                pi[w] = cost - pi[u]
                queue.append(w)
                visited += 1
    if visited != n_nodes:
        raise OracleError("transportation basis is not a spanning tree")
    return parent, depth, pi


def _northwest_corner(a, b):
    """Initial basic feasible tree with exactly m + n - 1 arcs."""
    m, n = a.size, b.size
    rem_a = a.copy()
    rem_b = b.copy()
    arcs = []
    i = j = 0
    while True:
        x = min(rem_a[i], rem_b[j])
        arcs.append(((i, j), x))
        rem_a[i] -= x
        rem_b[j] -= x
        if i == m - 1 and j == n - 1:
            break
        if rem_a[i] <= rem_b[j] and i < m - 1:
            i += 1
        elif j < n - 1:
            j += 1
        else:
            i += 1
    return arcs


def _cycle_nodes(parent, depth, start, end):
    """Node path start -> ... -> end through their junction in the tree."""
    path_s = [start]
    path_e = [end]
    x, y = start, end
    while depth[x] > depth[y]:
        x = parent[x]
        path_s.append(x)
    while depth[y] > depth[x]:
        y = parent[y]
        path_e.append(y)
    while x != y:
        x = parent[x]
        path_s.append(x)
        y = parent[y]
        path_e.append(y)
    return path_s + path_e[:-1][::-1]


def _tree_flows(adj, a, b, m):
    """Solve for the unique arc flows of a spanning tree by leaf stripping."""
    n_nodes = m + b.size
    degree = {u: len(adj[u]) for u in range(n_nodes)}
    remaining = {u: set(adj[u]) for u in range(n_nodes)}
    residual = np.concatenate([a, b]).astype(np.float64)
    flows = {}
    leaves = deque(u for u in range(n_nodes) if degree[u] == 1)
    processed = 0
    while leaves and processed < n_nodes - 1:
        u = leaves.popleft()
        if degree[u] != 1:
            continue
        w = next(iter(remaining[u]))
        arc = (u, w - m) if u < m else (w, u - m)
        flows[arc] = residual[u]
        residual[w] -= residual[u]
        residual[u] = 0.0
        remaining[u].discard(w)
        remaining[w].discard(u)
        degree[u] -= 1
        degree[w] -= 1
        if degree[w] == 1:
            leaves.append(w)
        processed += 1
    return flows


def network_simplex(a, b, C, max_pivots=None):
    """Solve min <C, P> over nonnegative P with row sums a and column sums b.

    Masses must match (||a||_1 == ||b||_1); probability normalization is not
    required here. Returns ``(P, cost, u, v, pivots)`` where (u, v) are the
    optimal node potentials satisfying C_ij - u_i - v_j >= -1e-10 everywhere.
    """
    a = as_float_vector(a, "a")
    b = as_float_vector(b, "b")
    C = check_cost_matrix(C, "C")
    if np.any(a < 0) or np.any(b < 0):
        raise ValueError("marginals must be nonnegative")
    if C.shape != (a.size, b.size):
        raise ValueError(f"C has shape {C.shape}, expected ({a.size}, {b.size})")
    mass_a, mass_b = float(a.sum()), float(b.sum())
    if abs(mass_a - mass_b) > 1e-12 * max(1.0, mass_a, mass_b):
        raise ValueError(f"marginal masses disagree: {mass_a!r} vs {mass_b!r}")

    m, n = a.size, b.size
    n_nodes = m + n
    if max_pivots is None:
        max_pivots = 500 * n_nodes + 10_000
    pivot_tol = 1e-12 * max(1.0, float(C.max(initial=0.0)))
    degenerate_switch = 3 * n_nodes + 50

    adj = [set() for _ in range(n_nodes)]
    flow = {}
    for (i, j), x in _northwest_corner(a, b):
        adj[i].add(m + j)
        adj[m + j].add(i)
        flow[(i, j)] = x

    parent, depth, pi = _spanning_tree_state(adj, n_nodes, m, C)
    pivots = 0
    degenerate_streak = 0
    bland = False

    while True:
        reduced = C - pi[:m][:, None] - pi[m:][None, :]
        if bland:
            candidates = np.flatnonzero(reduced.ravel() < -pivot_tol)
            if candidates.size == 0:
                break
            flat = int(candidates[0])
        else:
            flat = int(np.argmin(reduced.ravel()))
            if reduced.ravel()[flat] >= -pivot_tol:
                break
        ei, ej = divmod(flat, n)

        if pivots >= max_pivots:
            raise OracleError(f"network simplex exceeded {max_pivots} pivots")
        pivots += 1

        nodes = _cycle_nodes(parent, depth, ei, m + ej)
        # Arcs at even positions of the node path lose theta, odd gain it;
        # the leaving arc is the tightest loser, ties to the lowest (i, j).
        theta = math.inf
        leaving = None
        for t in range(0, len(nodes) - 1, 2):
            u, w = nodes[t], nodes[t + 1]
            arc = (u, w - m) if u < m else (w, u - m)
            x = flow[arc]
            if leaving is None or x < theta:
                theta, leaving = x, arc
            elif x == theta and arc < leaving:
                leaving = arc
        for t in range(len(nodes) - 1):
            u, w = nodes[t], nodes[t + 1]
            arc = (u, w - m) if u < m else (w, u - m)
            flow[arc] += theta if t % 2 == 1 else -theta
        flow[(ei, ej)] = theta
        li, lj = leaving
        del flow[(li, lj)]
        adj[li].discard(m + lj)
        adj[m + lj].discard(li)
        adj[ei].add(m + ej)
        adj[m + ej].add(ei)
        parent, depth, pi = _spanning_tree_state(adj, n_nodes, m, C)

        if theta == 0.0:
            degenerate_streak += 1
            if degenerate_streak >= degenerate_switch:
                bland = True
        else:
            degenerate_streak = 0

    # Certify and rebuild: flows recomputed exactly from the optimal tree.
    reduced = C - pi[:m][:, None] - pi[m:][None, :]
    worst = float(reduced.min(initial=0.0))
    if worst < -DUAL_FEASIBILITY_TOL:
        raise OracleError(f"dual feasibility certificate failed: reduced cost {worst!r}")
    exact_flows = _tree_flows(adj, a, b, m)
    P = np.zeros((m, n))
    for (i, j), x in exact_flows.items():
        P[i, j] = max(x, 0.0)
    cost = math.fsum(C[i, j] * x for (i, j), x in exact_flows.items() if x > 0)
    return P, cost, pi[:m].copy(), pi[m:].copy(), pivots


def exact_ot(a, b, C):
    """Exact optimum of the transport LP for probability marginals.

    Desk-scale only (n <= 512). Returns an optimal vertex as a TransportPlan
    together with its cost; dual feasibility of the final tree potentials is
    verified before returning.
    """
    a = check_marginal(a, "a")
    b = check_marginal(b, "b")
    if max(a.size, b.size) > _MAX_ORACLE_SIZE:
        raise ValueError(f"exact oracle is limited to n <= {_MAX_ORACLE_SIZE}")
    P, cost, _, _, _ = network_simplex(a, b, C)
    return TransportPlan(P), cost


def reference_dual_optimum(problem, *, tol=1e-12, max_iterations=10_000_000):
    """High-precision dual optimum (f*, g*) and its value, normalized for audits.

    Runs the alternating dual ascent until the violation sum reaches ``tol``,
    then translates (f, g) by the constant that puts max(f - gamma*log a) at
    max|C|, which pins the potentials inside the window the greedy solver's
    distance diagnostics assume.
    """
    check_marginal(problem.a, "a", strictly_positive=True)
    check_marginal(problem.b, "b", strictly_positive=True)
    config = SinkhornConfig(delta=tol, max_iterations=max_iterations)
    result = sinkhorn_solve(problem, config)
    if not result.converged:
        row, col = core.marginal_violations(result.plan, problem)
        raise OracleError(
            f"reference optimum did not reach violation {tol:g} within "
            f"{max_iterations} iterations (achieved {row + col:.3e})"
        )
    f = result.potentials.f.copy()
    g = result.potentials.g.copy()
    eta = problem.cost_sup - float(np.max(f - problem.gamma * np.log(problem.a)))
    pot = DualPotentials(f + eta, g - eta)
    return pot, core.dual_objective(problem, pot)


def certify(result, problem, epsilon, algorithm, exact_cost=None):
    """Round the final plan, price it, and compare against the exact optimum.

    ``algorithm`` selects the a-priori excess-cost bound: alternating-update
    iterates carry unit mass, so the probability-matrix bound
    2*gamma*log(n) + 4*violation*max|C| applies; greedy iterates may not, and
    get the general-mass bound (2 + violation)*gamma*log(n) +
    4*violation*max|C|. Pass ``exact_cost`` to reuse a precomputed optimum.
    """
    if algorithm not in ("sinkhorn", "greenkhorn"):
        raise ValueError(f"unknown algorithm {algorithm!r}")
    rounded = round_to_polytope(result.plan, problem.a, problem.b)
    rounded_cost = certified_cost(rounded, problem)
    if exact_cost is None:
        _, exact_cost = exact_ot(problem.a, problem.b, problem.C)
    row, col = core.marginal_violations(result.plan, problem)
    violation = row + col
    gamma = result.gamma if result.gamma is not None else problem.gamma
    log_n = math.log(problem.n)
    if algorithm == "sinkhorn":
        bound = 2.0 * gamma * log_n + 4.0 * violation * problem.cost_sup
    else:
        bound = (2.0 + violation) * gamma * log_n + 4.0 * violation * problem.cost_sup
    gap = rounded_cost - exact_cost
    return Certificate(
        rounded_plan=rounded,
        rounded_cost=rounded_cost,
        exact_cost=exact_cost,
        epsilon=float(epsilon),
        gap=gap,
        bound=bound,
        satisfied=bool(gap <= epsilon),
    )
