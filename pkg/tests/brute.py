"""Independent reference implementations the package is checked against.

Kept free of any entropot solver code on purpose: the transport optimum here
is found by enumerating every basic feasible solution (spanning trees of the
complete bipartite graph), and gradients are taken by central finite
differences.
"""

import itertools
from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def bipartite_spanning_trees(m, n):
    """All spanning trees of K_{m,n} as tuples of (row, col) edges."""
    edges = [(i, j) for i in range(m) for j in range(n)]
    need = m + n - 1
    trees = []
    for subset in itertools.combinations(range(len(edges)), need):
        parent = list(range(m + n))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        acyclic = True
        for idx in subset:
            i, j = edges[idx]
            ri, rj = find(i), find(m + j)
            if ri == rj:
                acyclic = False
                break
            parent[ri] = rj
        if acyclic:
            trees.append(tuple(edges[idx] for idx in subset))
    return tuple(trees)


def tree_flows(tree, a, b):
    """Unique flows putting mass a on rows and b on columns of a spanning tree."""
    m, n = len(a), len(b)
    adjacency = {u: set() for u in range(m + n)}
    for i, j in tree:
        adjacency[i].add(m + j)
        adjacency[m + j].add(i)
    residual = np.concatenate([a, b]).astype(float)
    flows = {}
    stack = [u for u in range(m + n) if len(adjacency[u]) == 1]
    while stack:
        u = stack.pop()
        if len(adjacency[u]) != 1:
            continue
        w = next(iter(adjacency[u]))
        arc = (u, w - m) if u < m else (w, u - m)
        flows[arc] = residual[u]
        residual[w] -= residual[u]
        residual[u] = 0.0
        adjacency[u].discard(w)
        adjacency[w].discard(u)
        if len(adjacency[w]) == 1:
            stack.append(w)
    return flows


def brute_force_ot(a, b, C, tol=1e-11):
    """Minimum transport cost over every basic feasible solution."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    C = np.asarray(C, dtype=float)
    m, n = a.size, b.size
    best_cost = np.inf
    best_plan = None
    for tree in bipartite_spanning_trees(m, n):
        flows = tree_flows(tree, a, b)
        if any(x < -tol for x in flows.values()):
            continue
        cost = sum(C[i, j] * x for (i, j), x in flows.items())
        if cost < best_cost:
            best_cost = cost
            plan = np.zeros((m, n))
            for (i, j), x in flows.items():
                plan[i, j] = max(x, 0.0)
            best_plan = plan
    return best_plan, best_cost


def central_difference_gradient(fun, x, step=1e-5):
    """Componentwise central finite differences of a scalar function."""
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    for i in range(x.size):
        hi = x.copy()
        lo = x.copy()
        hi[i] += step
        lo[i] -= step
        grad[i] = (fun(hi) - fun(lo)) / (2.0 * step)
    return grad
