"""Transportation-specialized network simplex solver.

Solves the balanced discrete transportation problem

    minimize    sum_ij cost[i, j] * plan[i, j]
    subject to  plan @ 1 = p,  plan.T @ 1 = q,  plan >= 0

on the bipartite graph of m source nodes and n sink nodes.  The basis is a
spanning tree with m + n - 1 edges; pivots follow Dantzig's rule (most
negative reduced cost) with lexicographic tie-breaking, which is
deterministic.  A perturbation restart guards against degenerate cycling.
"""

from __future__ import annotations

import numpy as np

__all__ = ["solve_transport", "TransportSolverError"]


class TransportSolverError(RuntimeError):
    """Internal solver failure; valid balanced inputs should never trigger it."""


def _greedy_initial(cost, p, q, order):
    """Matrix-minimum greedy allocation.

    Returns (cells, alloc) where cells is a list of (i, j) basic cells and
    alloc maps cells to shipped amounts.  Every allocation exactly closes at
    least one of its row/column (a - a == 0 in floating point), so at most
    m + n - 1 cells receive positive flow.
    """
    m, n = cost.shape
    rem_p = p.astype(np.float64).copy()
    rem_q = q.astype(np.float64).copy()
    cells = []
    alloc = {}
    for flat in order:
        i, j = divmod(int(flat), n)
        a, b = rem_p[i], rem_q[j]
        if a <= 0.0 or b <= 0.0:
            continue
        x = a if a <= b else b
        alloc[(i, j)] = x
        cells.append((i, j))
        rem_p[i] = a - x
        rem_q[j] = b - x
    return cells, alloc


def _repair_tree(cells, alloc, order, m, n):
    """Extend the basic cells to a spanning tree by adding zero-flow cells.

    Rows are nodes 0..m-1, columns are nodes m..m+n-1.  Cheapest connecting
    cells are added first (the shared cost order keeps this deterministic).
    """
    parent = list(range(m + n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for (i, j) in cells:
        ra, rb = find(i), find(m + j)
        if ra != rb:
            parent[ra] = rb
    need = m + n - 1 - len(cells)
    if need <= 0:
        # duplicate closures can only reduce the count, never exceed it
        if len(cells) != m + n - 1:
            raise TransportSolverError("initial basis has too many cells")
        return
    for flat in order:
        i, j = divmod(int(flat), n)
        if (i, j) in alloc:
            continue
        ra, rb = find(i), find(m + j)
        if ra != rb:
            parent[ra] = rb
            alloc[(i, j)] = 0.0
            cells.append((i, j))
            need -= 1
            if need == 0:
                return
    raise TransportSolverError("could not complete the basis tree")


def _adjacency(cells, m, n):
    adj = [[] for _ in range(m + n)]
    for (i, j) in cells:
        adj[i].append((m + j, i, j))
        adj[m + j].append((i, i, j))
    return adj


def _duals(adj, cost, m, n):
    """Node potentials from the basis tree: u[i] + v[j] = cost[i, j] on basic cells."""
    u = np.zeros(m)
    v = np.zeros(n)
    seen = [False] * (m + n)
    seen[0] = True
    stack = [0]
    while stack:
        node = stack.pop()
        for (nb, i, j) in adj[node]:
            if not seen[nb]:
                seen[nb] = True
                if nb >= m:
                    v[nb - m] = cost[i, j] - u[i]
                else:
                    u[nb] = cost[i, j] - v[j]
                stack.append(nb)
    return u, v


def _tree_path(adj, src, dst, nnodes):
    """Cells along the unique tree path from node src to node dst."""
    prev_node = [-1] * nnodes
    prev_cell = [None] * nnodes
    prev_node[src] = src
    stack = [src]
    while stack:
        node = stack.pop()
        for (nb, i, j) in adj[node]:
            if prev_node[nb] == -1:
                prev_node[nb] = node
                prev_cell[nb] = (i, j)
                stack.append(nb)
    path = []
    node = dst
    while node != src:
        path.append(prev_cell[node])
        node = prev_node[node]
    path.reverse()
    return path


def _tree_flow(cells, p, q, m, n):
    """Recompute allocations on a basis tree from the marginals (leaf stripping)."""
    supply = np.concatenate([p, q]).astype(np.float64)
    degree = np.zeros(m + n, dtype=np.int64)
    incident = [[] for _ in range(m + n)]
    for idx, (i, j) in enumerate(cells):
        degree[i] += 1
        degree[m + j] += 1
        incident[i].append(idx)
        incident[m + j].append(idx)
    removed = [False] * len(cells)
    alloc = {}
    leaves = [node for node in range(m + n) if degree[node] == 1]
    while leaves:
        node = leaves.pop()
        if degree[node] != 1:
            continue
        for idx in incident[node]:
            if not removed[idx]:
                break
        else:
            continue
        i, j = cells[idx]
        amount = supply[node]
        alloc[(i, j)] = amount
        removed[idx] = True
        other = m + j if node == i else i
        supply[other] -= amount
        supply[node] = 0.0
        degree[node] -= 1
        degree[other] -= 1
        if degree[other] == 1:
            leaves.append(other)
    scale = max(1.0, float(np.max(np.concatenate([p, q]))))
    for cell, amount in alloc.items():
        if amount < 0.0:
            if amount < -1e-9 * scale:
                raise TransportSolverError("negative flow after tree recomputation")
            alloc[cell] = 0.0
    return alloc


def _simplex(cost, p, q, max_pivots):
    m, n = cost.shape
    order = np.argsort(cost, axis=None, kind="stable")
    cells, alloc = _greedy_initial(cost, p, q, order)
    _repair_tree(cells, alloc, order, m, n)
    eps = 1e-11 * max(1.0, float(np.max(np.abs(cost))))
    pivots = 0
    while True:
        adj = _adjacency(cells, m, n)
        u, v = _duals(adj, cost, m, n)
        reduced = cost - u[:, None] - v[None, :]
        flat = int(np.argmin(reduced))
        ei, ej = divmod(flat, n)
        if reduced[ei, ej] >= -eps:
            break
        pivots += 1
        if pivots > max_pivots:
            raise TransportSolverError("pivot limit exceeded")
        # the entering cell closes a unique cycle with the tree path ei -> ej
        path = _tree_path(adj, ei, m + ej, m + n)
        minus = path[0::2]
        theta = np.inf
        leave = None
        for cell in minus:
            a = alloc[cell]
            if a < theta or (a == theta and (leave is None or cell < leave)):
                theta = a
                leave = cell
        for t, cell in enumerate(path):
            if t % 2 == 0:
                alloc[cell] -= theta
            else:
                alloc[cell] += theta
        del alloc[leave]
        cells.remove(leave)
        cells.append((ei, ej))
        alloc[(ei, ej)] = theta
    return cells, alloc


def solve_transport(cost, p, q):
    """Solve the balanced transportation problem.

    Parameters
    ----------
    cost : ndarray of shape (m, n)
        Ground costs; must be finite.
    p : ndarray of shape (m,)
        Source marginal, strictly positive, summing to the same total as q.
    q : ndarray of shape (n,)
        Sink marginal, strictly positive.

    Returns
    -------
    plan : ndarray of shape (m, n)
        Optimal transport plan with the given marginals.
    objective : float
        Total cost of the optimal plan.
    """
    cost = np.ascontiguousarray(cost, dtype=np.float64)
    p = np.ascontiguousarray(p, dtype=np.float64)
    q = np.ascontiguousarray(q, dtype=np.float64)
    m, n = cost.shape
    if p.shape != (m,) or q.shape != (n,):
        raise ValueError("marginal shapes do not match the cost matrix")
    if not np.isfinite(cost).all():
        raise ValueError("cost matrix must be finite")
    if abs(p.sum() - q.sum()) > 1e-8 * max(1.0, p.sum()):
        raise ValueError("unbalanced marginals")
    max_pivots = 1000 + 50 * (m + n)
    try:
        cells, alloc = _simplex(cost, p, q, max_pivots)
    except TransportSolverError:
        # degenerate cycling guard: solve a deterministically perturbed copy,
        # then recompute the flow on its optimal tree with the true marginals
        delta = 1e-12 * float(min(p.min(), q.min()))
        qp = q + delta * (np.arange(n) + 1.0)
        pp = p.copy()
        pp[int(np.argmax(pp))] += delta * n * (n + 1) / 2.0
        pp *= qp.sum() / pp.sum()
        cells, _ = _simplex(cost, pp, qp, 20 * max_pivots)
        alloc = _tree_flow(cells, p, q, m, n)
    plan = np.zeros((m, n))
    for (i, j), amount in alloc.items():
        plan[i, j] = amount
    objective = float(np.sum(plan * cost))
    row_err = np.max(np.abs(plan.sum(axis=1) - p))
    col_err = np.max(np.abs(plan.sum(axis=0) - q))
    if max(row_err, col_err) > 1e-7 * max(1.0, float(p.sum())):
        raise TransportSolverError("marginal residual exceeds tolerance")
    return plan, objective
