"""Exact transport by the transportation simplex, plus dense reference routines.

Everything here materializes ``n x n`` matrices and is meant for small
instances: ground truth for the approximate solver and mirrors of the factored
Sinkhorn and rounding steps.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, InvalidInputError, NumericalUnderflowError, PreconditionError
from .simplex import check_simplex
from .sinkhorn import SinkhornConfig, SinkhornResult, smooth_marginals

EXACT_CAP = 256
ZERO_MASS = 1e-15
# consecutive degenerate pivots tolerated before switching to Bland's rule
DEGENERATE_RUN = 20


@dataclass(frozen=True)
class DenseTransportPlan:
    plan: np.ndarray
    cost: float
    f: np.ndarray
    g: np.ndarray
    pivots: int = 0


@dataclass(frozen=True)
class Certificate:
    primal_residual: float  # l1 marginal violation of the plan
    dual_violation: float  # max_ij (f_i + g_j - C_ij)_+
    slackness_violation: float  # max |f_i + g_j - C_ij| over the plan's support
    duality_gap: float  # |<plan, C> - (p.f + q.g)|

    def holds(self, cost, feas_tol=1e-10, dual_tol=1e-9):
        return (self.primal_residual <= feas_tol
                and self.dual_violation <= dual_tol
                and self.slackness_violation <= dual_tol
                and self.duality_gap <= dual_tol * (1 + abs(cost)))


def certify(plan, C, p, q, f, g, support_tol=1e-12) -> Certificate:
    """LP optimality certificate for a transport plan and candidate dual potentials."""
    red = f[:, None] + g[None, :] - C
    support = plan > support_tol
    primal = np.abs(plan.sum(axis=1) - p).sum() + np.abs(plan.sum(axis=0) - q).sum()
    return Certificate(
        primal_residual=float(primal),
        dual_violation=float(max(red.max(), 0.0)),
        slackness_violation=float(np.abs(red[support]).max()) if support.any() else 0.0,
        duality_gap=float(abs((plan * C).sum() - (p @ f + q @ g))),
    )


def _northwest_corner(a, b):
    m, k = len(a), len(b)
    s, dm = a.copy(), b.copy()
    flow = np.zeros((m, k))
    basis = []
    i = j = 0
    while True:
        x = min(s[i], dm[j])
        flow[i, j] = x
        basis.append((i, j))
        s[i] -= x
        dm[j] -= x
        if i == m - 1 and j == k - 1:
            break
        if i == m - 1:
            j += 1
        elif j == k - 1 or s[i] <= dm[j]:
            i += 1
        else:
            j += 1
    return flow, basis


class _Tree:
    """Spanning tree of basic cells on the bipartite row/column graph."""

    def __init__(self, m, k, cells):
        self.m, self.k = m, k
        self.row_adj = [set() for _ in range(m)]
        self.col_adj = [set() for _ in range(k)]
        for i, j in cells:
            self.add(i, j)

    def add(self, i, j):
        self.row_adj[i].add(j)
        self.col_adj[j].add(i)

    def remove(self, i, j):
        self.row_adj[i].discard(j)
        self.col_adj[j].discard(i)

    def potentials(self, C):
        u = np.full(self.m, np.nan)
        v = np.full(self.k, np.nan)
        u[0] = 0.0
        queue = deque([("r", 0)])
        while queue:
            side, x = queue.popleft()
            if side == "r":
                for j in self.row_adj[x]:
                    if np.isnan(v[j]):
                        v[j] = C[x, j] - u[x]
                        queue.append(("c", j))
            else:
                for i in self.col_adj[x]:
                    if np.isnan(u[i]):
                        u[i] = C[i, x] - v[x]
                        queue.append(("r", i))
        return u, v

    def path(self, i0, j0):
        """Cells on the tree path from row ``i0`` to column ``j0``, in order."""
        prev = {("r", i0): None}
        queue = deque([("r", i0)])
        while queue:
            node = queue.popleft()
            if node == ("c", j0):
                break
            side, x = node
            nbrs = (("c", j) for j in self.row_adj[x]) if side == "r" \
                else (("r", i) for i in self.col_adj[x])
            for nb in nbrs:
                if nb not in prev:
                    prev[nb] = node
                    queue.append(nb)
        cells = []
        node = ("c", j0)
        while prev[node] is not None:
            par = prev[node]
            cells.append((par[1], node[1]) if par[0] == "r" else (node[1], par[1]))
            node = par
        cells.reverse()
        return cells


def _transport_simplex(C, a, b, max_pivots=None):
    m, k = C.shape
    flow, basis = _northwest_corner(a, b)
    tree = _Tree(m, k, basis)
    tol = 1e-12 * max(1.0, float(np.abs(C).max()))
    max_pivots = max_pivots or 100 * m * k + 1000
    degenerate_run = 0
    for pivot in range(max_pivots):
        u, v = tree.potentials(C)
        red = C - u[:, None] - v[None, :]
        if degenerate_run >= DEGENERATE_RUN:
            candidates = np.flatnonzero(red.ravel() < -tol)
            if candidates.size == 0:
                return flow, u, v, pivot
            ie, je = divmod(int(candidates[0]), k)
        else:
            idx = int(np.argmin(red))
            ie, je = divmod(idx, k)
            if red[ie, je] >= -tol:
                return flow, u, v, pivot
        cells = tree.path(ie, je)
        minus = cells[0::2]
        plus = cells[1::2]
        theta = min(flow[c] for c in minus)
        leaving = min(c for c in minus if flow[c] == theta)
        for c in minus:
            flow[c] -= theta
        for c in plus:
            flow[c] += theta
        flow[ie, je] += theta
        flow[leaving] = 0.0
        tree.remove(*leaving)
        tree.add(ie, je)
        degenerate_run = degenerate_run + 1 if theta <= 0 else 0
    raise RuntimeError(f"transportation simplex did not terminate in {max_pivots} pivots")


def _check_cost(C, n=None):
    C = np.asarray(C, dtype=np.float64)
    if C.ndim != 2 or C.shape[0] != C.shape[1] or (n is not None and C.shape[0] != n):
        raise InvalidInputError(f"cost matrix must be square n x n, got shape {C.shape}")
    if not np.all(np.isfinite(C)):
        raise InvalidInputError("cost matrix has non-finite entries")
    if C.min() < 0:
        raise InvalidInputError("cost matrix has negative entries")
    return C


def exact_ot(C, p, q, cap=EXACT_CAP) -> DenseTransportPlan:
    """Optimal plan and dual potentials of ``min <P, C>`` over couplings of ``p`` and ``q``.

    Marginal entries below 1e-15 are removed before solving and their rows or
    columns reinstated as zeros afterwards, with potentials chosen to keep
    the dual feasible.
    """
    C = _check_cost(C)
    n = C.shape[0]
    if n > cap:
        raise CapacityError(f"exact solver is capped at n={cap}, got n={n}", required=n)
    p = check_simplex(p, n, "p")
    q = check_simplex(q, n, "q")
    rows = np.flatnonzero(p > ZERO_MASS)
    cols = np.flatnonzero(q > ZERO_MASS)
    a = p[rows] / p[rows].sum()
    b = q[cols] / q[cols].sum()
    flow, u, v, pivots = _transport_simplex(C[np.ix_(rows, cols)], a, b)

    plan = np.zeros((n, n))
    plan[np.ix_(rows, cols)] = np.maximum(flow, 0.0)
    f = np.zeros(n)
    g = np.zeros(n)
    f[rows] = u
    g[cols] = v
    dropped_cols = np.setdiff1d(np.arange(n), cols)
    if dropped_cols.size:
        g[dropped_cols] = (C[np.ix_(rows, dropped_cols)] - f[rows][:, None]).min(axis=0)
    dropped_rows = np.setdiff1d(np.arange(n), rows)
    if dropped_rows.size:
        f[dropped_rows] = (C[dropped_rows] - g[None, :]).min(axis=1)
    return DenseTransportPlan(plan=plan, cost=float((plan * C).sum()), f=f, g=g, pivots=pivots)


def dense_sinkhorn(K, p, q, delta, max_iterations=None) -> SinkhornResult:
    """Dense mirror of :func:`w2approx.sinkhorn.sinkhorn_scale` with the same update schedule."""
    K = np.asarray(K, dtype=np.float64)
    n = K.shape[0]
    cfg = SinkhornConfig(delta) if max_iterations is None else SinkhornConfig(delta, max_iterations)
    p = check_simplex(p, n, "p")
    q = check_simplex(q, n, "q")
    ps, qs = smooth_marginals(p, q, cfg.tau)
    a, b = np.ones(n), np.ones(n)

    def err_of(a, b, Kb, Kta):
        return float(np.abs(a * Kb - ps).sum() + np.abs(b * Kta - qs).sum())

    def ratio(t, s, what):
        bad = ~(np.isfinite(s) & (s > 0))
        if bad.any():
            i = int(np.argmax(bad))
            raise NumericalUnderflowError(f"{what} sum {i} is {s[i]!r}", index=i)
        return t / s

    Kb, Kta = K @ b, K.T @ a
    err = err_of(a, b, Kb, Kta)
    history = []
    it = 0
    while err > cfg.delta / 2 and it < cfg.max_iterations:
        it += 1
        if it % 2 == 1:
            a = ratio(ps, Kb, "row")
            continue
        Kta = K.T @ a
        b = ratio(qs, Kta, "column")
        Kb = K @ b
        err = err_of(a, b, Kb, Kta)
        history.append(err)
    if it % 2 == 1:
        err = err_of(a, b, K @ b, K.T @ a)
    P = a[:, None] * K * b[None, :]
    orig = float(np.abs(P.sum(axis=1) - p).sum() + np.abs(P.sum(axis=0) - q).sum())
    return SinkhornResult(a, b, it, err, orig, err <= cfg.delta / 2, tuple(history))


def dense_round(F, p, q):
    """Dense mirror of :func:`w2approx.rounding.round_to_polytope`; returns ``G``."""
    F = np.asarray(F, dtype=np.float64)
    n = F.shape[0]
    p = check_simplex(p, n, "p")
    q = check_simplex(q, n, "q")
    r = F.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        x = np.minimum(np.where(r > 0, p / r, 1.0), 1.0)
    F1 = x[:, None] * F
    c = F1.sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        y = np.minimum(np.where(c > 0, q / c, 1.0), 1.0)
    F2 = F1 * y[None, :]
    err_r = np.maximum(p - F2.sum(axis=1), 0.0)
    err_c = np.maximum(q - F2.sum(axis=0), 0.0)
    s = err_r.sum()
    if s > 0:
        return F2 + np.outer(err_r, err_c) / s
    return F2


def entropy(P):
    """Shannon entropy ``sum P_ij log(1 / P_ij)`` with ``0 log 0 = 0``."""
    P = np.asarray(P, dtype=np.float64)
    if P.min() < 0:
        raise InvalidInputError("entropy of a matrix with negative entries")
    nz = P[P > 0]
    return float(-(nz * np.log(nz)).sum())


def regularized_objective(P, C, eta):
    """``<C, P> - H(P) / eta`` for a nonnegative ``P`` of unit mass."""
    P = np.asarray(P, dtype=np.float64)
    if P.min() < 0:
        raise InvalidInputError("P has negative entries")
    if abs(P.sum() - 1.0) > 1e-8:
        raise PreconditionError(f"P must have unit mass, got {P.sum()!r}")
    return float((np.asarray(C) * P).sum() - entropy(P) / eta)
