"""End-to-end approximation of the squared 2-Wasserstein distance.

Pipeline: normalize the cloud into the radius-1/2 ball, build Taylor features
of the Gaussian kernel with bandwidth ``1 / sqrt(2 eta)``, Sinkhorn-scale the
factored kernel to accuracy ``epsilon / 10``, round onto the transport
polytope, and evaluate the cost of the rounded coupling through its
factorization. Nothing of size ``n x n`` is formed.

``log n`` is the natural logarithm throughout.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .errors import CapacityError, InvalidInputError, PreconditionError
from .factored import FactoredMatrix
from .geometry import CostDecomposition, Normalization, PointCloud, cost_decomposition, normalize
from .kernel_features import feature_rank, kernel_anchor, taylor_gkm
from .rounding import RoundingReport, round_to_polytope
from .simplex import check_simplex
from .sinkhorn import SinkhornConfig, sinkhorn_scale

log = logging.getLogger(__name__)

THEORY, ENGINEERING = "theory", "engineering"
SOLVER_RADIUS = 0.5
# 1/2 e^{-eta} must stay a normal float64
MAX_ETA = math.log(0.5) - math.log(np.finfo(np.float64).tiny)
DEFAULT_MEMORY_BUDGET = 1 << 30  # bytes for the feature matrix and its workspace


@dataclass(frozen=True)
class SolverParams:
    epsilon: float
    eta: float
    M: int
    sigma: float
    delta: float
    mode: str
    rank: int

    @property
    def kernel_floor(self):
        """Lower bound ``exp(-eta) / 2`` on every entry of the approximate kernel."""
        return 0.5 * math.exp(-self.eta)


@dataclass
class TransportResult:
    w_hat: float  # original units
    w_hat_normalized: float
    coupling: FactoredMatrix
    params: SolverParams
    normalization: Normalization
    converged: bool
    diagnostics: dict = field(default_factory=dict)


def taylor_premise_holds(eta, M):
    """``(2 eta)^M / M! <= exp(-eta) / 2``, the accuracy the kernel floor relies on."""
    return M * math.log(2 * eta) - gammaln(M + 1) <= -eta + math.log(0.5)


def _max_rank_for(n, memory_budget):
    # V plus a same-sized log/sign workspace during construction
    return max(1, memory_budget // (n * 8 * 3))


def _smallest_feasible_epsilon(n, d, max_rank):
    M = 1
    while feature_rank(d, M + 1) <= max_rank:
        M += 1
    log_n = math.log(n)
    return max(300 * log_n / M, 20 * log_n / MAX_ETA)


def select_params(n, epsilon, mode=THEORY, d=1, eta=None, M=None,
                  memory_budget=DEFAULT_MEMORY_BUDGET) -> SolverParams:
    """Choose regularization and truncation order for an ``n``-point, ``d``-dimensional instance.

    In theory mode ``eta = 20 log n / epsilon`` and ``M = ceil(300 log n / epsilon)``.
    In engineering mode ``eta`` and ``M`` are taken from the caller and must
    satisfy :func:`taylor_premise_holds`.
    """
    if not (np.isfinite(epsilon) and epsilon > 0):
        raise InvalidInputError(f"epsilon must be positive, got {epsilon}")
    if mode == THEORY:
        if n < 2:
            raise PreconditionError("theory mode needs n >= 2 (log n must be positive)")
        if not epsilon < 1:
            raise InvalidInputError(f"theory mode needs epsilon in (0, 1), got {epsilon}")
        if eta is not None or M is not None:
            raise InvalidInputError("eta and M are fixed by epsilon in theory mode")
        eta = 20 * math.log(n) / epsilon
        M = math.ceil(300 * math.log(n) / epsilon)
    elif mode == ENGINEERING:
        if eta is None or M is None:
            raise InvalidInputError("engineering mode needs explicit eta and M")
        if not (np.isfinite(eta) and eta > 0) or int(M) != M or M < 1:
            raise InvalidInputError(f"need eta > 0 and integer M >= 1, got eta={eta}, M={M}")
        M = int(M)
        if not taylor_premise_holds(eta, M):
            raise PreconditionError(
                f"(2 eta)^M / M! > exp(-eta) / 2 for eta={eta}, M={M}; increase M")
        if epsilon > 20:
            raise InvalidInputError(f"epsilon / 10 must not exceed 2, got epsilon={epsilon}")
    else:
        raise InvalidInputError(f"unknown mode {mode!r}")

    if eta > MAX_ETA:
        raise PreconditionError(
            f"eta={eta:.4g} makes exp(-eta)/2 underflow float64 (limit {MAX_ETA:.1f}); "
            "use a larger epsilon or a smaller eta")
    rank = feature_rank(d, M)
    max_rank = _max_rank_for(n, memory_budget)
    log.info("eta=%.4g M=%d rank=%d", eta, M, rank)
    if rank > max_rank:
        hint = ""
        if mode == THEORY:
            hint = f"; smallest feasible epsilon is about {_smallest_feasible_epsilon(n, d, max_rank):.4g}"
        raise CapacityError(
            f"feature rank {rank} exceeds the memory budget (max rank {max_rank} at n={n}){hint}",
            required=rank)
    return SolverParams(epsilon=float(epsilon), eta=float(eta), M=M,
                        sigma=1.0 / math.sqrt(2 * eta), delta=epsilon / 10,
                        mode=mode, rank=rank)


def coupling_cost(P: FactoredMatrix, dec: CostDecomposition) -> float:
    """``sum_ij P_ij ||x_i - x_j||^2`` in ``O(n d (r + t))`` time.

    With ``C = y 1^T + 1 y^T - 2 X^T X`` and the Gram part
    ``diag(a) V^T V diag(b)`` every term is an inner product of two
    ``r``-vectors (or ``d x r`` matrices) obtained from one product of ``V``
    with ``2 + 2 d`` stacked vectors.
    """
    if P.n != dec.n:
        raise InvalidInputError(f"coupling has n={P.n} but the cloud has n={dec.n}")
    y, X = dec.y, dec.X
    a, b = P.left_scale, P.right_scale
    d = X.shape[0]
    Z = P.V @ np.vstack([a * y, b, a, b * y, X * a, X * b]).T  # r x (2 + 2d)
    linear = Z[:, 0] @ Z[:, 1] + Z[:, 2] @ Z[:, 3]
    cross = float((Z[:, 4:4 + d] * Z[:, 4 + d:]).sum())
    for u, w in P.rank_one_terms:
        linear += (y @ u) * w.sum() + u.sum() * (y @ w)
        cross += float((X @ u) @ (X @ w))
    return float(linear - 2.0 * cross)


def approx_w2(cloud, p, q, epsilon, mode=THEORY, eta=None, M=None,
              max_iterations=None, memory_budget=DEFAULT_MEMORY_BUDGET) -> TransportResult:
    """Additive approximation of ``W_2^2(p, q)`` with a feasible coupling in factored form.

    Non-convergence of the Sinkhorn stage is reported through
    ``result.converged``; the coupling is still feasible because rounding
    repairs any residual marginal error.
    """
    t0 = time.perf_counter()
    cloud = cloud if isinstance(cloud, PointCloud) else PointCloud(cloud)
    n = cloud.n
    p = check_simplex(p, n, "p")
    q = check_simplex(q, n, "q")
    timings = {}

    t = time.perf_counter()
    unit, norm = normalize(cloud, SOLVER_RADIUS)
    dec = cost_decomposition(unit)
    params = select_params(n, epsilon, mode, cloud.d, eta, M, memory_budget)
    timings["normalize"] = time.perf_counter() - t

    t = time.perf_counter()
    anchor = kernel_anchor(unit.points)
    feats = taylor_gkm(unit.points - anchor, params.sigma, params.M)
    K = FactoredMatrix.gram(feats.V)
    timings["features"] = time.perf_counter() - t

    t = time.perf_counter()
    if max_iterations is None:
        cfg = SinkhornConfig.for_kernel(params.delta, n, params.kernel_floor)
    else:
        cfg = SinkhornConfig(params.delta, max_iterations)
    sk = sinkhorn_scale(K, p, q, cfg)
    timings["sinkhorn"] = time.perf_counter() - t

    t = time.perf_counter()
    coupling, report = round_to_polytope(sk.scaled(K), p, q)
    timings["rounding"] = time.perf_counter() - t

    t = time.perf_counter()
    w_norm = max(coupling_cost(coupling, dec), 0.0)
    timings["cost"] = time.perf_counter() - t
    timings["total"] = time.perf_counter() - t0

    diagnostics = {
        "rank": feats.rank,
        "sinkhorn_iterations": sk.iterations,
        "sinkhorn_max_iterations": cfg.max_iterations,
        "marginal_error": sk.original_marginal_error,
        "smoothed_marginal_error": sk.final_marginal_error,
        "rounding": report,
        "anchor": anchor,
        "timings": timings,
    }
    return TransportResult(
        w_hat=norm.cost_to_original(w_norm),
        w_hat_normalized=w_norm,
        coupling=coupling,
        params=params,
        normalization=norm,
        converged=sk.converged,
        diagnostics=diagnostics,
    )
