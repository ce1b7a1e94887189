"""Explicit Taylor features for the Gaussian kernel.

For ``x, y`` in the unit ball,

    exp(-||x - y||^2 / (2 s^2))
        = exp(-||x||^2 / (2 s^2)) exp(-||y||^2 / (2 s^2)) sum_m <x, y>^m / (m! s^(2m)),

and expanding ``<x, y>^m`` multinomially gives one feature per exponent vector
``v`` with ``|v| < M``:

    psi_v(x) = exp(-||x||^2 / (2 s^2)) * prod_j x_j^(v_j) / (s^|v| * sqrt(prod_j v_j!)).

Stacking the features of every point column-wise gives ``V`` with
``|K - V^T V| <= 1 / (M! s^(2M))`` entrywise.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import comb

import numpy as np
from scipy.special import gammaln

from .errors import CapacityError, InvalidInputError, PreconditionError
from .geometry import PointCloud, pairwise_sq_dists

DEFAULT_MAX_RANK = 10_000_000
UNIT_BALL_SLACK = 1e-12


def feature_rank(d: int, M: int) -> int:
    """Number of exponent vectors in ``N^d`` with total degree at most ``M - 1``."""
    return comb(M - 1 + d, d)


def _compositions(k, d):
    # exponent vectors of total degree k, lexicographically descending
    if d == 1:
        yield (k,)
        return
    for first in range(k, -1, -1):
        for rest in _compositions(k - first, d - 1):
            yield (first,) + rest


def enumerate_multi_indices(d: int, M: int, max_rank: int = DEFAULT_MAX_RANK):
    """All exponent vectors of degree ``< M``, graded then lexicographically descending.

    >>> enumerate_multi_indices(2, 2)
    [(0, 0), (1, 0), (0, 1)]
    """
    return list(_graded_structure(d, M, max_rank)[0])


@lru_cache(maxsize=32)
def _graded_structure(d, M, max_rank=DEFAULT_MAX_RANK):
    if d < 1 or M < 1:
        raise InvalidInputError(f"need d >= 1 and M >= 1, got d={d}, M={M}")
    r = feature_rank(d, M)
    if r > max_rank:
        raise CapacityError(
            f"feature rank C({M - 1 + d}, {d}) = {r} exceeds the budget of {max_rank}",
            required=r)
    indices = []
    position = {}
    parent = np.zeros(r, dtype=np.int64)
    coord = np.zeros(r, dtype=np.int64)
    new_exp = np.zeros(r, dtype=np.int64)
    grade_start = [0]
    for k in range(M):
        for v in _compositions(k, d):
            idx = len(indices)
            if k > 0:
                j = next(t for t, e in enumerate(v) if e > 0)
                par = v[:j] + (v[j] - 1,) + v[j + 1:]
                parent[idx] = position[par]
                coord[idx] = j
                new_exp[idx] = v[j]
            position[v] = idx
            indices.append(v)
        grade_start.append(len(indices))
    for arr in (parent, coord, new_exp):
        arr.setflags(write=False)
    return tuple(indices), parent, coord, new_exp, tuple(grade_start)


def feature_vector(x, sigma: float, M: int, indices=None) -> np.ndarray:
    """Closed-form Taylor features of a single point, one entry per exponent vector."""
    x = np.asarray(x, dtype=np.float64).ravel()
    if not sigma > 0:
        raise InvalidInputError(f"sigma must be positive, got {sigma}")
    if indices is None:
        indices = enumerate_multi_indices(x.size, M)
    E = np.asarray(indices, dtype=np.int64).reshape(len(indices), x.size)
    deg = E.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        logabs = np.where(E > 0, E * np.log(np.abs(x))[None, :], 0.0).sum(axis=1)
    logabs += -float(x @ x) / (2 * sigma ** 2) - deg * np.log(sigma) \
        - 0.5 * gammaln(E + 1).sum(axis=1)
    neg = ((E % 2 == 1) & (x < 0)[None, :]).sum(axis=1) % 2
    return np.where(neg == 1, -1.0, 1.0) * np.exp(logabs)


@dataclass(frozen=True)
class FeatureMatrix:
    """``r x n`` Taylor feature matrix; column ``i`` holds the features of point ``i``."""

    V: np.ndarray
    sigma: float
    M: int

    @property
    def rank(self) -> int:
        return self.V.shape[0]

    @property
    def n(self) -> int:
        return self.V.shape[1]

    def gram(self):
        return self.V.T @ self.V


def taylor_gkm(cloud, sigma: float, M: int, max_rank: int = DEFAULT_MAX_RANK) -> FeatureMatrix:
    """Build Taylor features for every point of ``cloud`` (points must lie in the unit ball).

    Features of degree ``k`` are obtained from a degree ``k - 1`` parent by one
    multiplication with a coordinate. The products are carried as
    ``log|.|`` plus a sign so that large ``M`` neither overflows nor
    underflows before the final exponentiation.
    """
    cloud = cloud if isinstance(cloud, PointCloud) else PointCloud(cloud)
    if not (np.isfinite(sigma) and sigma > 0):
        raise InvalidInputError(f"sigma must be positive and finite, got {sigma}")
    if int(M) != M or M < 1:
        raise InvalidInputError(f"M must be a positive integer, got {M}")
    M = int(M)
    pts = cloud.points
    norms = np.sqrt((pts ** 2).sum(axis=1))
    if norms.max() > 1.0 + UNIT_BALL_SLACK:
        i = int(norms.argmax())
        raise PreconditionError(
            f"point {i} has norm {norms[i]:.6g} > 1; Taylor features require the unit ball")

    _, parent, coord, new_exp, grade_start = _graded_structure(cloud.d, M, max_rank)
    r, n = len(parent), cloud.n
    X = pts.T  # (d, n)
    with np.errstate(divide="ignore"):
        logx = np.log(np.abs(X)) - np.log(sigma)
    negx = X < 0

    # row-major (r, n): each feature row is contiguous, which keeps V z and V^T w streaming
    L = np.empty((r, n))
    S = np.zeros((r, n), dtype=bool) if negx.any() else None
    L[0] = -(norms ** 2) / (2 * sigma ** 2)
    half_log = 0.5 * np.log(np.arange(1, M + 1, dtype=np.float64))
    for k in range(1, M):
        sl = slice(grade_start[k], grade_start[k + 1])
        par, cj = parent[sl], coord[sl]
        L[sl] = L[par] + logx[cj] - half_log[new_exp[sl] - 1][:, None]
        if S is not None:
            S[sl] = S[par] ^ negx[cj]
    V = np.exp(L, out=L)
    if negx.any():
        V[S] *= -1.0
    V.setflags(write=False)
    return FeatureMatrix(V=V, sigma=float(sigma), M=M)


def kernel_anchor(points) -> np.ndarray:
    """Translation applied to a cloud in the radius-1/2 ball before building features.

    The Gaussian kernel is translation invariant, but the truncated series is
    not equally well conditioned everywhere: a pair with ``<x, y> < 0``
    produces an alternating sum whose terms dwarf the result. Measuring
    coordinates from the lower corner of the bounding box makes every
    coordinate nonnegative, so all terms are positive. When that corner is
    farther than 1 from some point (possible only for ``d >= 2``) the anchor
    falls back to a point at distance 1/2 from the origin in the direction of
    the corner, which keeps the shifted cloud inside the unit ball.
    """
    pts = np.asarray(points, dtype=np.float64)
    lo = pts.min(axis=0)
    if np.sqrt(((pts - lo) ** 2).sum(axis=1)).max() <= 1.0:
        return lo
    return 0.5 * lo / np.linalg.norm(lo)


def gaussian_kernel_dense(points, sigma: float) -> np.ndarray:
    """Exact ``exp(-||x_i - x_j||^2 / (2 sigma^2))`` by direct exponentiation."""
    return np.exp(-pairwise_sq_dists(points) / (2 * sigma ** 2))


def taylor_error_bound(sigma: float, M: int) -> float:
    """``1 / (M! sigma^(2M))``, evaluated in log space."""
    return float(np.exp(-gammaln(M + 1) - 2 * M * np.log(sigma)))
