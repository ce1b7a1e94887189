"""Point clouds, normalization into a ball, and the squared-distance decomposition.

The squared Euclidean cost matrix of points ``x_1..x_n`` is never formed in the
fast path. It is carried as ``C = y 1^T + 1 y^T - 2 X^T X`` with ``X`` the
``d x n`` matrix of stacked points and ``y_i = ||x_i||^2``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError


@dataclass(frozen=True)
class PointCloud:
    """``n`` points in ``R^d`` stored as an ``(n, d)`` float64 array."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64, copy=True)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise InvalidInputError(
                f"points must be a non-empty (n, d) array, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            bad = int(np.argwhere(~np.isfinite(pts))[0, 0])
            raise InvalidInputError(f"point {bad} has a non-finite coordinate")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class Normalization:
    """Affine map ``x -> (x - center) / scale`` into the ball of ``target_radius``."""

    center: np.ndarray
    scale: float
    target_radius: float

    def apply(self, points):
        return (np.asarray(points, dtype=np.float64) - self.center) / self.scale

    def invert(self, points):
        return np.asarray(points, dtype=np.float64) * self.scale + self.center

    def cost_to_original(self, cost):
        """Squared costs scale quadratically with the coordinates."""
        return cost * self.scale ** 2


@dataclass(frozen=True)
class CostDecomposition:
    X: np.ndarray  # (d, n)
    y: np.ndarray  # (n,)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    def dense(self):
        """Materialize ``C``; only for small ``n`` (tests and the exact oracle)."""
        G = self.X.T @ self.X
        C = self.y[:, None] + self.y[None, :] - 2.0 * G
        np.maximum(C, 0.0, out=C)
        np.fill_diagonal(C, 0.0)
        return C


def _as_cloud(cloud) -> PointCloud:
    return cloud if isinstance(cloud, PointCloud) else PointCloud(cloud)


def normalize(cloud, target_radius=1.0):
    """Translate and rescale ``cloud`` into the origin ball of radius ``target_radius``.

    The center is the midpoint of the coordinate-wise bounding box and the
    scale is the largest distance from that center divided by
    ``target_radius``. A cloud whose points all sit on the center keeps
    ``scale = 1``.

    Returns
    -------
    (PointCloud, Normalization)
    """
    cloud = _as_cloud(cloud)
    if not (np.isfinite(target_radius) and target_radius > 0):
        raise InvalidInputError(f"target_radius must be positive, got {target_radius}")
    pts = cloud.points
    center = 0.5 * (pts.min(axis=0) + pts.max(axis=0))
    radius = float(np.sqrt(((pts - center) ** 2).sum(axis=1)).max())
    scale = radius / target_radius if radius > 0 else 1.0
    center.setflags(write=False)
    norm = Normalization(center=center, scale=scale, target_radius=float(target_radius))
    return PointCloud(norm.apply(pts)), norm


def cost_decomposition(cloud) -> CostDecomposition:
    cloud = _as_cloud(cloud)
    X = np.ascontiguousarray(cloud.points.T)
    y = np.einsum("ij,ij->j", X, X)
    return CostDecomposition(X=X, y=y)


def cost_entry(dec: CostDecomposition, i: int, j: int) -> float:
    n = dec.n
    if not (0 <= i < n and 0 <= j < n):
        raise IndexError(f"index ({i}, {j}) out of range for n={n}")
    if i == j:
        return 0.0
    val = dec.y[i] + dec.y[j] - 2.0 * float(dec.X[:, i] @ dec.X[:, j])
    return max(val, 0.0)


def pairwise_sq_dists(points) -> np.ndarray:
    """Direct ``||x_i - x_j||^2`` by differencing; independent of the decomposition."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    diff = pts[:, None, :] - pts[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)
