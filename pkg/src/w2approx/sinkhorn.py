"""Sinkhorn scaling of a factored positive kernel.

Targets are first mixed with the uniform distribution (weight ``tau = delta / 8``)
so that every target mass is at least ``tau / n``. Rows and columns are then
renormalized alternately until the l1 marginal error against the smoothed
targets is at most ``delta / 2``. Together with the ``delta / 2`` moved by the
smoothing this leaves a total error of at most ``delta`` against the original
targets.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, NumericalUnderflowError
from .factored import FactoredMatrix
from .simplex import check_simplex

log = logging.getLogger(__name__)

DEFAULT_MAX_ITERATIONS = 100_000


def default_max_iterations(n, delta, kernel_floor):
    """``ceil(40 / delta * log(n / (delta * kernel_floor)))``, at least 2."""
    log_term = math.log(n) - math.log(delta) - math.log(kernel_floor)
    return max(2, math.ceil(40.0 / delta * max(log_term, 1.0)))


@dataclass(frozen=True)
class SinkhornConfig:
    delta: float
    max_iterations: int = DEFAULT_MAX_ITERATIONS

    def __post_init__(self):
        if not (0 < self.delta <= 2):
            raise InvalidInputError(f"delta must lie in (0, 2], got {self.delta}")
        if self.max_iterations < 1:
            raise InvalidInputError(f"max_iterations must be >= 1, got {self.max_iterations}")

    @property
    def tau(self):
        return self.delta / 8.0

    @classmethod
    def for_kernel(cls, delta, n, kernel_floor):
        return cls(delta, default_max_iterations(n, delta, kernel_floor))


@dataclass(frozen=True)
class SinkhornResult:
    left_scale: np.ndarray
    right_scale: np.ndarray
    iterations: int
    final_marginal_error: float  # against the smoothed targets
    original_marginal_error: float  # against the caller's p, q
    converged: bool
    history: tuple = ()  # error after each full round

    def scaled(self, K: FactoredMatrix) -> FactoredMatrix:
        return K.scale_rows(self.left_scale).scale_cols(self.right_scale)


def smooth_marginals(p, q, tau):
    if not (0 < tau < 1):
        raise InvalidInputError(f"tau must lie in (0, 1), got {tau}")
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    n = p.shape[0]
    return (1 - tau) * p + tau / n, (1 - tau) * q + tau / n


def marginal_error(K: FactoredMatrix, left_scale, right_scale, p, q):
    """``||r(P) - p||_1 + ||c(P) - q||_1`` for ``P = diag(left) K diag(right)``."""
    rows = left_scale * K.matvec(right_scale)
    cols = right_scale * K.matvec_transpose(left_scale)
    return float(np.abs(rows - p).sum() + np.abs(cols - q).sum())


def _safe_ratio(target, sums, what, offset=0):
    bad = ~(np.isfinite(sums) & (sums > 0))
    if bad.any():
        i = int(np.argmax(bad))
        raise NumericalUnderflowError(
            f"{what} sum {i + offset} is {sums[i]!r}; the kernel is not strictly positive "
            "in working precision", index=i + offset)
    out = target / sums
    if not np.all(np.isfinite(out)):
        i = int(np.argmax(~np.isfinite(out)))
        raise NumericalUnderflowError(f"{what} scaling {i + offset} overflowed", index=i + offset)
    return out


# column block of V processed while hot in cache; about 1 MB stays in L2 and keeps Python overhead small
BLOCK_BYTES = 1 << 20


def _block_cols(r):
    return max(256, BLOCK_BYTES // (8 * max(r, 1)))


def _scaling_pass(K: FactoredMatrix, scale, h, coefs, vecs, target, what):
    """One sweep over ``V`` in column blocks.

    Returns ``(sums, x, h_next, coefs_next)`` where ``sums = scale * (V^T h) +
    sum_k vecs[k] * coefs[k]`` are the current marginal sums, ``x = target / sums``
    is the updated scaling, and ``h_next = V (scale * x)``, ``coefs_next[k] =
    vecs[k] . x`` feed the opposite half-step. Each block of ``V`` is read for
    ``V^T h`` and reused for ``V (scale * x)`` before it leaves the cache.
    """
    V = K.V
    n = K.n
    step = _block_cols(K.r)
    sums = np.empty(n)
    x = np.empty(n)
    h_next = np.zeros(K.r)
    coefs_next = np.zeros(len(vecs))
    for s in range(0, n, step):
        e = min(s + step, n)
        blk = V[:, s:e]
        sb = scale[s:e] * (h @ blk)
        for c, v in zip(coefs, vecs):
            sb += c * v[s:e]
        sums[s:e] = sb
        xb = _safe_ratio(target[s:e], sb, what, offset=s)
        x[s:e] = xb
        h_next += blk @ (scale[s:e] * xb)
        for k, v in enumerate(vecs):
            coefs_next[k] += v[s:e] @ xb
    return sums, x, h_next, coefs_next


def sinkhorn_scale(K: FactoredMatrix, p, q, cfg: SinkhornConfig) -> SinkhornResult:
    """Find positive ``a, b`` with ``diag(a) K diag(b)`` within ``cfg.delta`` of ``(p, q)``.

    Odd iterations rescale rows, even iterations rescale columns, and the
    error is checked after every column update. Each half-step costs one
    blocked sweep over ``V``: the sweep that produces ``K b`` for the error
    check also yields the next row scaling. Running out of iterations is
    reported through ``converged=False``, not raised.
    """
    n = K.n
    p = check_simplex(p, n, "p")
    q = check_simplex(q, n, "q")
    ps, qs = smooth_marginals(p, q, cfg.tau)
    target = cfg.delta / 2
    left, right = K.left_scale, K.right_scale
    U = [u for u, _ in K.rank_one_terms]
    W = [w for _, w in K.rank_one_terms]

    def row_pass(hb, cb):  # K b for the current b, then a = p' / K b
        return _scaling_pass(K, left, hb, cb, U, ps, "row")

    def col_pass(ha, ca):  # K^T a for the current a, then b = q' / K^T a
        return _scaling_pass(K, right, ha, ca, W, qs, "column")

    def error(a, b, Kb, Kta, pp, qq):
        return float(np.abs(a * Kb - pp).sum() + np.abs(b * Kta - qq).sum())

    a = np.ones(n)
    b = np.ones(n)
    Kta, _, _, _ = col_pass(K.V @ (left * a), np.array([u.sum() for u in U]))
    Kb, a_next, ha_next, ca_next = row_pass(K.V @ (right * b), np.array([w.sum() for w in W]))
    err = error(a, b, Kb, Kta, ps, qs)
    history = []
    k = 0
    while err > target and k < cfg.max_iterations:
        a, ha, ca = a_next, ha_next, ca_next
        k += 1
        if k == cfg.max_iterations:
            # stopped right after a row update; K^T a is stale
            Kta, _, _, _ = col_pass(ha, ca)
            err = error(a, b, Kb, Kta, ps, qs)
            break
        Kta, b, hb, cb = col_pass(ha, ca)
        k += 1
        Kb, a_next, ha_next, ca_next = row_pass(hb, cb)
        err = error(a, b, Kb, Kta, ps, qs)
        history.append(err)

    converged = err <= target
    if not converged:
        log.warning("Sinkhorn stopped after %d iterations with marginal error %.3g > %.3g",
                    k, err, target)
    orig = error(a, b, Kb, Kta, p, q)
    return SinkhornResult(a, b, k, err, orig, converged, tuple(history))
