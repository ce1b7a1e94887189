"""Projection of an approximately feasible factored matrix onto the transport polytope."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PreconditionError
from .factored import FactoredMatrix
from .simplex import check_simplex

MASS_TOL = 1e-8
RESIDUAL_TOL = 1e-10


@dataclass(frozen=True)
class RoundingReport:
    # twice the removed mass: an upper bound on ||G - F||_1, tight when the
    # correction lands on entries that were not shrunk
    l1_moved: float
    mass_removed: float
    rank_one_added: bool


def _shrink_factors(target, sums):
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(sums > 0, target / sums, 1.0)
    return np.minimum(ratio, 1.0)


def round_to_polytope(F: FactoredMatrix, p, q):
    """Return ``(G, report)`` with ``G`` in the polytope of couplings of ``p`` and ``q``.

    Rows with too much mass are shrunk, then columns, and the removed mass is
    put back as the single rank-one term ``err_r err_c^T / ||err_r||_1``.
    ``F`` must be entrywise nonnegative with total mass one.
    """
    n = F.n
    p = check_simplex(p, n, "p")
    q = check_simplex(q, n, "q")
    r = F.row_sums()
    mass = float(r.sum())
    if abs(mass - 1.0) > MASS_TOL:
        raise PreconditionError(f"F must have total mass 1, got {mass!r}")

    # with F2 = diag(x) F diag(y): c(F2) = y * F^T x and r(F2) = x * F y, three products in all
    x = _shrink_factors(p, r)
    Ftx = F.matvec_transpose(x)
    y = _shrink_factors(q, Ftx)
    F2 = F.scale_rows(x, allow_zero=True).scale_cols(y, allow_zero=True)

    r2 = x * F.matvec(y)
    err_r = p - r2
    err_c = q - y * Ftx
    worst = min(err_r.min(), err_c.min())
    if worst < -RESIDUAL_TOL:
        raise PreconditionError(
            f"negative marginal residual {worst:.3g}; F is not entrywise nonnegative")
    np.maximum(err_r, 0.0, out=err_r)
    np.maximum(err_c, 0.0, out=err_c)
    sr, sc = err_r.sum(), err_c.sum()
    if abs(sr - sc) > RESIDUAL_TOL:
        raise PreconditionError(f"row and column residual masses disagree: {sr!r} vs {sc!r}")

    removed = mass - float(r2.sum())
    if sr > 0:
        G = F2.add_rank_one(err_r / (0.5 * (sr + sc)), err_c)
    else:
        G = F2
    return G, RoundingReport(l1_moved=2.0 * removed, mass_removed=removed, rank_one_added=sr > 0)
