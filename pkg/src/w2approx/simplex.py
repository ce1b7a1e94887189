import numpy as np

from .errors import InvalidInputError

SIMPLEX_TOL = 1e-8


def check_simplex(p, n=None, name="p", tol=SIMPLEX_TOL):
    """Return ``p`` as a float64 probability vector.

    Vectors whose sum is within ``tol`` of one are rescaled to sum to one so
    that downstream mass bookkeeping is exact up to roundoff.
    """
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or (n is not None and p.shape[0] != n):
        raise InvalidInputError(f"{name} must be a vector of length {n}, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise InvalidInputError(f"{name} has non-finite entries")
    if np.any(p < 0):
        i = int(np.argmin(p))
        raise InvalidInputError(f"{name}[{i}] = {p[i]} is negative")
    total = p.sum()
    if abs(total - 1.0) > tol:
        raise InvalidInputError(f"{name} sums to {total!r}, not 1")
    return p / total
