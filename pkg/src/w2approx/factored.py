"""Implicit n x n matrices of the form ``diag(a) V^T V diag(b) + sum_k u_k w_k^T``.

Every product with such a matrix costs ``O(n (r + t))`` for ``r`` feature rows
and ``t`` rank-one terms, which is what keeps the whole pipeline sub-quadratic.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError, InvalidInputError

DENSE_CAP = 4096


def _vec(z, n, name):
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (n,):
        raise InvalidInputError(f"{name} must have shape ({n},), got {z.shape}")
    return z


def _positive(s, n, name, allow_zero=False):
    s = _vec(s, n, name)
    ok = np.isfinite(s) & ((s >= 0) if allow_zero else (s > 0))
    if not ok.all():
        i = int(np.argmax(~ok))
        kind = "nonnegative" if allow_zero else "strictly positive"
        raise InvalidInputError(f"{name} must be {kind} and finite (entry {i} = {s[i]})")
    return s


@dataclass(frozen=True)
class FactoredMatrix:
    V: np.ndarray
    left_scale: np.ndarray
    right_scale: np.ndarray
    rank_one_terms: tuple = field(default=())

    def __post_init__(self):
        V = np.asarray(self.V, dtype=np.float64)
        if V.ndim != 2:
            raise InvalidInputError(f"V must be 2-D (r, n), got shape {V.shape}")
        n = V.shape[1]
        object.__setattr__(self, "V", V)
        # zero entries only arise from rounding onto marginals with empty rows/columns
        object.__setattr__(self, "left_scale", _positive(self.left_scale, n, "left_scale", True))
        object.__setattr__(self, "right_scale", _positive(self.right_scale, n, "right_scale", True))
        terms = tuple((_vec(u, n, "u"), _vec(w, n, "w")) for u, w in self.rank_one_terms)
        object.__setattr__(self, "rank_one_terms", terms)

    @classmethod
    def gram(cls, V):
        """``V^T V`` with unit scalings."""
        V = np.asarray(V, dtype=np.float64)
        ones = np.ones(V.shape[1])
        return cls(V, ones, ones)

    @property
    def n(self) -> int:
        return self.V.shape[1]

    @property
    def r(self) -> int:
        return self.V.shape[0]

    @property
    def t(self) -> int:
        return len(self.rank_one_terms)

    def matvec(self, z):
        z = _vec(z, self.n, "z")
        out = self.left_scale * (self.V.T @ (self.V @ (self.right_scale * z)))
        for u, w in self.rank_one_terms:
            out += u * (w @ z)
        return out

    def matvec_transpose(self, z):
        """``A^T z``."""
        z = _vec(z, self.n, "z")
        out = self.right_scale * (self.V.T @ (self.V @ (self.left_scale * z)))
        for u, w in self.rank_one_terms:
            out += w * (u @ z)
        return out

    def row_sums(self):
        return self.matvec(np.ones(self.n))

    def col_sums(self):
        return self.matvec_transpose(np.ones(self.n))

    def scale_rows(self, s, allow_zero=False):
        """Factorization of ``diag(s) A``."""
        s = _positive(s, self.n, "s", allow_zero)
        terms = tuple((s * u, w) for u, w in self.rank_one_terms)
        return FactoredMatrix(self.V, s * self.left_scale, self.right_scale, terms)

    def scale_cols(self, s, allow_zero=False):
        """Factorization of ``A diag(s)``."""
        s = _positive(s, self.n, "s", allow_zero)
        terms = tuple((u, s * w) for u, w in self.rank_one_terms)
        return FactoredMatrix(self.V, self.left_scale, s * self.right_scale, terms)

    def with_scalings(self, left, right):
        """Same ``V`` with the scalings replaced (rank-one terms kept as is)."""
        return FactoredMatrix(self.V, left, right, self.rank_one_terms)

    def add_rank_one(self, u, w):
        u = _vec(u, self.n, "u")
        w = _vec(w, self.n, "w")
        return FactoredMatrix(self.V, self.left_scale, self.right_scale,
                              self.rank_one_terms + ((u, w),))

    def entry(self, i, j):
        n = self.n
        if not (0 <= i < n and 0 <= j < n):
            raise IndexError(f"index ({i}, {j}) out of range for n={n}")
        val = self.left_scale[i] * float(self.V[:, i] @ self.V[:, j]) * self.right_scale[j]
        for u, w in self.rank_one_terms:
            val += u[i] * w[j]
        return float(val)

    def to_dense(self, cap=DENSE_CAP):
        if self.n > cap:
            raise CapacityError(f"refusing to materialize an {self.n} x {self.n} matrix (cap {cap})",
                                required=self.n)
        A = (self.left_scale[:, None] * (self.V.T @ self.V)) * self.right_scale[None, :]
        for u, w in self.rank_one_terms:
            A += np.outer(u, w)
        return A

    def total_mass(self):
        return float(self.row_sums().sum())
