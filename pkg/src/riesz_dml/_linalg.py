"""Ridge-type linear solves ``(K + a I) x = b`` for training Gram matrices.

``RidgeSystem`` owns one training table. When rows repeat heavily (fully
discrete data) it works with the Gram over unique rows, ``K = Z G Z'``, and
solves through the push-through identity; this is exact, not a low-rank
approximation. Solves go through a Cholesky factorization with a jitter
ladder; ``solve_path`` reuses one eigendecomposition across many ``a``.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla

from .errors import NumericalError

JITTER_START = 1e-10
JITTER_STOP = 1e-6


def cholesky_jitter(A):
    """Cholesky factor of a symmetric matrix, escalating diagonal jitter on failure.

    Jitter runs from ``1e-10 * trace / n`` up to ``1e-6 * trace / n`` in
    factors of ten. Raises :class:`NumericalError` when all attempts fail.
    """
    n = A.shape[0]
    try:
        return sla.cho_factor(A, lower=True, check_finite=True)
    except np.linalg.LinAlgError:
        pass
    except ValueError as exc:
        raise NumericalError(f"non-finite matrix: {exc}") from exc
    scale = max(np.trace(A) / n, np.finfo(float).tiny)
    jitter = JITTER_START
    while jitter <= JITTER_STOP * (1 + 1e-9):
        try:
            return sla.cho_factor(A + jitter * scale * np.eye(n), lower=True)
        except np.linalg.LinAlgError:
            jitter *= 10
    raise NumericalError(f"Cholesky failed after jitter up to {JITTER_STOP:g} * trace/n")


def min_norm_solve(A, b, cutoff=1e-10):
    """Minimum-norm least-squares solve of symmetric ``A x = b`` via ``eigh``."""
    s, Q = np.linalg.eigh(A)
    keep = s > cutoff * max(s.max(), 0.0)
    if not np.any(keep):
        return np.zeros_like(b, dtype=float)
    coef = Q[:, keep].T @ b
    coef = coef / (s[keep][:, None] if b.ndim == 2 else s[keep])
    return Q[:, keep] @ coef


class RidgeSystem:
    """Solver for ``(K + a I) x = b`` where ``K`` is the Gram of ``rows`` under ``spec``."""

    def __init__(self, rows, spec, grouped=None):
        rows = np.asarray(rows, dtype=float)
        self.rows = rows
        self.spec = spec
        self.n = rows.shape[0]
        uniq, inverse, counts = np.unique(rows, axis=0, return_inverse=True, return_counts=True)
        if grouped is None:
            grouped = len(uniq) <= self.n // 2
        self.grouped = bool(grouped)
        self._chol = {}
        self._eig = None
        if self.grouped:
            self.unique_rows = uniq
            self.inverse = np.asarray(inverse).reshape(-1)
            self.counts = counts.astype(float)
            self.G = spec.gram(uniq, uniq)
            sq = np.sqrt(self.counts)
            self._S = sq[:, None] * self.G * sq[None, :]
        else:
            self.K = spec.gram(rows, rows)

    def gram(self):
        """The full ``n x n`` training Gram matrix."""
        if self.grouped:
            return self.G[np.ix_(self.inverse, self.inverse)]
        return self.K

    def _factor(self, a):
        if a not in self._chol:
            M = self._S if self.grouped else self.K
            self._chol[a] = cholesky_jitter(M + a * np.eye(M.shape[0]))
        return self._chol[a]

    def _aggregate(self, b):
        # Z' b
        out = np.zeros((len(self.counts),) + b.shape[1:])
        np.add.at(out, self.inverse, b)
        return out

    def solve(self, b, a):
        """Solve ``(K + a I) x = b`` for ``a > 0``; ``b`` may have several columns."""
        b = np.asarray(b, dtype=float)
        if a <= 0:
            raise NumericalError(f"ridge shift must be positive, got {a}")
        fac = self._factor(float(a))
        if not self.grouped:
            return sla.cho_solve(fac, b)
        # (Z G Z' + aI)^-1 b = (b - Z G C^-1/2 (aI + C^1/2 G C^1/2)^-1 C^1/2 Z' b) / a
        sq = np.sqrt(self.counts)
        zb = self._aggregate(b)
        sq_b = sq[:, None] if zb.ndim == 2 else sq
        y = sla.cho_solve(fac, sq_b * zb)
        corr = self.G @ (y / sq_b)
        return (b - corr[self.inverse]) / a

    def _eigen(self):
        if self._eig is None:
            M = self._S if self.grouped else self.K
            s, Q = sla.eigh(M, driver="evd")
            self._eig = (np.clip(s, 0.0, None), Q)
        return self._eig

    def solve_path(self, b, a_values):
        """Solutions of ``(K + a I) x = b`` for every ``a`` in ``a_values``."""
        b = np.asarray(b, dtype=float)
        s, Q = self._eigen()
        out = []
        if not self.grouped:
            qb = Q.T @ b
            for a in a_values:
                scale = 1.0 / (s + a)
                out.append(Q @ (qb * (scale[:, None] if qb.ndim == 2 else scale)))
            return out
        sq = np.sqrt(self.counts)
        zb = self._aggregate(b)
        sq_b = sq[:, None] if zb.ndim == 2 else sq
        qb = Q.T @ (sq_b * zb)
        for a in a_values:
            scale = 1.0 / (s + a)
            y = Q @ (qb * (scale[:, None] if qb.ndim == 2 else scale))
            corr = self.G @ (y / sq_b)
            out.append((b - corr[self.inverse]) / a)
        return out


def compress(rows, coef):
    """Merge coefficients of identical rows: ``sum_i coef_i k(rows_i, .)``."""
    uniq, inverse = np.unique(rows, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).reshape(-1)
    out = np.zeros(len(uniq))
    np.add.at(out, inverse, coef)
    return uniq, out
