"""Kernel ridge Riesz representer: closed form, trimming and cross-validation.

The estimator minimizes

    -2 (1/N) sum_k m(M_k, alpha) + (1/n) sum_i alpha(W_i)^2 + lam ||alpha||^2

over the RKHS. It is represented as ``alpha = sum_i rho_i phi(W_i) +
sum_k rho_{n+k} g_k`` where ``g_k`` represents ``m(M_k, .)``, so that
``alpha(w) = rho' u(w)`` with ``u = [k(W_i, w); ktilde(M_k, w)]``.

``rho`` solves ``(Omega + n lam K) rho = v``. That system is singular
whenever the dictionary is linearly dependent (always, for discrete data),
but it has the exact solution

    rho = [-beta; (n/N) 1] / (n lam),   (K1 + n lam I) beta = (n/N) K2 1

which only needs an ``n x n`` positive definite solve. ``solver="dense"``
solves the full ``(n + N)``-dimensional system instead and is kept for
cross-checking on small problems.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg as sla

from ._folds import FoldPlan, make_folds
from ._linalg import RidgeSystem, cholesky_jitter, compress, min_norm_solve
from .errors import ConfigError, InputError, NumericalError
from .functionals import Functional, build_extended_kernel, geometry, m_values
from .kernels import KernelSpec
from .krr import DEFAULT_FOLDS, DEFAULT_GRID, _grid, _plan, pick_lambda

RESIDUAL_TOL = 1e-8


@dataclass
class RieszEstimate:
    """Fitted Riesz representer with coefficient vector ``rho`` of length ``n + N``."""

    rho: np.ndarray
    rows: np.ndarray
    moment: np.ndarray
    functional: Functional
    spec: KernelSpec
    lam: float
    trim: float | None = None

    def __post_init__(self):
        n = self.rows.shape[0]
        self._geo = geometry(self.functional, self.spec, self.rows.shape[1])
        self._w_rows, self._w_coef = compress(self.rows, self.rho[:n])
        self._m_rows, self._m_coef = compress(self.moment, self.rho[n:])

    def untrimmed(self, rows):
        rows = self.spec.check(rows)
        return (self.spec.gram(rows, self._w_rows, check=False) @ self._w_coef
                + self._geo.block2(rows, self._m_rows) @ self._m_coef)

    def alpha_at(self, rows):
        values = self.untrimmed(rows)
        if self.trim is not None:
            values = np.clip(values, -self.trim, self.trim)
        return values

    __call__ = alpha_at

    def m_alpha(self, moment_rows):
        """``m(M_k, alpha)`` for each moment row (the trimmed representer when trimming)."""
        moment_rows = self.spec.check(moment_rows)
        if self.trim is not None:
            return m_values(self.functional, moment_rows, self.alpha_at)
        return (self._geo.block2(self._w_rows, moment_rows).T @ self._w_coef
                + self._geo.block4(self._m_rows, moment_rows).T @ self._m_coef)

    def trimmed(self, bound):
        """Copy with evaluations clipped to ``[-bound, bound]``."""
        return replace(self, trim=_check_trim(bound))


def _check_trim(trim):
    if trim is None:
        return None
    trim = float(trim)
    if not trim > 0:
        raise ConfigError(f"trim bound must be positive, got {trim}")
    return trim


def _prepare(data, f, spec):
    W = spec.check(data)
    if W.shape[0] < 1:
        raise InputError("need at least one observation")
    M = spec.check(f.moment_rows(W))
    geo = geometry(f, spec, W.shape[1])
    return W, M, geo


def _block2_sum(geo, rows, moment, c):
    """``block2(rows, moment) @ c`` evaluated on unique rows only (cheap for discrete data)."""
    m_rows, m_coef = compress(moment, c)
    r_rows, inverse = np.unique(rows, axis=0, return_inverse=True)
    return (geo.block2(r_rows, m_rows) @ m_coef)[np.asarray(inverse).reshape(-1)]


def fit_riesz(data, f: Functional, spec: KernelSpec, lam: float, trim=None,
              solver="structured", system=None) -> RieszEstimate:
    """Kernel ridge Riesz representer for functional ``f`` with penalty ``lam``."""
    if not lam > 0:
        raise ConfigError(f"lambda must be positive, got {lam}")
    trim = _check_trim(trim)
    W, M, geo = _prepare(data, f, spec)
    n, N = W.shape[0], M.shape[0]
    a = n * lam
    if solver == "structured":
        c = np.full(N, n / N)
        system = system or RidgeSystem(W, spec)
        beta = system.solve(_block2_sum(geo, W, M, c), a)
        rho = np.concatenate([-beta, c]) / a
    elif solver == "dense":
        rho = solve_dense(build_extended_kernel(f, spec, W), a)
    else:
        raise ConfigError(f"unknown solver {solver!r}")
    return RieszEstimate(rho=rho, rows=W, moment=M, functional=f, spec=spec, lam=float(lam), trim=trim)


def solve_dense(ek, a):
    """Solve ``(Omega + a K) rho = v``: Cholesky with jitter, then minimum-norm fallback."""
    Omega = 0.5 * (ek.Omega + ek.Omega.T)
    K = ek.K
    K = 0.5 * (K + K.T)
    A = Omega + a * K
    v = ek.v
    scale = max(np.linalg.norm(v), np.finfo(float).tiny)
    try:
        rho = sla.cho_solve(cholesky_jitter(A), v)
        if np.linalg.norm(A @ rho - v) <= RESIDUAL_TOL * scale:
            return rho
    except NumericalError:
        pass
    rho = min_norm_solve(A, v)
    if not np.all(np.isfinite(rho)):
        raise NumericalError("minimum-norm solve produced non-finite coefficients")
    return rho


def alpha_at(est: RieszEstimate, w):
    """Representer value at one row (scalar) or a table of rows (array)."""
    w = np.asarray(w, dtype=float)
    out = est.alpha_at(np.atleast_2d(w))
    return float(out[0]) if w.ndim == 1 else out


def _alt_plan(f, L, seed):
    n_alt = f.alternative.shape[0]
    if n_alt < L:
        raise ConfigError(f"alternative population has {n_alt} rows, fewer than {L} folds")
    return make_folds(n_alt, L, (seed, 1))


def cv_riesz(data, f: Functional, spec: KernelSpec, grid=DEFAULT_GRID, folds=DEFAULT_FOLDS,
             seed=0, plan: FoldPlan | None = None, systems=None):
    """Cross-validation loss ``(1/n) sum_l sum_{i in I_l} -2 m(W_i, a_l) + a_l(W_i)^2`` per lambda.

    For ATE-DS the alternative population is split into folds as well and
    the m-term of fold ``l`` is ``|I_l|`` times the mean over its held-out
    alternative rows.
    """
    grid = _grid(grid)
    W, _, _ = _prepare(data, f, spec)
    n = W.shape[0]
    plan = _plan(n, folds, seed, plan)
    alt_plan = _alt_plan(f, plan.L, seed) if f.pooled else None
    total = np.zeros(len(grid))
    for fold, train, test in plan:
        f_tr = f.with_alternative(f.alternative[alt_plan.train(fold)]) if f.pooled else f
        W_tr, W_te = W[train], W[test]
        M_tr = f_tr.moment_rows(W_tr)
        M_te = f.alternative[alt_plan.test(fold)] if f.pooled else W_te
        geo = geometry(f_tr, spec, W.shape[1])
        n_tr, N_tr = W_tr.shape[0], M_tr.shape[0]
        c = np.full(N_tr, n_tr / N_tr)
        system = systems[fold] if systems is not None else RidgeSystem(W_tr, spec)
        G_te = spec.gram(W_te, W_tr, check=False)
        B2_te = _block2_sum(geo, W_te, M_tr, c)
        B2_x = geo.block2(W_tr, M_te)
        m_rows, m_coef = compress(M_tr, c)
        B4_x = geo.block4(m_rows, M_te).T @ m_coef
        a_values = [n_tr * lam for lam in grid]
        betas = system.solve_path(_block2_sum(geo, W_tr, M_tr, c), a_values)
        for g, (a, beta) in enumerate(zip(a_values, betas)):
            alpha_te = (B2_te - G_te @ beta) / a
            m_te = (B4_x - B2_x.T @ beta) / a
            m_term = len(test) * m_te.mean() if f.pooled else m_te.sum()
            total[g] += -2.0 * m_term + np.sum(alpha_te**2)
    return total / n


def tune_riesz(data, f: Functional, spec: KernelSpec, grid=DEFAULT_GRID, folds=DEFAULT_FOLDS,
               seed=0, plan: FoldPlan | None = None, systems=None) -> float:
    """Cross-validated lambda for the Riesz representer, ties toward the largest lambda."""
    grid = _grid(grid)
    return pick_lambda(grid, cv_riesz(data, f, spec, grid, folds, seed, plan, systems))
