"""Kernel ridge regression, the default outcome-regression learner."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._folds import FoldPlan, make_folds
from ._linalg import RidgeSystem, compress
from .errors import ConfigError, InputError
from .kernels import KernelSpec

DEFAULT_GRID = tuple(np.logspace(-6, 2, 10))
DEFAULT_FOLDS = 5


@dataclass
class KRREstimate:
    """Fitted kernel ridge regression ``gamma(w) = sum_i coef_i k(W_i, w)``.

    ``coef`` solves ``(K1 + n lam I) coef = Y``.
    """

    coef: np.ndarray
    rows: np.ndarray
    spec: KernelSpec
    lam: float

    def __post_init__(self):
        self._uniq, self._ucoef = compress(self.rows, self.coef)

    def predict(self, rows):
        rows = self.spec.check(rows)
        return self.spec.gram(rows, self._uniq, check=False) @ self._ucoef

    __call__ = predict


def _check_xy(features, outcomes, spec):
    W = spec.check(features)
    y = np.asarray(outcomes, dtype=float).reshape(-1)
    if y.shape[0] != W.shape[0]:
        raise InputError(f"{W.shape[0]} feature rows but {y.shape[0]} outcomes")
    if W.shape[0] < 1:
        raise InputError("need at least one observation")
    if not np.all(np.isfinite(y)):
        raise InputError("outcomes contain non-finite values")
    return W, y


def fit_krr(features, outcomes, spec: KernelSpec, lam: float, system=None) -> KRREstimate:
    """Closed-form kernel ridge regression with penalty ``lam``.

    Minimizes ``(1/n) sum_i (Y_i - gamma(W_i))^2 + lam ||gamma||^2``.
    ``system`` may pass a prebuilt :class:`RidgeSystem` for ``features``.
    """
    if not lam > 0:
        raise ConfigError(f"lambda must be positive, got {lam}")
    W, y = _check_xy(features, outcomes, spec)
    n = W.shape[0]
    system = system or RidgeSystem(W, spec)
    coef = system.solve(y, n * lam)
    return KRREstimate(coef=coef, rows=W, spec=spec, lam=float(lam))


def predict(est: KRREstimate, w):
    """Prediction at one row (scalar) or a table of rows (array)."""
    w = np.asarray(w, dtype=float)
    out = est.predict(np.atleast_2d(w))
    return float(out[0]) if w.ndim == 1 else out


def _grid(grid):
    grid = [float(g) for g in grid]
    if not grid:
        raise ConfigError("lambda grid is empty")
    if any(not g > 0 for g in grid):
        raise ConfigError("lambda grid values must be positive")
    return grid


def _plan(n, folds, seed, plan):
    if plan is not None:
        if plan.n != n:
            raise ConfigError(f"fold plan covers {plan.n} rows, data has {n}")
        return plan
    if n < folds:
        raise ConfigError(f"cannot cross-validate {n} observations with {folds} folds")
    return make_folds(n, folds, seed)


def pick_lambda(grid, losses):
    """Grid minimizer, ties broken toward the largest lambda."""
    losses = np.asarray(losses, dtype=float)
    best = np.min(losses)
    tol = 1e-12 * max(1.0, abs(best))
    candidates = [g for g, l in zip(grid, losses) if l <= best + tol]
    return max(candidates)


def cv_krr(features, outcomes, spec, grid=DEFAULT_GRID, folds=DEFAULT_FOLDS, seed=0,
           plan: FoldPlan | None = None, systems=None):
    """Out-of-fold mean squared prediction error for every lambda in ``grid``."""
    grid = _grid(grid)
    W, y = _check_xy(features, outcomes, spec)
    plan = _plan(W.shape[0], folds, seed, plan)
    sse = np.zeros(len(grid))
    for fold, train, test in plan:
        system = systems[fold] if systems is not None else RidgeSystem(W[train], spec)
        cross = spec.gram(W[test], W[train], check=False)
        n_train = len(train)
        for g, coef in enumerate(system.solve_path(y[train], [n_train * lam for lam in grid])):
            sse[g] += np.sum((y[test] - cross @ coef) ** 2)
    return sse / W.shape[0]


def tune_krr(features, outcomes, spec, grid=DEFAULT_GRID, folds=DEFAULT_FOLDS, seed=0,
             plan: FoldPlan | None = None, systems=None) -> float:
    """Cross-validated lambda for kernel ridge regression."""
    grid = _grid(grid)
    losses = cv_krr(features, outcomes, spec, grid, folds, seed, plan, systems)
    return pick_lambda(grid, losses)
