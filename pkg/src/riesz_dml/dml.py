"""Cross-fitted debiased estimation with Gaussian confidence intervals.

For each fold ``l`` the nuisances ``gamma_l`` (kernel ridge regression) and
``alpha_l`` (kernel ridge Riesz representer) are fitted on the other folds
and the doubly robust score

    psi_i = m(W_i, gamma_l) + alpha_l(W_i) (Y_i - gamma_l(W_i))

is evaluated on the held-out rows. ``theta_hat`` is the mean score and the
interval is ``theta_hat +- c_a sigma_hat / sqrt(n)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
import numpy as np
from scipy.stats import norm

from ._folds import FoldPlan, make_folds
from ._linalg import RidgeSystem
from .errors import ConfigError, DegenerateDataError, InputError, NumericalError
from .functionals import Functional, m_values
from .kernels import KernelSpec
from .krr import DEFAULT_FOLDS, DEFAULT_GRID, _check_xy, _grid, cv_krr, fit_krr, pick_lambda
from .riesz import cv_riesz, fit_riesz

__all__ = [
    "FoldPlan", "make_folds", "FoldDiagnostic", "RatioBlock", "DMLResult",
    "critical_value", "estimate", "delta_ratio", "fit_dml", "TuningResult", "tune",
]

DEFAULT_LEVEL = 0.95


def critical_value(level: float) -> float:
    """Two-sided standard Gaussian critical value ``c_a`` for coverage ``level``."""
    level = float(level)
    if not 0.0 < level < 1.0:
        raise ConfigError(f"confidence level must lie in (0, 1), got {level}")
    return float(norm.ppf(0.5 + level / 2.0))


@dataclass
class FoldDiagnostic:
    fold: int
    size: int
    lambda_gamma: float | None
    lambda_alpha: float | None
    psi_mean: float


@dataclass
class RatioBlock:
    """Delta-method inference for ``beta = theta / p``."""

    beta_hat: float
    sigma: float
    se: float
    ci_lower: float
    ci_upper: float
    p_hat: float


@dataclass
class DMLResult:
    theta_hat: float
    sigma_hat: float
    ci_lower: float
    ci_upper: float
    level: float
    n: int
    folds: int
    per_fold: list
    psi: np.ndarray = field(repr=False)
    lambda_gamma: float | list | None = None
    lambda_alpha: float | list | None = None
    ratio: RatioBlock | None = None

    @property
    def se(self) -> float:
        return self.sigma_hat / np.sqrt(self.n)

    @property
    def ci(self):
        return (self.ci_lower, self.ci_upper)


def _per_fold(value, L, name):
    """Expand a global value or a per-fold sequence into a list of length ``L``."""
    if value is None:
        return [None] * L
    if callable(value) or np.isscalar(value):
        return [value] * L
    values = list(value)
    if len(values) != L:
        raise ConfigError(f"{name}: expected one value per fold ({L}), got {len(values)}")
    return values


def _lam(value, name):
    value = float(value)
    if not value > 0:
        raise ConfigError(f"{name} must be positive, got {value}")
    return value


def _summarize(value):
    if all(v == value[0] for v in value):
        return value[0]
    return list(value)


def estimate(features, outcomes, f: Functional, spec: KernelSpec, plan: FoldPlan,
             lam_gamma=None, lam_alpha=None, level=DEFAULT_LEVEL, trim=None,
             gamma=None, alpha=None, systems=None) -> DMLResult:
    """Cross-fitted debiased estimate of ``theta = E[m(W, gamma_0)]``.

    Parameters
    ----------
    features, outcomes : array_like
        Feature table ``W`` (n rows) and outcomes ``Y``.
    f, spec : Functional, KernelSpec
        Target functional and product kernel.
    plan : FoldPlan
        Cross-fitting partition.
    lam_gamma, lam_alpha : float or sequence of float
        Ridge penalties, global or one per fold. Not needed for a nuisance
        that is supplied externally.
    level : float
        Confidence level in ``(0, 1)``.
    trim : float, optional
        Clip the fitted representer to ``[-trim, trim]``.
    gamma, alpha : callable or sequence of callables, optional
        Externally fitted nuisances mapping a feature table to values,
        global or one per fold. They replace the built-in learners.
    systems : sequence of RidgeSystem, optional
        Prebuilt solvers on each fold's training rows.
    """
    critical = critical_value(level)
    W, y = _check_xy(features, outcomes, spec)
    n = W.shape[0]
    if plan.n != n:
        raise ConfigError(f"fold plan covers {plan.n} rows, data has {n}")
    L = plan.L
    gammas = _per_fold(gamma, L, "gamma")
    alphas = _per_fold(alpha, L, "alpha")
    lam_g = _per_fold(lam_gamma, L, "lambda_gamma")
    lam_a = _per_fold(lam_alpha, L, "lambda_alpha")
    alt_moment = None
    if f.pooled:
        alt_moment = spec.check(f.moment_rows(W))
    psi = np.empty(n)
    per_fold = []
    for fold, train, test in plan:
        try:
            system = None
            if gammas[fold] is None or alphas[fold] is None:
                system = systems[fold] if systems is not None else RidgeSystem(W[train], spec)
            g = gammas[fold]
            lg = None
            if g is None:
                if lam_g[fold] is None:
                    raise ConfigError("lambda_gamma is required when gamma is not supplied")
                lg = _lam(lam_g[fold], "lambda_gamma")
                g = fit_krr(W[train], y[train], spec, lg, system=system)
            a = alphas[fold]
            la = None
            if a is None:
                if lam_a[fold] is None:
                    raise ConfigError("lambda_alpha is required when alpha is not supplied")
                la = _lam(lam_a[fold], "lambda_alpha")
                a = fit_riesz(W[train], f, spec, la, trim=trim, system=system)
            elif trim is not None:
                raw = a
                bound = float(trim)
                a = lambda rows, raw=raw: np.clip(np.asarray(raw(rows), dtype=float), -bound, bound)
            W_te = W[test]
            if f.pooled:
                m_term = float(np.mean(m_values(f, alt_moment, g)))
            else:
                m_term = m_values(f, W_te, g)
            resid = y[test] - np.asarray(g(W_te), dtype=float)
            psi_te = m_term + np.asarray(a(W_te), dtype=float) * resid
        except NumericalError as exc:
            raise NumericalError(str(exc), fold=fold) from exc
        if not np.all(np.isfinite(psi_te)):
            raise NumericalError("non-finite score values", fold=fold)
        psi[test] = psi_te
        per_fold.append(FoldDiagnostic(fold=fold, size=len(test), lambda_gamma=lg,
                                       lambda_alpha=la, psi_mean=float(np.mean(psi_te))))
    theta = float(np.mean(psi))
    sigma = float(np.sqrt(np.mean((psi - theta) ** 2)))
    half = critical * sigma / np.sqrt(n)
    return DMLResult(
        theta_hat=theta, sigma_hat=sigma, ci_lower=theta - half, ci_upper=theta + half,
        level=float(level), n=n, folds=L, per_fold=per_fold, psi=psi,
        lambda_gamma=_summarize([d.lambda_gamma for d in per_fold]),
        lambda_alpha=_summarize([d.lambda_alpha for d in per_fold]),
    )


def delta_ratio(result: DMLResult, indicator) -> DMLResult:
    """Add delta-method inference for ``beta = theta / P(indicator = 1)``."""
    ind = np.asarray(indicator, dtype=float).reshape(-1)
    if ind.shape[0] != result.n:
        raise InputError(f"indicator has {ind.shape[0]} entries, result has n = {result.n}")
    p = float(np.mean(ind))
    if p <= 0:
        raise DegenerateDataError("ratio denominator: no observation has indicator 1")
    beta = result.theta_hat / p
    psi_beta = (result.psi - beta * (ind - p)) / p
    sigma = float(np.sqrt(np.mean((psi_beta - np.mean(psi_beta)) ** 2)))
    se = sigma / np.sqrt(result.n)
    half = critical_value(result.level) * se
    ratio = RatioBlock(beta_hat=beta, sigma=sigma, se=se, ci_lower=beta - half,
                       ci_upper=beta + half, p_hat=p)
    return replace(result, ratio=ratio)


@dataclass
class TuningResult:
    """Cross-validated penalties with their loss tables."""

    lambda_gamma: float
    lambda_alpha: float
    grid_gamma: list
    grid_alpha: list
    loss_gamma: np.ndarray
    loss_alpha: np.ndarray


def tune(features, outcomes, f: Functional, spec: KernelSpec, grid_gamma=DEFAULT_GRID,
         grid_alpha=DEFAULT_GRID, folds=DEFAULT_FOLDS, seed=0, plan: FoldPlan | None = None,
         systems=None) -> TuningResult:
    """Cross-validate both penalties on one partition, sharing the fold solvers."""
    grid_gamma = _grid(grid_gamma)
    grid_alpha = _grid(grid_alpha)
    W, y = _check_xy(features, outcomes, spec)
    n = W.shape[0]
    if plan is None:
        if n < folds:
            raise ConfigError(f"cannot cross-validate {n} observations with {folds} folds")
        plan = make_folds(n, folds, seed)
    if systems is None:
        systems = [RidgeSystem(W[train], spec) for _, train, _ in plan]
    loss_g = cv_krr(W, y, spec, grid_gamma, plan=plan, systems=systems)
    loss_a = cv_riesz(W, f, spec, grid_alpha, seed=seed, plan=plan, systems=systems)
    return TuningResult(
        lambda_gamma=pick_lambda(grid_gamma, loss_g), lambda_alpha=pick_lambda(grid_alpha, loss_a),
        grid_gamma=grid_gamma, grid_alpha=grid_alpha, loss_gamma=loss_g, loss_alpha=loss_a,
    )


def fit_dml(features, outcomes, f: Functional, spec: KernelSpec, folds=DEFAULT_FOLDS, seed=0,
            lam_gamma="cv", lam_alpha="cv", level=DEFAULT_LEVEL, trim=None,
            grid_gamma=DEFAULT_GRID, grid_alpha=DEFAULT_GRID, tune_folds=DEFAULT_FOLDS,
            strict=False, ratio=True, plan: FoldPlan | None = None) -> DMLResult:
    """Tune (when asked) and estimate in one call.

    With ``lam_* = "cv"`` the penalty is chosen by cross-validation. By
    default this happens once on the full sample, over the cross-fitting
    partition itself so the fold solvers are shared. ``strict=True`` instead
    tunes inside every training split with an inner partition of
    ``tune_folds`` folds. ATT and CATE results carry the ratio block unless
    ``ratio=False``.
    """
    W, y = _check_xy(features, outcomes, spec)
    n = W.shape[0]
    plan = plan or make_folds(n, folds, seed)
    systems = [RidgeSystem(W[train], spec) for _, train, _ in plan]
    want_g = isinstance(lam_gamma, str)
    want_a = isinstance(lam_alpha, str)
    for name, value in (("lambda_gamma", lam_gamma), ("lambda_alpha", lam_alpha)):
        if isinstance(value, str) and value != "cv":
            raise ConfigError(f"{name} must be a positive number or 'cv', got {value!r}")
    if want_g or want_a:
        if not strict:
            t = tune(W, y, f, spec, grid_gamma, grid_alpha, plan=plan, seed=seed, systems=systems)
            lam_gamma = t.lambda_gamma if want_g else lam_gamma
            lam_alpha = t.lambda_alpha if want_a else lam_alpha
        else:
            lg, la = [], []
            for fold, train, _ in plan:
                t = tune(W[train], y[train], f, spec, grid_gamma, grid_alpha, folds=tune_folds,
                         seed=(seed, fold))
                lg.append(t.lambda_gamma)
                la.append(t.lambda_alpha)
            lam_gamma = lg if want_g else lam_gamma
            lam_alpha = la if want_a else lam_alpha
    result = estimate(W, y, f, spec, plan, lam_gamma, lam_alpha, level=level, trim=trim, systems=systems)
    indicator = f.ratio_indicator(W)
    if ratio and indicator is not None:
        result = delta_ratio(result, indicator)
    return result
