import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from riesz_dml._linalg import RidgeSystem, cholesky_jitter, min_norm_solve
from riesz_dml.errors import ConfigError, NumericalError
from riesz_dml.kernels import DiscreteIdentity, Gaussian, KernelSpec
from riesz_dml.krr import cv_krr, fit_krr, pick_lambda, predict, tune_krr
from riesz_dml.oracle import direct_ridge_minimizer

G1 = KernelSpec([Gaussian((0,), 1.0)])


def test_single_point_by_hand():
    est = fit_krr([[0.0]], [2.0], G1, 1.0)
    assert predict(est, [0.0]) == pytest.approx(1.0, rel=1e-14)


def test_small_lambda_interpolates(rng):
    X = np.linspace(-2, 2, 8)[:, None]
    y = rng.standard_normal(8)
    est = fit_krr(X, y, G1, 1e-10)
    assert np.allclose(est.predict(X), y, atol=1e-4)


def test_zero_outcomes_and_far_point(rng):
    X = rng.standard_normal((10, 1))
    assert np.all(fit_krr(X, np.zeros(10), G1, 0.1).predict(rng.standard_normal((5, 1))) == 0.0)
    est = fit_krr(X, rng.standard_normal(10), G1, 0.1)
    assert abs(predict(est, [1e3])) < 1e-300


def test_constant_outcomes_recovered(rng):
    X = rng.uniform(-1, 1, (20, 1))
    est = fit_krr(X, np.full(20, 3.0), G1, 1e-6)
    assert np.allclose(est.predict(X), 3.0, atol=1e-2)


def test_coefficients_solve_the_ridge_system(rng):
    X = rng.standard_normal((25, 2))
    y = rng.standard_normal(25)
    spec = KernelSpec([Gaussian((0, 1), 0.8)])
    est = fit_krr(X, y, spec, 0.01)
    K = spec.gram(X, X)
    resid = (K + 25 * 0.01 * np.eye(25)) @ est.coef - y
    assert np.linalg.norm(resid) <= 1e-8 * np.linalg.norm(y)


def test_invalid_lambda():
    with pytest.raises(ConfigError):
        fit_krr([[0.0]], [1.0], G1, 0.0)


def test_grouped_solver_matches_dense(rng):
    X = rng.integers(0, 3, (60, 2)).astype(float)
    spec = KernelSpec([DiscreteIdentity(0, (0, 1, 2)), DiscreteIdentity(1, (0, 1, 2))])
    b = rng.standard_normal((60, 3))
    g, d = RidgeSystem(X, spec), RidgeSystem(X, spec, grouped=False)
    assert g.grouped and not d.grouped
    assert np.allclose(g.solve(b, 0.7), d.solve(b, 0.7), atol=1e-12)
    for x1, x2 in zip(g.solve_path(b[:, 0], [0.1, 3.0]), d.solve_path(b[:, 0], [0.1, 3.0])):
        assert np.allclose(x1, x2, atol=1e-10)
    assert np.array_equal(g.gram(), d.gram())


def test_path_matches_direct_solves(rng):
    X = rng.standard_normal((30, 1))
    b = rng.standard_normal(30)
    sys = RidgeSystem(X, G1)
    for a, x in zip([1e-3, 1.0, 50.0], sys.solve_path(b, [1e-3, 1.0, 50.0])):
        assert np.allclose(x, sys.solve(b, a), rtol=1e-8, atol=1e-10)


def test_jitter_ladder_and_failure():
    A = np.ones((3, 3))  # rank one: needs jitter
    c, lower = cholesky_jitter(A)
    assert np.all(np.isfinite(c))
    with pytest.raises(NumericalError):
        cholesky_jitter(-np.eye(3))
    with pytest.raises(NumericalError):
        cholesky_jitter(np.full((2, 2), np.nan))


def test_min_norm_solve():
    A = np.diag([2.0, 0.0])
    assert np.allclose(min_norm_solve(A, np.array([4.0, 1.0])), [2.0, 0.0])


def test_tuning_singleton_and_ties():
    X = np.linspace(0, 1, 10)[:, None]
    assert tune_krr(X, np.sin(X[:, 0]), G1, grid=[0.3], folds=2) == 0.3
    assert pick_lambda([1.0, 2.0, 3.0], [0.5, 0.5, 0.7]) == 2.0
    with pytest.raises(ConfigError):
        tune_krr(X[:3], np.zeros(3), G1, grid=[0.1], folds=5)
    with pytest.raises(ConfigError):
        tune_krr(X, np.zeros(10), G1, grid=[], folds=2)


def test_tuning_noise_prefers_large_lambda():
    wins = 0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        X = rng.uniform(-2, 2, (80, 1))
        wins += tune_krr(X, rng.standard_normal(80), G1, grid=[1e-8, 1e2], seed=seed) == 1e2
    assert wins >= 18


def test_tuning_noiseless_prefers_small_lambda():
    for seed in range(5):
        rng = np.random.default_rng(seed)
        X = rng.uniform(-2, 2, (80, 1))
        assert tune_krr(X, np.sin(X[:, 0]), G1, grid=[1e-8, 1e2], seed=seed) == 1e-8


def test_cv_losses_are_out_of_fold(rng):
    X = rng.standard_normal((20, 1))
    y = rng.standard_normal(20)
    from riesz_dml._folds import make_folds
    plan = make_folds(20, 4, 0)
    losses = cv_krr(X, y, G1, grid=[0.05], plan=plan)
    sse = 0.0
    for _, tr, te in plan:
        sse += np.sum((y[te] - fit_krr(X[tr], y[tr], G1, 0.05).predict(X[te])) ** 2)
    assert losses[0] == pytest.approx(sse / 20, rel=1e-10)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_matches_direct_minimization(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 30))
    X = rng.standard_normal((n, 2))
    y = rng.standard_normal(n)
    spec = KernelSpec([Gaussian((0, 1), float(rng.uniform(0.5, 2)))])
    lam = float(10 ** rng.uniform(-3, 0))
    beta = direct_ridge_minimizer(X, y, spec, lam)
    ref = spec.gram(X, X) @ beta
    assert np.max(np.abs(fit_krr(X, y, spec, lam).predict(X) - ref)) <= 1e-6 * np.max(np.abs(ref))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(-3, 3), st.floats(-3, 3))
def test_linear_in_outcomes(seed, a, b):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((15, 1))
    y1, y2 = rng.standard_normal(15), rng.standard_normal(15)
    p = lambda y: fit_krr(X, y, G1, 0.05).predict(X)
    assert np.allclose(p(a * y1 + b * y2), a * p(y1) + b * p(y2), atol=1e-10)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_training_residual_nondecreasing_in_lambda(seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((20, 1))
    y = rng.standard_normal(20)
    grid = np.logspace(-6, 2, 10)
    mse = [np.mean((y - fit_krr(X, y, G1, lam).predict(X)) ** 2) for lam in grid]
    assert np.all(np.diff(mse) >= -1e-12)
