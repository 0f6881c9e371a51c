import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from riesz_dml.dml import (
    FoldPlan, critical_value, delta_ratio, estimate, fit_dml, make_folds, tune,
)
from riesz_dml.errors import ConfigError, DegenerateDataError, InputError, NumericalError
from riesz_dml.functionals import ATE, ATT, Evaluation
from riesz_dml.kernels import DiscreteIdentity, KernelSpec
from riesz_dml.oracle import DiscreteDGP, true_quantities

from conftest import dvx_data

D2 = KernelSpec([DiscreteIdentity(0, (0, 1))])


def test_fold_sizes_and_determinism():
    assert sorted(np.bincount(make_folds(10, 5, 0).assignment)) == [2] * 5
    assert sorted(np.bincount(make_folds(11, 5, 3).assignment)) == [2, 2, 2, 2, 3]
    assert np.array_equal(make_folds(50, 4, 9).assignment, make_folds(50, 4, 9).assignment)
    for n, L in ((3, 4), (10, 1)):
        with pytest.raises(ConfigError):
            make_folds(n, L)
    with pytest.raises(ConfigError):
        FoldPlan(n=3, L=2, assignment=np.array([0, 0, 0]))


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 200), st.integers(2, 12), st.integers(0, 10**6))
def test_folds_partition(n, L, seed):
    if L > n:
        return
    plan = make_folds(n, L, seed)
    sizes = np.bincount(plan.assignment, minlength=L)
    assert sizes.max() - sizes.min() <= 1 and sizes.min() >= 1
    covered = np.sort(np.concatenate([te for _, _, te in plan]))
    assert np.array_equal(covered, np.arange(n))


def test_critical_value():
    assert critical_value(0.95) == pytest.approx(1.959963984540054, abs=1e-12)
    for bad in (0.0, 1.0, 1.5):
        with pytest.raises(ConfigError):
            critical_value(bad)


def test_constant_nuisances_give_zero_width(rng):
    W = rng.integers(0, 2, (12, 1)).astype(float)
    y = rng.standard_normal(12)
    res = estimate(W, y, Evaluation((1,)), D2, make_folds(12, 3, 0),
                   gamma=lambda w: np.full(len(w), 2.5), alpha=lambda w: np.zeros(len(w)))
    assert res.theta_hat == 2.5 and res.sigma_hat == 0.0
    assert res.ci_lower == res.ci_upper == 2.5


def test_hand_computed_instance():
    # identity kernel on one binary column: gamma(w) = S_w / (c_w + n lam_g) and
    # alpha(1) = 1 / (p_hat + lam_a), both fitted on the other fold
    W = np.array([[1.0], [1.0], [0.0], [1.0]])
    y = np.array([2.0, 4.0, 1.0, 3.0])
    plan = FoldPlan(n=4, L=2, assignment=np.array([0, 1, 0, 1]))
    res = estimate(W, y, Evaluation((1,)), D2, plan, lam_gamma=0.5, lam_alpha=0.25)
    assert np.allclose(res.psi, [31 / 15, 5.0, 7 / 3, 11 / 3], rtol=1e-12)
    assert res.theta_hat == pytest.approx(49 / 15, rel=1e-12)
    assert [d.fold for d in res.per_fold] == [0, 1]
    assert res.per_fold[1].psi_mean == pytest.approx(13 / 3)


def test_interval_and_variance_identities(rng, dvx_spec):
    W = dvx_data(rng, 60)
    y = W[:, 0] + np.sin(W[:, 2]) + rng.standard_normal(60)
    plan = make_folds(60, 3, 1)
    res = {lv: estimate(W, y, ATE(1.0), dvx_spec, plan, 0.01, 0.01, level=lv) for lv in (0.9, 0.95, 0.99)}
    r = res[0.95]
    assert r.sigma_hat**2 == pytest.approx(np.mean(r.psi**2) - r.theta_hat**2, abs=1e-12)
    assert r.ci_upper - r.theta_hat == pytest.approx(critical_value(0.95) * r.sigma_hat / np.sqrt(60))
    assert r.ci_lower <= r.theta_hat <= r.ci_upper
    assert res[0.99].ci_lower <= r.ci_lower <= res[0.9].ci_lower
    assert res[0.9].ci_upper <= r.ci_upper <= res[0.99].ci_upper


def test_permutation_with_folds_is_invariant(rng, dvx_spec):
    W = dvx_data(rng, 40)
    y = rng.standard_normal(40)
    plan = make_folds(40, 4, 2)
    base = estimate(W, y, ATT(1.0, 0.0), dvx_spec, plan, 0.05, 0.05)
    perm = rng.permutation(40)
    moved = estimate(W[perm], y[perm], ATT(1.0, 0.0), dvx_spec,
                     FoldPlan(40, 4, plan.assignment[perm]), 0.05, 0.05)
    assert moved.theta_hat == pytest.approx(base.theta_hat, rel=1e-10)
    assert np.allclose(moved.psi, base.psi[perm], rtol=1e-9, atol=1e-12)


def test_external_nuisances_match_builtin(rng, dvx_spec):
    from riesz_dml.krr import fit_krr
    from riesz_dml.riesz import fit_riesz
    W = dvx_data(rng, 30)
    y = rng.standard_normal(30)
    plan = make_folds(30, 3, 0)
    built = estimate(W, y, ATE(0.0), dvx_spec, plan, 0.1, 0.1)
    g = [fit_krr(W[tr], y[tr], dvx_spec, 0.1) for _, tr, _ in plan]
    a = [fit_riesz(W[tr], ATE(0.0), dvx_spec, 0.1) for _, tr, _ in plan]
    ext = estimate(W, y, ATE(0.0), dvx_spec, plan, gamma=g, alpha=a)
    assert ext.theta_hat == pytest.approx(built.theta_hat, rel=1e-12)


def test_estimate_errors(rng, dvx_spec):
    W = dvx_data(rng, 20)
    y = rng.standard_normal(20)
    with pytest.raises(ConfigError):
        estimate(W, y, ATE(1.0), dvx_spec, make_folds(21, 3))
    with pytest.raises(ConfigError):
        estimate(W, y, ATE(1.0), dvx_spec, make_folds(20, 2), lam_gamma=0.1)
    with pytest.raises(ConfigError):
        estimate(W, y, ATE(1.0), dvx_spec, make_folds(20, 2), lam_gamma=[0.1], lam_alpha=0.1)
    with pytest.raises(NumericalError) as info:
        estimate(W, y, ATE(1.0), dvx_spec, make_folds(20, 2),
                 gamma=lambda w: np.full(len(w), np.nan), alpha=lambda w: np.zeros(len(w)))
    assert info.value.fold == 0


def test_delta_ratio_examples(rng, dvx_spec):
    W = dvx_data(rng, 30)
    y = rng.standard_normal(30)
    r = estimate(W, y, ATE(1.0), dvx_spec, make_folds(30, 3), 0.1, 0.1)
    same = delta_ratio(r, np.ones(30)).ratio
    assert same.beta_hat == r.theta_hat and same.se == pytest.approx(r.se, rel=1e-12)
    ind = (np.arange(30) % 3 == 0).astype(float)
    zero = estimate(W, y, Evaluation((0.0, 0.0), columns=(0, 1)), dvx_spec, make_folds(30, 3),
                    gamma=lambda w: np.zeros(len(w)), alpha=lambda w: np.zeros(len(w)))
    rz = delta_ratio(zero, ind).ratio
    assert rz.beta_hat == 0.0 and rz.se == 0.0
    psi = np.linspace(-1, 1, 30)
    from dataclasses import replace
    centered = replace(zero, psi=psi - psi.mean(), theta_hat=0.0)
    got = delta_ratio(centered, ind).ratio
    expect = np.std((psi - psi.mean()) / ind.mean()) / np.sqrt(30)
    assert got.se == pytest.approx(expect, rel=1e-12)
    with pytest.raises(DegenerateDataError):
        delta_ratio(r, np.zeros(30))
    with pytest.raises(InputError):
        delta_ratio(r, np.ones(29))


def test_att_ratio_converges_to_enumerated_target():
    support = [[d, x] for d in (0.0, 1.0) for x in (0.0, 1.0, 2.0)]
    probs = np.array([0.2, 0.15, 0.1, 0.1, 0.2, 0.25])
    gamma0 = np.array([1.0 + s[1] + 2.0 * s[0] * (1 + s[1]) for s in support])
    dgp = DiscreteDGP(support=support, probs=probs, gamma0=gamma0)
    f = ATT(1.0, 1.0)
    beta0 = true_quantities(dgp, f).theta0 / probs[3:].sum()
    spec = KernelSpec([DiscreteIdentity(0, (0, 1)), DiscreteIdentity(1, (0, 1, 2))])
    errors = []
    for n in (500, 8000):
        W, y = dgp.sample(n, np.random.default_rng(n))
        res = fit_dml(W, y, f, spec, lam_gamma=1e-4, lam_alpha=1e-4)
        assert abs(res.ratio.beta_hat - beta0) <= 4 * res.ratio.se
        assert res.ratio.p_hat == pytest.approx(np.mean(W[:, 0] == 1))
        errors.append(res.ratio.se)
    assert errors[1] < 0.5 * errors[0]


def test_fit_dml_tuning_modes(rng, dvx_spec):
    W = dvx_data(rng, 60)
    y = W[:, 0] + rng.standard_normal(60)
    loose = fit_dml(W, y, ATE(1.0), dvx_spec, folds=3, grid_gamma=[0.01, 1], grid_alpha=[0.01, 1])
    t = tune(W, y, ATE(1.0), dvx_spec, [0.01, 1], [0.01, 1], plan=make_folds(60, 3, 0))
    assert (loose.lambda_gamma, loose.lambda_alpha) == (t.lambda_gamma, t.lambda_alpha)
    strict = fit_dml(W, y, ATE(1.0), dvx_spec, folds=3, strict=True, tune_folds=2,
                     grid_gamma=[0.01, 1], grid_alpha=[0.01, 1])
    assert len(strict.per_fold) == 3 and np.isfinite(strict.theta_hat)
    att = fit_dml(W, y, ATT(1.0, 0.0), dvx_spec, folds=3, lam_gamma=0.1, lam_alpha=0.1)
    assert att.ratio is not None
    assert fit_dml(W, y, ATT(1.0, 0.0), dvx_spec, folds=3, lam_gamma=0.1, lam_alpha=0.1,
                   ratio=False).ratio is None
    with pytest.raises(ConfigError):
        fit_dml(W, y, ATE(1.0), dvx_spec, lam_gamma="auto")


def test_trim_applies_to_external_alpha(rng, dvx_spec):
    W = dvx_data(rng, 20)
    y = np.zeros(20)
    r = estimate(W, y, ATE(1.0), dvx_spec, make_folds(20, 2), trim=0.5,
                 gamma=lambda w: np.full(len(w), -1.0), alpha=lambda w: np.full(len(w), 9.0))
    assert r.theta_hat == pytest.approx(-1.0 + 0.5)
