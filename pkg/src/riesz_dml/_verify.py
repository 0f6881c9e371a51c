"""Fast self-checks behind ``riesz-dml verify``: closed forms against the reference oracles."""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from .functionals import ATE, ATEDS, ATT, CATE, Evaluation, build_extended_kernel
from .kernels import Gaussian, KernelSpec, c_max_of
from .krr import fit_krr
from .oracle import (INSTANCE_KINDS, DiscreteDGP, brute_force_riesz, direct_loss_minimizer,
                     direct_ridge_minimizer, population_moment, random_instance, true_quantities)
from .riesz import fit_riesz

SEED = 20240101
REL_TOL = 1e-6
ENUM_TOL = 1e-10


def _rel_gap(a, b):
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-12))


def check_c_max():
    worst = 0.0
    for m in range(1, 11):
        c = c_max_of(range(m))
        worst = max(worst, abs(c - 1 / np.sqrt(m)), abs(np.linalg.eigvalsh(np.eye(m) - c**2 * np.ones((m, m))).min()))
    return worst <= 1e-12, f"max deviation {worst:.1e}"


def check_krr(rng):
    worst = 0.0
    for _ in range(5):
        n = int(rng.integers(5, 20))
        X = rng.standard_normal((n, 2))
        y = rng.standard_normal(n)
        spec = KernelSpec([Gaussian((0, 1), float(rng.uniform(0.5, 2.0)))])
        lam = float(10 ** rng.uniform(-3, -1))
        est = fit_krr(X, y, spec, lam)
        beta = direct_ridge_minimizer(X, y, spec, lam)
        worst = max(worst, _rel_gap(est.predict(X), spec.gram(X, X) @ beta))
    return worst <= REL_TOL, f"max relative gap {worst:.1e}"


def check_riesz(rng, kind, perturb_rho=0.0):
    worst = 0.0
    for _ in range(2):
        W, f, spec, lam = random_instance(kind, int(rng.integers(8, 20)), rng)
        est = fit_riesz(W, f, spec, lam)
        if perturb_rho:
            est = replace(est, rho=est.rho + perturb_rho)
        ref = direct_loss_minimizer(W, f, spec, lam)
        worst = max(worst, _rel_gap(est(W), ref(W)))
    return worst <= REL_TOL, f"max relative gap {worst:.1e}"


def _discrete_dgp(rng):
    support = np.array([(d, v, x) for d in (0, 1) for v in (0, 1) for x in (0, 1, 2)], dtype=float)
    probs = rng.dirichlet(np.ones(len(support)))
    return DiscreteDGP(support, probs, rng.standard_normal(len(support)), float(rng.uniform(0.5, 2)))


def _enum_functionals(dgp):
    alt = dgp.support[[0, 4, 5, 7]]
    return [Evaluation(tuple(dgp.support[3])), ATE(1.0), ATT(1.0, 0.0), CATE(1.0, 1.0), ATEDS(1.0, alternative=alt)]


def check_identity(rng):
    dgp = _discrete_dgp(rng)
    worst = 0.0
    for f in _enum_functionals(dgp):
        alpha0 = dgp.table_function(brute_force_riesz(dgp, f))
        for _ in range(20):
            g = dgp.table_function(rng.standard_normal(dgp.size))
            theta = population_moment(dgp, f, 0.0, g, lambda r: np.zeros(len(r)))
            worst = max(worst, abs(theta - dgp.probs @ (alpha0(dgp.support) * g(dgp.support))))
    return worst <= ENUM_TOL, f"max gap {worst:.1e}"


def check_double_robustness(rng):
    dgp = _discrete_dgp(rng)
    worst = 0.0
    for f in _enum_functionals(dgp):
        tq = true_quantities(dgp, f)
        alpha0 = dgp.table_function(tq.alpha0)
        for _ in range(10):
            rand = dgp.table_function(rng.standard_normal(dgp.size))
            worst = max(worst, abs(population_moment(dgp, f, tq.theta0, dgp.gamma0_fn(), rand)),
                        abs(population_moment(dgp, f, tq.theta0, rand, alpha0)))
    return worst <= ENUM_TOL, f"max moment {worst:.1e}"


def check_structure(rng):
    worst = 0.0
    exact = True
    for kind in INSTANCE_KINDS:
        W, f, spec, _ = random_instance(kind, 15, rng)
        ek = build_extended_kernel(f, spec, W)
        exact &= bool(np.array_equal(ek.K2, ek.K3.T))
        for M in (ek.K, ek.Omega):
            worst = min(worst, np.linalg.eigvalsh(0.5 * (M + M.T)).min() / max(np.trace(M), 1e-300))
    return exact and worst >= -1e-8, f"K2 = K3' exact: {exact}; min eigenvalue / trace {worst:.1e}"


def run_checks(perturb_rho=0.0):
    """List of ``(name, passed, detail)`` rows."""
    rng = np.random.default_rng(SEED)
    rows = [("c_max table", *check_c_max()), ("kernel ridge closed form", *check_krr(rng))]
    for kind in INSTANCE_KINDS:
        rows.append((f"Riesz closed form: {kind}", *check_riesz(rng, kind, perturb_rho)))
    rows.append(("Riesz identity by enumeration", *check_identity(rng)))
    rows.append(("double robustness by enumeration", *check_double_robustness(rng)))
    rows.append(("extended kernel structure", *check_structure(rng)))
    return rows
