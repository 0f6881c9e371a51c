"""Reference implementations used to check the fast estimators.

Everything here is deliberately slow and generic: population quantities
come from full enumeration of a finite support, and the direct loss
minimizer builds its dictionary only from kernel evaluations and the
functional's stencil (never from the closed-form block formulas).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lstsq

from .errors import ConfigError, DegenerateDataError, OracleError
from .functionals import Functional, m_values
from .kernels import KernelSpec

PROB_TOL = 1e-12


@dataclass(frozen=True)
class DiscreteDGP:
    """Finite-support data generating process.

    ``Y = gamma0(W) + noise * eps`` with standard Gaussian ``eps``.
    """

    support: np.ndarray
    probs: np.ndarray
    gamma0: np.ndarray
    noise: float = 1.0

    def __post_init__(self):
        support = np.atleast_2d(np.asarray(self.support, dtype=float))
        probs = np.asarray(self.probs, dtype=float).reshape(-1)
        gamma0 = np.asarray(self.gamma0, dtype=float).reshape(-1)
        if not (support.shape[0] == probs.shape[0] == gamma0.shape[0]):
            raise ConfigError("support, probs and gamma0 must have the same number of rows")
        if len(np.unique(support, axis=0)) != support.shape[0]:
            raise ConfigError("support rows must be distinct")
        if np.any(probs <= 0):
            raise ConfigError("support probabilities must be positive")
        if abs(probs.sum() - 1.0) > PROB_TOL:
            raise ConfigError(f"support probabilities sum to {probs.sum()!r}, not 1")
        if not self.noise >= 0:
            raise ConfigError(f"noise scale must be nonnegative, got {self.noise}")
        for name, arr in (("support", support), ("probs", probs), ("gamma0", gamma0)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "_index", {tuple(r): i for i, r in enumerate(support)})

    @property
    def size(self):
        return self.support.shape[0]

    def locate(self, rows, strict=True):
        """Support index of every row; ``-1`` (or an error when ``strict``) off the support."""
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        idx = np.array([self._index.get(tuple(r), -1) for r in rows], dtype=int)
        if strict and np.any(idx < 0):
            bad = rows[np.flatnonzero(idx < 0)[0]]
            raise DegenerateDataError(f"row {bad.tolist()} has zero probability")
        return idx

    def table_function(self, values):
        """Function on the support given by its table of ``values``."""
        values = np.asarray(values, dtype=float).reshape(-1)
        if values.shape[0] != self.size:
            raise ConfigError("table has the wrong length for this support")
        return lambda rows: values[self.locate(rows)]

    def gamma0_fn(self):
        return self.table_function(self.gamma0)

    def sample(self, n, rng):
        """``(W, Y)`` with ``n`` i.i.d. draws."""
        idx = rng.choice(self.size, size=int(n), p=self.probs)
        W = self.support[idx].copy()
        Y = self.gamma0[idx] + self.noise * rng.standard_normal(int(n))
        return W, Y

    def marginal(self, columns, rows):
        """``P(W[columns] = rows[columns])`` for each row."""
        cols = list(columns)
        sup = self.support[:, cols]
        rows = np.atleast_2d(rows)[:, cols]
        return np.array([self.probs[np.all(sup == r, axis=1)].sum() for r in rows])


def _moment_distribution(dgp, f):
    """Rows and weights over which ``m`` is averaged in the population."""
    if f.pooled:
        alt = np.asarray(f.alternative, dtype=float)
        return alt, np.full(alt.shape[0], 1.0 / alt.shape[0])
    return dgp.support, dgp.probs


def riesz_functional(dgp: DiscreteDGP, f: Functional):
    """``r_u = E[m(W, delta_u)]`` for every support point ``u``.

    Raises :class:`DegenerateDataError` when ``f`` puts weight on a point
    outside the support.
    """
    rows, weights = _moment_distribution(dgp, f)
    pts, coef = f.stencil(rows)
    mass = (weights[:, None] * coef).reshape(-1)
    flat = pts.reshape(-1, pts.shape[2])
    idx = dgp.locate(flat, strict=False)
    off = (idx < 0) & (mass != 0)
    if np.any(off):
        raise DegenerateDataError(
            f"functional evaluates gamma at zero-probability point {flat[np.flatnonzero(off)[0]].tolist()}"
        )
    r = np.zeros(dgp.size)
    keep = idx >= 0
    np.add.at(r, idx[keep], mass[keep])
    return r


def brute_force_riesz(dgp: DiscreteDGP, f: Functional):
    """Minimal Riesz representer ``alpha_0`` tabulated over the support.

    ``alpha_0`` solves ``sum_w P(w) alpha(w) delta_u(w) = E[m(W, delta_u)]``
    for every point mass ``delta_u``. This is the weighted least-squares
    system ``diag(P) alpha = r``, solved in minimum-norm form.
    """
    r = riesz_functional(dgp, f)
    A = np.diag(dgp.probs)
    alpha, *_ = np.linalg.lstsq(A, r, rcond=None)
    return alpha


def population_moment(dgp: DiscreteDGP, f: Functional, theta, gamma, alpha):
    """``E[psi(W, theta, gamma, alpha)]`` by enumeration; ``gamma``/``alpha`` map tables to values."""
    rows, weights = _moment_distribution(dgp, f)
    m_part = float(weights @ m_values(f, rows, gamma))
    corr = dgp.probs @ (np.asarray(alpha(dgp.support)) * (dgp.gamma0 - np.asarray(gamma(dgp.support))))
    return m_part + float(corr) - float(theta)


def _inf_conditional(dgp, anchor_cols, anchor_vals, given_cols, given_vals=None):
    """``min_x P(anchor | x)`` over the covariate values ``x`` with ``P(x, given) > 0``."""
    p = dgp.support.shape[1]
    x_cols = [c for c in range(p) if c not in anchor_cols]
    worst = np.inf
    seen = set()
    for row in dgp.support:
        if given_cols and not np.all(row[given_cols] == given_vals):
            continue
        key = tuple(row[x_cols])
        if key in seen:
            continue
        seen.add(key)
        in_x = np.all(dgp.support[:, x_cols] == row[x_cols], axis=1)
        if given_cols:
            in_x &= np.all(dgp.support[:, given_cols] == given_vals, axis=1)
        hit = in_x & np.all(dgp.support[:, anchor_cols] == anchor_vals, axis=1)
        worst = min(worst, dgp.probs[hit].sum() / dgp.probs[in_x].sum())
    return worst


def continuity_constant(dgp: DiscreteDGP, f: Functional) -> float:
    """Mean-square continuity constant ``L_m`` with ``E[m(W,g)^2] <= L_m E[g(W)^2]``.

    Uses the closed-form bounds for each functional kind (inverse squared
    point mass for evaluation, inverse worst-case propensity for treatment
    effects), and the exact constant for any other functional. Returns
    ``inf`` when overlap fails.
    """
    kind = f.kind
    if kind == "evaluation":
        pw = dgp.marginal(f.columns, f.anchor_rows(dgp.support.shape[1]))[0]
        return np.inf if pw == 0 else float(pw) ** -2
    if kind in ("ate", "att"):
        t = f.treatment
        q = f.level
        p_min = _inf_conditional(dgp, [t], np.array([q]), [])
        return np.inf if p_min == 0 else 1.0 / p_min
    if kind == "cate":
        t, v = f.treatment, f.subcovariate
        p_min = _inf_conditional(dgp, [t, v], np.array([f.level, f.sublevel]), [v], np.array([f.sublevel]))
        return np.inf if p_min == 0 else 1.0 / p_min
    if kind == "ate_ds":
        t = f.treatment
        alt = np.asarray(f.alternative, dtype=float)
        x_cols = [c for c in range(dgp.support.shape[1]) if c != t]
        worst = 0.0
        for key in np.unique(alt[:, x_cols], axis=0):
            p_alt = np.mean(np.all(alt[:, x_cols] == key, axis=1))
            in_x = np.all(dgp.support[:, x_cols] == key, axis=1)
            p_dx = dgp.probs[in_x & (dgp.support[:, t] == f.level)].sum()
            if p_dx == 0:
                return np.inf
            worst = max(worst, p_alt / p_dx)
        return worst
    return exact_continuity_constant(dgp, f)


def exact_continuity_constant(dgp: DiscreteDGP, f: Functional) -> float:
    """Smallest ``L`` with ``E[m(W,g)^2] <= L E[g(W)^2]`` over all tables ``g``.

    On a finite support ``m(., g) = S g`` for a stencil matrix ``S``, so the
    constant is the top eigenvalue of ``P^{-1/2} S' P S P^{-1/2}``.
    """
    rows, weights = _moment_distribution(dgp, f)
    pts, coef = f.stencil(rows)
    idx = dgp.locate(pts.reshape(-1, pts.shape[2]), strict=False).reshape(coef.shape)
    if np.any((idx < 0) & (coef != 0)):
        return np.inf
    S = np.zeros((rows.shape[0], dgp.size))
    for t in range(coef.shape[1]):
        keep = idx[:, t] >= 0
        np.add.at(S, (np.flatnonzero(keep), idx[keep, t]), coef[keep, t])
    root = 1.0 / np.sqrt(dgp.probs)
    A = (S * root[None, :]).T @ (weights[:, None] * (S * root[None, :]))
    return float(np.linalg.eigvalsh(0.5 * (A + A.T))[-1])


@dataclass
class TrueQuantities:
    theta0: float
    sigma2: float
    L_m: float
    alpha_bar: float
    alpha0: np.ndarray
    E_gamma0_sq: float


def true_quantities(dgp: DiscreteDGP, f: Functional) -> TrueQuantities:
    """Exact ``theta_0``, score variance, continuity constant and representer bound."""
    alpha0 = brute_force_riesz(dgp, f)
    rows, weights = _moment_distribution(dgp, f)
    m0 = m_values(f, rows, dgp.gamma0_fn())
    theta0 = float(weights @ m0)
    resid_var = dgp.probs @ (alpha0**2) * dgp.noise**2
    if f.pooled:
        sigma2 = float(resid_var)
    else:
        sigma2 = float(dgp.probs @ (m0 - theta0) ** 2 + resid_var)
    return TrueQuantities(
        theta0=theta0, sigma2=sigma2, L_m=continuity_constant(dgp, f),
        alpha_bar=float(np.max(np.abs(alpha0))), alpha0=alpha0,
        E_gamma0_sq=float(dgp.probs @ dgp.gamma0**2),
    )


# direct minimization of the empirical Riesz loss


@dataclass
class DirectRiesz:
    """Minimizer of the empirical Riesz loss over the data dictionary.

    The dictionary is ``phi(W_i)`` followed by the representers
    ``g_k = sum_t c_kt phi(p_kt)`` of ``m(M_k, .)``, built from the stencil.
    """

    rho: np.ndarray
    rows: np.ndarray
    points: np.ndarray
    coef: np.ndarray
    spec: KernelSpec
    loss: float

    def __call__(self, w):
        w = self.spec.check(w)
        n = self.rows.shape[0]
        N, T, p = self.points.shape
        k_rows = self.spec.gram(w, self.rows, check=False)
        k_pts = self.spec.gram(w, self.points.reshape(N * T, p), check=False).reshape(-1, N, T)
        return k_rows @ self.rho[:n] + np.einsum("ikt,kt->ik", k_pts, self.coef) @ self.rho[n:]


def dictionary_gram(data, f: Functional, spec: KernelSpec):
    """Gram matrix of the dictionary ``[phi(W_i); g_k]`` from kernel evaluations only."""
    W = spec.check(data)
    M = np.atleast_2d(np.asarray(f.moment_rows(W), dtype=float))
    pts, coef = f.stencil(M)
    N, T, p = pts.shape
    flat = pts.reshape(N * T, p)
    K11 = spec.gram(W, W, check=False)
    K12 = (spec.gram(W, flat, check=False).reshape(-1, N, T) * coef[None]).sum(axis=2)
    Kpp = spec.gram(flat, flat, check=False).reshape(N, T, N, T)
    K22 = np.einsum("at,atbs,bs->ab", coef, Kpp, coef)
    K = np.block([[K11, K12], [K12.T, K22]])
    return W, M, pts, coef, 0.5 * (K + K.T)


def _minimize_quadratic(H, lin, gtol, what):
    """Minimize ``lin . x + x' H x / 2`` for a PSD, possibly singular, ``H``.

    The minimum-norm stationary point ``-H^+ lin`` comes from an SVD least
    squares solve, which copes with coinciding dictionary atoms.
    """
    x = lstsq(H, -lin, cond=1e-13, lapack_driver="gelsd")[0]
    grad = np.linalg.norm(lin + H @ x)
    scale = np.linalg.norm(H, 2) * np.linalg.norm(x) + np.linalg.norm(lin)
    if not np.all(np.isfinite(x)) or grad > gtol * max(scale, 1e-300):
        raise OracleError(f"{what} did not reach a stationary point (gradient norm {grad:.2e})")
    return x


def direct_loss_minimizer(data, f: Functional, spec: KernelSpec, lam: float, gtol=1e-9,
                          max_n=50) -> DirectRiesz:
    """Minimize ``-2 mean_k m(M_k, a) + mean_i a(W_i)^2 + lam |a|^2`` over ``rho``."""
    W, M, pts, coef, K = dictionary_gram(data, f, spec)
    n, N = W.shape[0], M.shape[0]
    if n > max_n:
        raise ConfigError(f"direct minimizer is limited to n <= {max_n}, got {n}")
    A = K[:n, :]  # alpha(W_i) = A_i . rho
    B = K[n:, :]  # m(M_k, alpha) = B_k . rho
    lin = -2.0 * B.sum(axis=0) / N
    H = 2.0 * (A.T @ A) / n + 2.0 * lam * K
    H = 0.5 * (H + H.T)

    rho = _minimize_quadratic(H, lin, gtol, "direct Riesz minimizer")
    loss = float(lin @ rho + 0.5 * rho @ H @ rho)
    return DirectRiesz(rho=rho, rows=W, points=pts, coef=coef, spec=spec, loss=loss)


def direct_ridge_minimizer(features, outcomes, spec: KernelSpec, lam: float, gtol=1e-9):
    """Minimize ``mean (Y_i - g(W_i))^2 + lam |g|^2`` over ``g = sum beta_i k(W_i, .)``; returns ``beta``."""
    W = spec.check(features)
    y = np.asarray(outcomes, dtype=float)
    n = W.shape[0]
    K = spec.gram(W, W, check=False)
    H = 2.0 * (K @ K) / n + 2.0 * lam * K
    H = 0.5 * (H + H.T)
    lin = -2.0 * K @ y / n
    return _minimize_quadratic(H, lin, gtol, "direct ridge minimizer")


# random small instances for equivalence checks

INSTANCE_KINDS = ("evaluation", "ate", "ate_ds", "att", "cate", "incremental")


def random_instance(kind, n, rng):
    """Random ``(W, f, spec, lam)`` of the given functional kind with ``n`` rows."""
    from .functionals import ATE, ATEDS, ATT, CATE, Evaluation, Incremental
    from .kernels import DiscreteIdentity, Gaussian

    lam = float(10 ** rng.uniform(-3, -0.5))
    h = float(rng.uniform(0.5, 2.0))
    if kind == "evaluation":
        W = np.column_stack([rng.integers(0, 3, n), rng.integers(0, 2, n)]).astype(float)
        spec = KernelSpec([DiscreteIdentity(0, (0, 1, 2)), DiscreteIdentity(1, (0, 1))])
        return W, Evaluation(tuple(W[rng.integers(n)])), spec, lam
    if kind == "incremental":
        W = rng.standard_normal((n, 2))
        spec = KernelSpec([Gaussian((0,), h), Gaussian((1,), float(rng.uniform(0.5, 2.0)))])
        return W, Incremental(draws=10, seed=int(rng.integers(1000))), spec, lam
    D = rng.integers(0, 2, n).astype(float)
    V = rng.integers(0, 2, n).astype(float)
    X = rng.standard_normal(n)
    W = np.column_stack([D, V, X])
    spec = KernelSpec([DiscreteIdentity(0, (0, 1)), DiscreteIdentity(1, (0, 1)), Gaussian((2,), h)])
    if kind == "ate":
        f = ATE(float(rng.integers(0, 2)))
    elif kind == "att":
        f = ATT(1.0, 0.0)
    elif kind == "cate":
        f = CATE(1.0, float(rng.integers(0, 2)))
    elif kind == "ate_ds":
        alt = np.column_stack([np.zeros(8), rng.integers(0, 2, 8), rng.standard_normal(8) + 0.3])
        f = ATEDS(1.0, alternative=alt)
    else:
        raise ConfigError(f"unknown instance kind {kind!r}")
    return W, f, spec, lam
