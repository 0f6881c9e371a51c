"""Synthetic data generating processes and the Monte Carlo coverage harness."""

from __future__ import annotations

import csv
import io
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .dml import critical_value, estimate, fit_dml, make_folds
from .errors import ConfigError, HarnessError, RieszDMLError
from .functionals import ATE, Evaluation, Functional, GaussianDensity, Incremental
from .kernels import DiscreteIdentity, Gaussian, KernelSpec, median_bandwidth
from .krr import DEFAULT_GRID
from .oracle import DiscreteDGP, brute_force_riesz, true_quantities

MAX_FAILURE_RATE = 0.05
THETA_MC_DRAWS = 1_000_000


@dataclass
class Dataset:
    """Features ``W`` (columns named by ``columns``) and outcomes ``Y``."""

    W: np.ndarray
    Y: np.ndarray
    columns: tuple

    @property
    def n(self):
        return self.W.shape[0]


# data generating processes


@dataclass(frozen=True)
class DiscreteEval:
    """Two discrete covariates on an 8-point support; target ``gamma_0(w*)``."""

    w1_levels: tuple = (0.0, 1.0, 2.0, 3.0)
    w2_levels: tuple = (0.0, 1.0)
    probs: tuple = (0.10, 0.05, 0.15, 0.25, 0.10, 0.10, 0.15, 0.10)
    gamma0: tuple = None
    point: tuple = (1.0, 1.0)
    noise: float = 1.0

    kind = "discrete_eval"
    columns = ("w1", "w2")

    def __post_init__(self):
        support = self.support
        g0 = self.gamma0
        if g0 is None:
            g0 = tuple(1.0 + 0.5 * a + b for a, b in support)
        object.__setattr__(self, "gamma0", tuple(float(v) for v in g0))
        object.__setattr__(self, "_dgp", DiscreteDGP(support, self.probs, self.gamma0, self.noise))
        if tuple(map(float, self.point)) not in {tuple(r) for r in support}:
            raise ConfigError(f"evaluation point {self.point} is not in the support")

    @property
    def support(self):
        return np.array([(a, b) for a in self.w1_levels for b in self.w2_levels], dtype=float)

    @property
    def discrete(self) -> DiscreteDGP:
        return self._dgp

    def sample(self, n, rng):
        return self._dgp.sample(n, rng)

    def default_functional(self):
        return Evaluation(self.point)

    def kernel(self, W=None):
        return KernelSpec([DiscreteIdentity(0, self.w1_levels), DiscreteIdentity(1, self.w2_levels)])

    def theta0(self, f):
        return true_quantities(self._dgp, f).theta0

    def oracle_gamma(self):
        return self._dgp.gamma0_fn()

    def oracle_alpha(self, f):
        return self._dgp.table_function(brute_force_riesz(self._dgp, f))


@dataclass(frozen=True)
class BinaryATE:
    """Binary treatment with logistic propensity and a smooth nonlinear outcome.

    ``X ~ N(0, I_p)``, ``P(D = 1 | x) = clip(expit(x' b), eps, 1 - eps)`` and
    ``Y = d tau + sin(x1) + 0.5 x2^2 - 0.5 + noise * eps``.
    """

    p: int = 5
    coefficients: tuple = (0.4, 0.3, -0.3, 0.2, 0.0)
    clip: float = 0.05
    tau: float = 1.0
    noise: float = 1.0

    kind = "binary_ate"

    def __post_init__(self):
        if self.p < 2:
            raise ConfigError("BinaryATE needs at least 2 covariates")
        if len(self.coefficients) != self.p:
            raise ConfigError(f"BinaryATE needs {self.p} propensity coefficients, got {len(self.coefficients)}")
        if not 0.05 <= self.clip < 0.5:
            raise ConfigError(f"propensity clip must lie in [0.05, 0.5), got {self.clip}")
        if not self.noise >= 0:
            raise ConfigError(f"noise scale must be nonnegative, got {self.noise}")

    @property
    def columns(self):
        return ("d",) + tuple(f"x{j + 1}" for j in range(self.p))

    def propensity(self, X):
        score = expit(np.asarray(X) @ np.asarray(self.coefficients, dtype=float))
        return np.clip(score, self.clip, 1.0 - self.clip)

    def outcome_mean(self, d, X):
        X = np.atleast_2d(X)
        return d * self.tau + np.sin(X[:, 0]) + 0.5 * X[:, 1] ** 2 - 0.5

    def sample(self, n, rng):
        X = rng.standard_normal((int(n), self.p))
        D = (rng.uniform(size=int(n)) < self.propensity(X)).astype(float)
        Y = self.outcome_mean(D, X) + self.noise * rng.standard_normal(int(n))
        return np.column_stack([D, X]), Y

    def default_functional(self):
        return ATE(1.0)

    def kernel(self, W):
        W = np.asarray(W, dtype=float)
        cols = tuple(range(1, self.p + 1))
        return KernelSpec([DiscreteIdentity(0, (0.0, 1.0)), Gaussian(cols, median_bandwidth(W[:, cols]))])

    def _check(self, f):
        if not (isinstance(f, ATE) and not f.pooled and f.treatment == 0):
            raise ConfigError("BinaryATE supports the ATE functional on column 0")

    def theta0(self, f):
        """``E[gamma_0(d, X)] = d tau + E[sin X1] + 0.5 E[X2^2] - 0.5 = d tau`` exactly."""
        self._check(f)
        return float(f.level) * self.tau

    def theta0_mc(self, f, draws=THETA_MC_DRAWS, seed=0):
        """Monte Carlo check of :meth:`theta0`."""
        self._check(f)
        X = np.random.default_rng(seed).standard_normal((draws, self.p))
        return float(np.mean(self.outcome_mean(float(f.level), X)))

    def oracle_gamma(self):
        return lambda rows: self.outcome_mean(np.asarray(rows)[:, 0], np.asarray(rows)[:, 1:])

    def oracle_alpha(self, f):
        self._check(f)
        level = float(f.level)

        def alpha(rows):
            rows = np.asarray(rows)
            pi1 = self.propensity(rows[:, 1:])
            prob = pi1 if level == 1.0 else 1.0 - pi1
            return (rows[:, 0] == level) / prob

        return alpha


@dataclass(frozen=True)
class IncrementalDGP:
    """Continuous treatment ``D = shift X1 + N(0, 1)``; outcome ``d + 0.5 sin(x1) + 0.3 d x1``.

    With weight density ``N(0, 1)`` (score ``S(u) = u``) the target
    ``E[S(U) gamma_0(U, X)]`` equals ``1 + 0.3 E[X1] = 1``.
    """

    shift: float = 0.5
    noise: float = 1.0
    draws: int = 100
    mc_seed: int = 0

    kind = "incremental"
    columns = ("d", "x1", "x2")

    def outcome_mean(self, d, X):
        X = np.atleast_2d(X)
        return d + 0.5 * np.sin(X[:, 0]) + 0.3 * d * X[:, 0]

    def sample(self, n, rng):
        X = rng.standard_normal((int(n), 2))
        D = self.shift * X[:, 0] + rng.standard_normal(int(n))
        Y = self.outcome_mean(D, X) + self.noise * rng.standard_normal(int(n))
        return np.column_stack([D, X]), Y

    def default_functional(self):
        return Incremental(GaussianDensity(0.0, 1.0), draws=self.draws, seed=self.mc_seed)

    def kernel(self, W):
        W = np.asarray(W, dtype=float)
        return KernelSpec([Gaussian((0,), median_bandwidth(W[:, 0])), Gaussian((1, 2), median_bandwidth(W[:, 1:]))])

    def theta0(self, f):
        if not (isinstance(f, Incremental) and f.density == GaussianDensity(0.0, 1.0)):
            raise ConfigError("IncrementalDGP's closed form needs a standard Gaussian weight density")
        return 1.0

    def oracle_gamma(self):
        return lambda rows: self.outcome_mean(np.asarray(rows)[:, 0], np.asarray(rows)[:, 1:])

    def oracle_alpha(self, f):
        raise ConfigError("no closed-form Riesz representer for IncrementalDGP")


DGPS = {"discrete_eval": DiscreteEval, "binary_ate": BinaryATE, "incremental": IncrementalDGP}


def make_dgp(kind, **params):
    """DGP by name with keyword overrides of its defaults."""
    if kind not in DGPS:
        raise ConfigError(f"unknown DGP kind {kind!r}; choose from {sorted(DGPS)}")
    try:
        return DGPS[kind](**params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for DGP {kind!r}: {exc}") from exc


def replication_rng(seed, r):
    """Generator for replication ``r``, independent of execution order."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(r)]))


def draw_sample(dgp, n, seed) -> Dataset:
    """``n`` i.i.d. draws from ``dgp``; identical for identical ``seed``."""
    if int(n) < 1:
        raise ConfigError(f"sample size must be positive, got {n}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    W, Y = dgp.sample(int(n), rng)
    return Dataset(W=W, Y=Y, columns=tuple(dgp.columns))


# coverage harness


@dataclass(frozen=True)
class RateSchedule:
    """Deterministic penalty ``scale * n^(-power)``."""

    scale: float = 1.0
    power: float = 0.5

    def __post_init__(self):
        if not (self.scale > 0 and self.power > 0):
            raise ConfigError("rate schedule needs positive scale and power")

    def __call__(self, n):
        return self.scale * float(n) ** (-self.power)


@dataclass(frozen=True)
class EstimationConfig:
    """How each replication estimates: penalties (number, ``"cv"`` or schedule) and inference settings."""

    folds: int = 5
    level: float = 0.95
    lam_gamma: object = "cv"
    lam_alpha: object = "cv"
    grid_gamma: tuple = DEFAULT_GRID
    grid_alpha: tuple = DEFAULT_GRID
    trim: float | None = None
    strict: bool = False
    oracle: bool = False

    def __post_init__(self):
        critical_value(self.level)
        if int(self.folds) < 2:
            raise ConfigError(f"folds must be at least 2, got {self.folds}")


def _resolve(lam, n):
    return lam(n) if callable(lam) else lam


def run_once(dgp, f, n, config: EstimationConfig, rng):
    """One replication: draw, estimate, return the result."""
    data = draw_sample(dgp, n, rng)
    spec = dgp.kernel(data.W)
    plan_seed = int(rng.integers(2**32))
    if config.oracle:
        plan = make_folds(data.n, config.folds, plan_seed)
        return estimate(data.W, data.Y, f, spec, plan, level=config.level, trim=config.trim,
                        gamma=dgp.oracle_gamma(), alpha=dgp.oracle_alpha(f))
    return fit_dml(data.W, data.Y, f, spec, folds=config.folds, seed=plan_seed,
                   lam_gamma=_resolve(config.lam_gamma, n), lam_alpha=_resolve(config.lam_alpha, n),
                   level=config.level, trim=config.trim, grid_gamma=config.grid_gamma,
                   grid_alpha=config.grid_alpha, strict=config.strict, ratio=False)


def _replicate(args):
    dgp, f, n, config, seed, r = args
    start = time.perf_counter()
    try:
        res = run_once(dgp, f, n, config, replication_rng(seed, r))
    except (RieszDMLError, np.linalg.LinAlgError, FloatingPointError) as exc:
        return r, None, f"{type(exc).__name__}: {exc}", time.perf_counter() - start
    return r, (res.theta_hat, res.ci_lower, res.ci_upper), None, time.perf_counter() - start


@dataclass
class CoverageReport:
    """Monte Carlo summary for one configuration."""

    dgp: str
    functional: str
    n: int
    replications: int
    failures: int
    level: float
    theta0: float
    coverage: float
    bias: float
    rmse: float
    median_width: float
    mean_runtime: float
    mode: str = "estimated"
    seed: int = 0
    theta_hat: np.ndarray = field(default=None, repr=False)
    ci_lower: np.ndarray = field(default=None, repr=False)
    ci_upper: np.ndarray = field(default=None, repr=False)
    errors: list = field(default_factory=list, repr=False)

    CSV_FIELDS = ("dgp", "functional", "mode", "n", "replications", "failures", "level", "seed",
                  "theta0", "coverage", "bias", "rmse", "median_width")

    def summary(self, runtime=True):
        keys = self.CSV_FIELDS + (("mean_runtime",) if runtime else ())
        return {k: getattr(self, k) for k in keys}


def run_coverage(dgp, f: Functional | None = None, n=1000, R=100, config: EstimationConfig | None = None,
                 workers=1, seed=0, theta0=None) -> CoverageReport:
    """Coverage, bias, RMSE and median width of the intervals over ``R`` replications.

    Replication ``r`` draws from ``SeedSequence([seed, r])`` so results do
    not depend on ``workers``. Failed replications are excluded and counted;
    more than 5% failures raises :class:`HarnessError`.
    """
    if int(R) < 1:
        raise ConfigError(f"need at least one replication, got {R}")
    f = f or dgp.default_functional()
    config = config or EstimationConfig()
    theta0 = dgp.theta0(f) if theta0 is None else float(theta0)
    jobs = [(dgp, f, int(n), config, int(seed), r) for r in range(int(R))]
    if workers is None or int(workers) == 0 or int(workers) > 1:
        with ProcessPoolExecutor(max_workers=None if not workers else int(workers)) as pool:
            outcomes = list(pool.map(_replicate, jobs))
    else:
        outcomes = [_replicate(job) for job in jobs]
    outcomes.sort(key=lambda o: o[0])
    ok = [o for o in outcomes if o[1] is not None]
    errors = [(o[0], o[2]) for o in outcomes if o[1] is None]
    if len(errors) > MAX_FAILURE_RATE * R:
        raise HarnessError(f"{len(errors)} of {R} replications failed; first: {errors[0][1]}")
    est = np.array([o[1] for o in ok], dtype=float).reshape(-1, 3)
    theta_hat, lo, hi = est[:, 0], est[:, 1], est[:, 2]
    return CoverageReport(
        dgp=dgp.kind, functional=f.kind, n=int(n), replications=int(R), failures=len(errors),
        level=float(config.level), theta0=float(theta0),
        coverage=float(np.mean((lo <= theta0) & (theta0 <= hi))),
        bias=float(np.mean(theta_hat - theta0)),
        rmse=float(np.sqrt(np.mean((theta_hat - theta0) ** 2))),
        median_width=float(np.median(hi - lo)),
        mean_runtime=float(np.mean([o[3] for o in outcomes])),
        mode="oracle" if config.oracle else "estimated", seed=int(seed),
        theta_hat=theta_hat, ci_lower=lo, ci_upper=hi, errors=errors,
    )


def _fmt(value):
    if isinstance(value, float):
        return repr(float(f"{value:.12g}"))
    return str(value)


def reports_to_csv(reports, path=None) -> str:
    """One CSV row per report (runtime excluded so the bytes are reproducible)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CoverageReport.CSV_FIELDS)
    for rep in reports:
        writer.writerow([_fmt(getattr(rep, k)) for k in CoverageReport.CSV_FIELDS])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


def reports_to_json(reports) -> str:
    return json.dumps([rep.summary() for rep in reports], indent=2)
