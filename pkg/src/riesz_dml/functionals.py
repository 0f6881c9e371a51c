"""Linear functionals ``m(w, gamma)`` and the extended kernel blocks they induce.

Every supported functional has the same shape::

    m(w, gamma) = s(w) * sum_t b_t * gamma(w with anchor columns set to q_t)

where the anchor columns are the treatment (and subcovariate) columns, ``q_t``
are fixed anchor values, ``b_t`` are weights and ``s`` is a row selector
(an indicator for ATT/CATE, one otherwise). For Evaluation every kernel
column is an anchor column.

The representer of ``alpha -> m(w, alpha)`` in the RKHS is then
``g_w = s(w) * (sum_t b_t phi_mod(q_t)) (x) phi_rest(w_rest)``, which gives
closed forms for all blocks:

    K2[i, j] = <phi(W_i), g_j>  = s(M_j) h(W_i) k_rest(W_i, M_j)
    K4[i, j] = <g_i, g_j>       = s(M_i) s(M_j) c k_rest(M_i, M_j)

with ``h(w) = sum_t b_t k_mod(w, q_t)`` and ``c = b' K_mod(q, q) b``. ``M``
are the moment rows: the sample itself, or the alternative population
for ATE-DS.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .kernels import DiscreteIdentity, Gaussian, KernelSpec


# weight densities for incremental effects


@dataclass(frozen=True)
class GaussianDensity:
    """Gaussian weight density; score ``S(u) = (u - mean) / sd^2``."""

    mean: float = 0.0
    sd: float = 1.0

    def __post_init__(self):
        if not self.sd > 0:
            raise ConfigError(f"GaussianDensity sd must be positive, got {self.sd}")

    def sample(self, size, rng):
        return rng.normal(self.mean, self.sd, size)

    def score(self, u):
        return (np.asarray(u, dtype=float) - self.mean) / self.sd**2


@dataclass(frozen=True)
class TabulatedDensity:
    """Weight density given on a grid of ``(u, omega(u), omega'(u))``.

    Sampling inverts the trapezoid-rule CDF; the score ``-omega'/omega`` is
    linearly interpolated between grid points.
    """

    u: tuple
    omega: tuple
    domega: tuple

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        w = np.asarray(self.omega, dtype=float)
        dw = np.asarray(self.domega, dtype=float)
        if not (u.ndim == 1 and u.shape == w.shape == dw.shape and len(u) >= 2):
            raise ConfigError("TabulatedDensity needs equal-length grids of at least 2 points")
        if np.any(np.diff(u) <= 0):
            raise ConfigError("TabulatedDensity grid must be strictly increasing")
        if np.any(w <= 0):
            raise ConfigError("TabulatedDensity values must be positive on the grid")
        object.__setattr__(self, "u", tuple(u))
        object.__setattr__(self, "omega", tuple(w))
        object.__setattr__(self, "domega", tuple(dw))

    def sample(self, size, rng):
        u = np.asarray(self.u)
        w = np.asarray(self.omega)
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * (w[1:] + w[:-1]) * np.diff(u))])
        cdf /= cdf[-1]
        return np.interp(rng.uniform(size=size), cdf, u)

    def score(self, u):
        s = -np.asarray(self.domega) / np.asarray(self.omega)
        return np.interp(np.asarray(u, dtype=float), np.asarray(self.u), s)


# functionals


class Functional:
    """Base class; subclasses define anchors, weights, selector and moment rows."""

    kind = "functional"
    pooled = False  # m-average taken over a separate population

    anchor_columns: tuple = ()

    def anchor_values(self):
        raise NotImplementedError

    def anchor_weights(self):
        return np.ones(len(self.anchor_values()))

    def selector(self, rows):
        return np.ones(rows.shape[0])

    def moment_rows(self, rows):
        return rows

    def ratio_indicator(self, rows):
        return None

    def validate(self, spec: KernelSpec):
        mod, rest = spec.split(self.anchor_columns)
        return mod, rest

    def anchor_rows(self, width):
        q = self.anchor_values()
        rows = np.zeros((q.shape[0], width))
        rows[:, list(self.anchor_columns)] = q
        return rows

    def stencil(self, rows):
        """Points and weights with ``m(w, gamma) = sum_t weight_t gamma(point_t)``."""
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        q = self.anchor_values()
        pts = np.repeat(rows[:, None, :], q.shape[0], axis=1)
        pts[:, :, list(self.anchor_columns)] = q[None, :, :]
        weights = self.selector(rows)[:, None] * self.anchor_weights()[None, :]
        return pts, weights


def _discrete_component(spec, column, what):
    comp = spec.component_for(column)
    if not isinstance(comp, DiscreteIdentity):
        raise ConfigError(f"{what} column {column} must use a discrete kernel component")
    return comp


def _check_level(comp, level, what):
    if float(level) not in comp.levels:
        raise ConfigError(f"{what} {level!r} is not among the levels {list(comp.levels)}")


@dataclass(frozen=True)
class Evaluation(Functional):
    """``theta = gamma(point)`` over a fully discrete domain."""

    point: tuple
    columns: tuple = None

    kind = "evaluation"

    def __post_init__(self):
        point = tuple(float(v) for v in np.atleast_1d(self.point))
        cols = tuple(range(len(point))) if self.columns is None else tuple(int(c) for c in self.columns)
        if len(cols) != len(point):
            raise ConfigError("Evaluation point and columns differ in length")
        object.__setattr__(self, "point", point)
        object.__setattr__(self, "columns", cols)

    @property
    def anchor_columns(self):
        return self.columns

    def anchor_values(self):
        return np.asarray(self.point, dtype=float)[None, :]

    def validate(self, spec):
        mod, rest = spec.split(self.anchor_columns)
        if rest.components:
            raise ConfigError("Evaluation point must cover every kernel component")
        for comp in mod.components:
            if not isinstance(comp, DiscreteIdentity):
                raise ConfigError("Evaluation requires every kernel component to be discrete")
            _check_level(comp, self.point[self.columns.index(comp.column)], "evaluation label")
        return mod, rest


@dataclass(frozen=True)
class ATE(Functional):
    """Mean potential outcome ``E[gamma(d, X)]`` of treatment level ``level``."""

    level: float
    treatment: int = 0

    kind = "ate"

    @property
    def anchor_columns(self):
        return (self.treatment,)

    def anchor_values(self):
        return np.array([[float(self.level)]])

    def validate(self, spec):
        mod, rest = spec.split(self.anchor_columns)
        _check_level(_discrete_component(spec, self.treatment, "treatment"), self.level, "treatment level")
        return mod, rest


@dataclass(frozen=True)
class ATEDS(ATE):
    """Mean potential outcome under covariate shift to ``alternative`` rows.

    ``alternative`` holds full-width feature rows of the alternative
    population; its treatment column is ignored.
    """

    alternative: np.ndarray = field(default=None, compare=False)

    kind = "ate_ds"
    pooled = True

    def __post_init__(self):
        if self.alternative is None:
            raise ConfigError("ATE-DS needs an alternative population table")
        alt = np.atleast_2d(np.asarray(self.alternative, dtype=float))
        if alt.shape[0] == 0:
            raise ConfigError("ATE-DS alternative population is empty")
        alt = alt.copy()
        alt[:, self.treatment] = float(self.level)
        alt.setflags(write=False)
        object.__setattr__(self, "alternative", alt)

    def moment_rows(self, rows):
        return self.alternative

    def with_alternative(self, alt):
        return ATEDS(level=self.level, treatment=self.treatment, alternative=alt)


@dataclass(frozen=True)
class ATT(Functional):
    """``E[gamma(level, X) 1{D = condition}]``; divide by ``P(condition)`` for the ATT."""

    level: float
    condition: float
    treatment: int = 0

    kind = "att"

    @property
    def anchor_columns(self):
        return (self.treatment,)

    def anchor_values(self):
        return np.array([[float(self.level)]])

    def selector(self, rows):
        return (rows[:, self.treatment] == float(self.condition)).astype(float)

    def ratio_indicator(self, rows):
        return self.selector(rows)

    def validate(self, spec):
        mod, rest = spec.split(self.anchor_columns)
        comp = _discrete_component(spec, self.treatment, "treatment")
        _check_level(comp, self.level, "treatment level")
        _check_level(comp, self.condition, "conditioning level")
        return mod, rest


@dataclass(frozen=True)
class CATE(Functional):
    """``E[gamma(level, sublevel, X) 1{V = sublevel}]``; divide by ``P(V = sublevel)``."""

    level: float
    sublevel: float
    treatment: int = 0
    subcovariate: int = 1

    kind = "cate"

    def __post_init__(self):
        if self.treatment == self.subcovariate:
            raise ConfigError("CATE treatment and subcovariate columns must differ")

    @property
    def anchor_columns(self):
        return (self.treatment, self.subcovariate)

    def anchor_values(self):
        return np.array([[float(self.level), float(self.sublevel)]])

    def selector(self, rows):
        return (rows[:, self.subcovariate] == float(self.sublevel)).astype(float)

    def ratio_indicator(self, rows):
        return self.selector(rows)

    def validate(self, spec):
        mod, rest = spec.split(self.anchor_columns)
        _check_level(_discrete_component(spec, self.treatment, "treatment"), self.level, "treatment level")
        _check_level(_discrete_component(spec, self.subcovariate, "subcovariate"), self.sublevel, "subcovariate level")
        return mod, rest


@dataclass(frozen=True)
class Incremental(Functional):
    """``E[S(U) gamma(U, X)]`` with ``U ~ density``, using ``draws`` fixed Monte Carlo draws."""

    density: object = field(default_factory=GaussianDensity)
    draws: int = 100
    seed: int = 0
    treatment: int = 0

    kind = "incremental"

    def __post_init__(self):
        if int(self.draws) < 1:
            raise ConfigError(f"Incremental draws must be a positive integer, got {self.draws}")
        u = np.asarray(self.density.sample(int(self.draws), np.random.default_rng(self.seed)), dtype=float)
        s = np.asarray(self.density.score(u), dtype=float)
        if not np.all(np.isfinite(s)):
            raise ConfigError("Incremental score is not finite at the drawn points")
        u.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "_u", u)
        object.__setattr__(self, "_s", s)

    @property
    def anchor_columns(self):
        return (self.treatment,)

    @property
    def points(self):
        return self._u

    @property
    def scores(self):
        return self._s

    def anchor_values(self):
        return self._u[:, None]

    def anchor_weights(self):
        return self._s / len(self._s)

    def validate(self, spec):
        mod, rest = spec.split(self.anchor_columns)
        if not isinstance(spec.component_for(self.treatment), Gaussian):
            raise ConfigError("Incremental effects need a continuous (Gaussian) treatment kernel")
        return mod, rest


# values of m


def m_values(f: Functional, rows, gamma):
    """``m(w, gamma)`` for every row; ``gamma`` maps a 2-D table to values."""
    pts, weights = f.stencil(rows)
    n, T, p = pts.shape
    vals = np.asarray(gamma(pts.reshape(n * T, p)), dtype=float).reshape(n, T)
    return (weights * vals).sum(axis=1)


def m_value(f: Functional, w, gamma) -> float:
    """``m(w, gamma)`` for a single data row."""
    return float(m_values(f, np.atleast_2d(w), gamma)[0])


# kernel blocks


class _Geometry:
    """Precomputed pieces shared by the block formulas."""

    def __init__(self, f, spec, width):
        self.f = f
        self.mod, self.rest = f.validate(spec)
        self.anchors = f.anchor_rows(width)
        self.b = f.anchor_weights()
        self.c = float(self.b @ self.mod.gram(self.anchors, self.anchors, check=False) @ self.b)

    def h(self, rows):
        return self.mod.gram(rows, self.anchors, check=False) @ self.b

    def block2(self, rows, moment):
        """Entries ``m(moment_j, k(rows_i, .))``."""
        return self.h(rows)[:, None] * self.rest.gram(rows, moment, check=False) * self.f.selector(moment)[None, :]

    def block4(self, moment_a, moment_b):
        """Entries ``<g(moment_a_i), g(moment_b_j)>``."""
        sa = self.f.selector(moment_a)
        sb = self.f.selector(moment_b)
        return self.c * sa[:, None] * sb[None, :] * self.rest.gram(moment_a, moment_b, check=False)


def geometry(f: Functional, spec: KernelSpec, width: int) -> _Geometry:
    return _Geometry(f, spec, width)


@dataclass
class ExtendedKernel:
    """Blocks of the extended kernel matrix plus ``Omega`` and ``v``.

    ``K1`` is ``n x n``; ``K2`` is ``n x N`` and ``K4`` is ``N x N`` where ``N``
    is the number of moment rows (``N = n`` except for ATE-DS). ``v`` is scaled
    by ``n / N`` so that ``(Omega + n lam K) rho = v`` always characterizes
    the estimator.
    """

    K1: np.ndarray
    K2: np.ndarray
    K3: np.ndarray
    K4: np.ndarray
    Omega: np.ndarray
    v: np.ndarray

    @property
    def K(self):
        return np.block([[self.K1, self.K2], [self.K3, self.K4]])


def build_extended_kernel(f: Functional, spec: KernelSpec, data) -> ExtendedKernel:
    """Extended kernel matrix for functional ``f`` on the rows of ``data``."""
    W = spec.check(data)
    M = spec.check(f.moment_rows(W))
    n, N = W.shape[0], M.shape[0]
    geo = geometry(f, spec, W.shape[1])
    K1 = spec.gram(W, W, check=False)
    K2 = geo.block2(W, M)
    K3 = K2.T.copy()
    K4 = geo.block4(M, M)
    left = np.vstack([K1, K3])
    Omega = left @ left.T
    v = (n / N) * np.concatenate([K2.sum(axis=1), K4.sum(axis=1)])
    return ExtendedKernel(K1=K1, K2=K2, K3=K3, K4=K4, Omega=Omega, v=v)


def ktilde(f: Functional, spec: KernelSpec, w_train, w_eval) -> float:
    """``<phi(w_train), M phi(w_eval)>``: second-block entry of the Riesz test vector at ``w_eval``."""
    w_train = spec.check(w_train)
    w_eval = spec.check(w_eval)
    geo = geometry(f, spec, w_train.shape[1])
    return float(geo.block2(w_eval, w_train)[0, 0])
