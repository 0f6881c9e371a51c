"""Product kernels over column groups.

A :class:`KernelSpec` multiplies one kernel per column group. Continuous
groups use a Gaussian kernel ``exp(-|a - b|^2 / (2 h^2))``; discrete columns
use the identity (Dirac) kernel on a finite level set. Rows are always
full-width 2-D float arrays and components address them by column index.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .errors import ConfigError, DegenerateDataError, InputError

MEDIAN_SUBSAMPLE = 2000
MEDIAN_SEED = 20210517


def c_max_of(levels, gram=None) -> float:
    """Largest ``c`` such that ``K_full - c^2 * ones`` stays positive semidefinite.

    Computed as ``1 / sqrt(1' K^-1 1)``. With the default identity kernel
    this is ``1 / sqrt(m)`` for ``m`` levels; the constant function then has
    RKHS norm ``1 / c_max``.
    """
    levels = list(levels)
    if len(levels) == 0:
        raise InputError("c_max_of: empty level set")
    if len(set(levels)) != len(levels):
        raise InputError("c_max_of: duplicate labels in level set")
    m = len(levels)
    K = np.eye(m) if gram is None else np.asarray(gram, dtype=float)
    ones = np.ones(m)
    return float(1.0 / np.sqrt(ones @ np.linalg.solve(K, ones)))


def median_bandwidth(values) -> float:
    """Median heuristic: median pairwise distance between distinct rows.

    ``values`` is 1-D (one column) or 2-D (a column group, Euclidean
    distance). Above ``MEDIAN_SUBSAMPLE`` rows a fixed-seed subsample is used.
    If the median is zero while some spread exists (heavily tied data), the
    median over the nonzero distances is returned instead.
    """
    x = np.asarray(values, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < 2:
        raise DegenerateDataError("median_bandwidth needs at least 2 values")
    if x.shape[0] > MEDIAN_SUBSAMPLE:
        rng = np.random.default_rng(MEDIAN_SEED)
        x = x[rng.choice(x.shape[0], MEDIAN_SUBSAMPLE, replace=False)]
    dist = pdist(x)
    if not np.any(dist > 0):
        raise DegenerateDataError("median_bandwidth: all values identical")
    h = float(np.median(dist))
    if h <= 0:
        h = float(np.median(dist[dist > 0]))
    return h


@dataclass(frozen=True)
class Gaussian:
    """Gaussian kernel on a group of continuous columns."""

    columns: tuple
    bandwidth: float

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(int(c) for c in self.columns))
        if len(self.columns) == 0:
            raise ConfigError("Gaussian component needs at least one column")
        if not (np.isfinite(self.bandwidth) and self.bandwidth > 0):
            raise ConfigError(f"Gaussian bandwidth must be positive, got {self.bandwidth}")

    bound = 1.0

    def gram(self, A, B):
        a = A[:, self.columns]
        b = B[:, self.columns]
        d2 = cdist(a, b, "sqeuclidean")
        return np.exp(-d2 / (2.0 * self.bandwidth**2))

    def check(self, rows):
        pass


@dataclass(frozen=True)
class DiscreteIdentity:
    """Identity kernel ``k(a, b) = 1{a == b}`` on a finite level set."""

    column: int
    levels: tuple

    def __post_init__(self):
        object.__setattr__(self, "column", int(self.column))
        levels = tuple(float(v) for v in self.levels)
        if len(levels) == 0:
            raise ConfigError("DiscreteIdentity needs a non-empty level set")
        if len(set(levels)) != len(levels):
            raise ConfigError(f"DiscreteIdentity levels must be distinct: {levels}")
        object.__setattr__(self, "levels", levels)

    bound = 1.0

    @property
    def columns(self):
        return (self.column,)

    @property
    def c_max(self) -> float:
        return c_max_of(self.levels)

    def gram(self, A, B):
        return (A[:, self.column][:, None] == B[:, self.column][None, :]).astype(float)

    def check(self, rows):
        col = rows[:, self.column]
        bad = ~np.isin(col, np.asarray(self.levels))
        if np.any(bad):
            raise InputError(
                f"unknown label {col[bad][0]!r} in column {self.column}; "
                f"levels are {list(self.levels)}"
            )


class KernelSpec:
    """Product kernel ``k(w, w') = prod_j k_j(w_j, w'_j)`` over disjoint column groups."""

    def __init__(self, components: Sequence):
        self.components = tuple(components)
        seen = set()
        for comp in self.components:
            overlap = seen.intersection(comp.columns)
            if overlap:
                raise ConfigError(f"column(s) {sorted(overlap)} used by two kernel components")
            seen.update(comp.columns)
        self.columns = tuple(sorted(seen))

    def __repr__(self):
        return f"KernelSpec({list(self.components)!r})"

    def __eq__(self, other):
        return isinstance(other, KernelSpec) and self.components == other.components

    def __hash__(self):
        return hash(self.components)

    @property
    def bound(self) -> float:
        """Upper bound on ``k(w, w)``."""
        return float(np.prod([c.bound for c in self.components])) if self.components else 1.0

    @property
    def all_discrete(self) -> bool:
        return all(isinstance(c, DiscreteIdentity) for c in self.components)

    def component_for(self, column: int):
        for comp in self.components:
            if column in comp.columns:
                return comp
        return None

    def split(self, columns):
        """Split into (components covering ``columns``, all other components).

        Each requested column must belong to a component lying entirely
        inside ``columns``.
        """
        columns = set(int(c) for c in columns)
        inside, outside = [], []
        for comp in self.components:
            cols = set(comp.columns)
            if cols <= columns:
                inside.append(comp)
            elif cols & columns:
                raise ConfigError(
                    f"kernel component over columns {sorted(cols)} mixes functional "
                    f"columns {sorted(cols & columns)} with others"
                )
            else:
                outside.append(comp)
        covered = set(c for comp in inside for c in comp.columns)
        missing = columns - covered
        if missing:
            raise ConfigError(f"column(s) {sorted(missing)} are not covered by the kernel")
        return KernelSpec(inside), KernelSpec(outside)

    def check(self, rows):
        """Validate a table of rows against the kernel components; returns it as a float array."""
        rows = np.asarray(rows, dtype=float)
        if rows.ndim == 1:
            rows = rows[None, :]
        if rows.ndim != 2:
            raise InputError("rows must be a 2-D table")
        if self.columns and rows.shape[1] <= max(self.columns):
            raise InputError(
                f"row has {rows.shape[1]} columns but the kernel references column {max(self.columns)}"
            )
        for comp in self.components:
            comp.check(rows)
        return rows

    def gram(self, A, B, check=True):
        """Gram matrix with entries ``k(A_i, B_j)``."""
        if check:
            A = self.check(A)
            B = self.check(B)
        K = np.ones((A.shape[0], B.shape[0]))
        for comp in self.components:
            K *= comp.gram(A, B)
        return K

    def eval(self, w, w2) -> float:
        return float(self.gram(np.atleast_2d(w), np.atleast_2d(w2))[0, 0])


def eval_kernel(spec: KernelSpec, w, w2) -> float:
    """Kernel value ``k(w, w2)`` for two feature rows."""
    return spec.eval(w, w2)


def gram(spec: KernelSpec, rows_a, rows_b):
    """Gram matrix between two tables; symmetric when the tables coincide."""
    return spec.gram(rows_a, rows_b)
