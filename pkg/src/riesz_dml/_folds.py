"""Random fold partitions for cross-fitting and cross-validation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class FoldPlan:
    """Assignment of ``n`` observations to ``L`` folds (labels ``0 .. L-1``)."""

    n: int
    L: int
    assignment: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.assignment, dtype=int)
        if a.shape != (self.n,):
            raise ConfigError(f"fold assignment has shape {a.shape}, expected ({self.n},)")
        if np.any((a < 0) | (a >= self.L)):
            raise ConfigError("fold labels must lie in 0 .. L-1")
        if len(np.unique(a)) != self.L:
            raise ConfigError("every fold must be non-empty")
        a.setflags(write=False)
        object.__setattr__(self, "assignment", a)

    def test(self, fold):
        return np.flatnonzero(self.assignment == fold)

    def train(self, fold):
        return np.flatnonzero(self.assignment != fold)

    def __iter__(self):
        for fold in range(self.L):
            yield fold, self.train(fold), self.test(fold)


def make_folds(n: int, L: int, seed=0) -> FoldPlan:
    """Uniformly random partition into ``L`` folds whose sizes differ by at most one."""
    n, L = int(n), int(L)
    if L < 2:
        raise ConfigError(f"need at least 2 folds, got {L}")
    if L > n:
        raise ConfigError(f"cannot split {n} observations into {L} folds")
    perm = np.random.default_rng(seed).permutation(n)
    assignment = np.empty(n, dtype=int)
    assignment[perm] = np.arange(n) % L
    return FoldPlan(n=n, L=L, assignment=assignment)
