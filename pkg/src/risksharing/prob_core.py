"""Finite probability spaces, random variables, pools and reshuffles.

Everything here is an immutable value: arrays are copied on construction and
flagged read-only, so instances can be shared freely between threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    InvalidPermutationError,
    InvalidPoolError,
    InvalidSpaceError,
    SpaceMismatchError,
)

WEIGHT_SUM_TOL = 1e-12
#: Relative gap used to decide that two aggregate values are "the same level".
GROUP_TOL = 1e-9


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class ProbSpace:
    """Finite atom set with strictly positive weights summing to one."""

    weights: np.ndarray

    def __post_init__(self):
        w = _frozen(self.weights)
        if w.ndim != 1 or w.size == 0:
            raise InvalidSpaceError("weights must be a non-empty 1-d vector")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise InvalidSpaceError("every weight must be finite and > 0")
        if abs(w.sum() - 1.0) > WEIGHT_SUM_TOL:
            raise InvalidSpaceError(f"weights sum to {w.sum()!r}, not 1")
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, m: int) -> ProbSpace:
        return cls(np.full(m, 1.0 / m))

    @property
    def atom_count(self) -> int:
        return self.weights.size

    def __eq__(self, other):
        if not isinstance(other, ProbSpace):
            return NotImplemented
        return np.array_equal(self.weights, other.weights)

    def __hash__(self):
        return hash(self.weights.tobytes())

    def __repr__(self):
        return f"ProbSpace({self.weights.tolist()!r})"


@dataclass(frozen=True, eq=False)
class RandomVariable:
    space: ProbSpace
    values: np.ndarray

    def __post_init__(self):
        v = _frozen(self.values)
        if v.shape != (self.space.atom_count,):
            raise InvalidPoolError(
                f"expected {self.space.atom_count} realizations, got shape {v.shape}"
            )
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, space: ProbSpace, c: float) -> RandomVariable:
        return cls(space, np.full(space.atom_count, float(c)))

    def __add__(self, other: RandomVariable) -> RandomVariable:
        _same_space(self, other)
        return RandomVariable(self.space, self.values + other.values)

    def __eq__(self, other):
        if not isinstance(other, RandomVariable):
            return NotImplemented
        return self.space == other.space and np.array_equal(self.values, other.values)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Pool:
    """Participants x atoms loss matrix on a shared probability space."""

    space: ProbSpace
    losses: np.ndarray

    def __post_init__(self):
        x = _frozen(self.losses)
        if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
            raise InvalidPoolError("losses must be an n x m matrix with n, m >= 1")
        if x.shape[1] != self.space.atom_count:
            raise InvalidPoolError(
                f"pool has {x.shape[1]} atoms, space has {self.space.atom_count}"
            )
        if not np.all(np.isfinite(x)) or np.any(x < 0):
            raise InvalidPoolError("losses must be finite and non-negative")
        object.__setattr__(self, "losses", x)

    @property
    def n(self) -> int:
        return self.losses.shape[0]

    @property
    def m(self) -> int:
        return self.losses.shape[1]

    def row(self, i: int) -> RandomVariable:
        return RandomVariable(self.space, self.losses[i])

    def rows(self) -> list[RandomVariable]:
        return [self.row(i) for i in range(self.n)]

    def __eq__(self, other):
        if not isinstance(other, Pool):
            return NotImplemented
        return self.space == other.space and np.array_equal(self.losses, other.losses)

    __hash__ = None

    def __repr__(self):
        return f"Pool(losses={self.losses.tolist()!r}, weights={self.space.weights.tolist()!r})"


@dataclass(frozen=True, eq=False)
class Permutation:
    """Bijection of ``{0..n-1}``; reshuffled row ``i`` is source row ``mapping[i]``."""

    mapping: tuple[int, ...]

    def __post_init__(self):
        mapping = tuple(int(k) for k in self.mapping)
        if sorted(mapping) != list(range(len(mapping))):
            raise InvalidPermutationError(f"{mapping!r} is not a permutation of 0..{len(mapping) - 1}")
        object.__setattr__(self, "mapping", mapping)

    def __len__(self):
        return len(self.mapping)

    def __getitem__(self, i: int) -> int:
        return self.mapping[i]

    def __eq__(self, other):
        if not isinstance(other, Permutation):
            return NotImplemented
        return self.mapping == other.mapping

    def __hash__(self):
        return hash(self.mapping)

    @classmethod
    def identity(cls, n: int) -> Permutation:
        return cls(tuple(range(n)))

    def inverse(self) -> Permutation:
        inv = [0] * len(self.mapping)
        for i, src in enumerate(self.mapping):
            inv[src] = i
        return Permutation(tuple(inv))

    def is_identity(self) -> bool:
        return all(i == k for i, k in enumerate(self.mapping))


@dataclass(frozen=True, eq=False)
class ContributionMatrix:
    """n x m contributions; rows may be negative."""

    values: np.ndarray

    def __post_init__(self):
        c = _frozen(self.values)
        if c.ndim != 2:
            raise InvalidPoolError("contribution matrix must be 2-d")
        object.__setattr__(self, "values", c)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def residuals(self, pool: Pool) -> np.ndarray:
        """Per-atom ``sum_i C_i - S``."""
        return self.values.sum(axis=0) - aggregate(pool).values

    def __eq__(self, other):
        if not isinstance(other, ContributionMatrix):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    __hash__ = None


def _same_space(a: RandomVariable, b: RandomVariable) -> None:
    if a.space is not b.space and a.space != b.space:
        raise SpaceMismatchError("random variables live on different probability spaces")


def make_pool(losses: Sequence[Sequence[float]], weights: Iterable[float] | None = None) -> Pool:
    """Convenience constructor; uniform weights when none are given."""
    x = np.asarray(losses, dtype=float)
    if x.ndim != 2:
        raise InvalidPoolError("losses must be a 2-d array")
    space = ProbSpace.uniform(x.shape[1]) if weights is None else ProbSpace(np.asarray(list(weights), float))
    return Pool(space, x)


def aggregate(pool: Pool) -> RandomVariable:
    # fsum is correctly rounded, hence independent of row order.
    return RandomVariable(pool.space, np.array([math.fsum(col) for col in pool.losses.T]))


def reshuffle(pool: Pool, perm: Permutation) -> Pool:
    if len(perm) != pool.n:
        raise InvalidPermutationError(f"permutation of length {len(perm)} for a pool of {pool.n}")
    return Pool(pool.space, pool.losses[list(perm.mapping)])


def expectation(rv: RandomVariable) -> float:
    return float(rv.space.weights @ rv.values)


def covariance(a: RandomVariable, b: RandomVariable) -> float:
    """``E[ab] - E[a]E[b]``, evaluated on values shifted by their first atom.

    The shift leaves the covariance unchanged but makes it exactly zero for a
    constant argument, which is what degenerate-pool detection relies on.
    """
    _same_space(a, b)
    w = a.space.weights
    da = a.values - a.values[0]
    db = b.values - b.values[0]
    return float(w @ (da * db) - (w @ da) * (w @ db))


def variance(rv: RandomVariable) -> float:
    return max(0.0, covariance(rv, rv))


def level_sets(values: np.ndarray, tol: float = GROUP_TOL) -> list[np.ndarray]:
    """Partition atom indices into groups of (numerically) equal values.

    Sorts the values and splits wherever consecutive values differ by more
    than ``tol * max(1, |v|)``. Groups come back ordered by value, each with
    ascending atom indices.
    """
    v = np.asarray(values, dtype=float)
    order = np.argsort(v, kind="stable")
    groups: list[list[int]] = []
    prev = None
    for j in order:
        if prev is None or v[j] - prev > tol * max(1.0, abs(prev)):
            groups.append([])
        groups[-1].append(int(j))
        prev = v[j]
    return [np.array(sorted(g), dtype=int) for g in groups]


def level_labels(values: np.ndarray, tol: float = GROUP_TOL) -> np.ndarray:
    labels = np.empty(len(values), dtype=int)
    for k, g in enumerate(level_sets(values, tol)):
        labels[g] = k
    return labels


@dataclass(frozen=True)
class Tolerance:
    """Equality test ``|a - b| <= atol + rtol * max(|a|, |b|)``."""

    atol: float = 1e-9
    rtol: float = 1e-9

    def close(self, a, b):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        return np.abs(a - b) <= self.atol + self.rtol * np.maximum(np.abs(a), np.abs(b))

    def bound(self, a: float, b: float) -> float:
        return self.atol + self.rtol * max(abs(a), abs(b))


DEFAULT_TOL = Tolerance()
