"""Seeded pool batteries for property testing.

A battery is a list of pools on one shared probability space. Besides random
pools it always plants the edge cases the property checks need to be
meaningful:

* ``zero``: all losses zero (exercises degenerate policies)
* ``constant``: every loss deterministic, so ``S`` is constant
* ``comonotone``: increasing transforms of one common loss
* ``distinct_s``: real-valued losses, all aggregate values distinct
* ``tied_s``: integer losses whose aggregate repeats across atoms
* ``equal_q``: rows are cyclic shifts of one loss over equal-weight atoms, so
  means, variances, covariances with ``S`` and the atom-0 value all coincide
* ``family``: row re-balancings of one aggregate ``S`` (including the
  single-loaded pools ``(S, 0, ..., 0)`` and ``(0, ..., 0, S)``), which
  guarantee cross-pool collisions for the strongly-aggregate checks

Integer losses on dyadic weights keep means and covariances exact in binary
floating point, so ties planted on purpose stay ties.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .prob_core import Permutation, Pool, ProbSpace, aggregate

# 1/4, five atoms of 1/8, two of 1/16
DEFAULT_WEIGHTS = (0.25, 0.125, 0.125, 0.125, 0.125, 0.125, 0.0625, 0.0625)
#: Atoms sharing weight 1/8, used for the cyclic equal-q construction.
_EQUAL_ATOMS = (1, 2, 3, 4, 5)


@dataclass(frozen=True)
class Battery:
    space: ProbSpace
    pools: tuple[Pool, ...]
    tags: tuple[str, ...]
    seed: int
    n_values: tuple[int, ...]
    value_max: int = 100
    params: dict = field(default_factory=dict, compare=False)

    def __len__(self):
        return len(self.pools)

    def __iter__(self):
        return iter(self.pools)

    def indexed(self):
        return list(enumerate(self.pools))

    def by_n(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {}
        for idx, pool in enumerate(self.pools):
            out.setdefault(pool.n, []).append(idx)
        return out

    def tagged(self, tag: str) -> list[Pool]:
        return [p for p, t in zip(self.pools, self.tags) if t == tag or t.startswith(tag + ":")]

    def describe(self) -> dict:
        return {
            "seed": self.seed,
            "n_values": list(self.n_values),
            "atoms": self.space.atom_count,
            "weights": self.space.weights.tolist(),
            "value_max": self.value_max,
            "pools": len(self.pools),
            **self.params,
        }


def _split(rng: np.random.Generator, total: np.ndarray, n: int) -> np.ndarray:
    """Random non-negative integer rows adding up to ``total`` per atom."""
    out = np.empty((n, total.size))
    for j, s in enumerate(total.astype(int)):
        out[:, j] = rng.multinomial(s, rng.dirichlet(np.ones(n)))
    return out


def _ints(rng, n, m, hi) -> np.ndarray:
    return rng.integers(0, hi + 1, size=(n, m)).astype(float)


def edge_pools(rng: np.random.Generator, space: ProbSpace, n: int, hi: int) -> list[tuple[str, Pool]]:
    m = space.atom_count
    out = [("zero", Pool(space, np.zeros((n, m))))]

    consts = rng.choice(np.arange(1, hi + 1), size=n, replace=n > hi)
    out.append(("constant", Pool(space, np.repeat(consts[:, None].astype(float), m, axis=1))))

    base = np.sort(rng.integers(0, hi // 4 + 1, size=m)).astype(float)
    if np.ptp(base) == 0:
        base[-1] += 1
    slopes = rng.integers(1, 4, size=n)
    shifts = rng.integers(0, hi // 4 + 1, size=n)
    out.append(("comonotone", Pool(space, slopes[:, None] * base[None, :] + shifts[:, None])))

    while True:
        x = rng.uniform(0, hi, size=(n, m))
        s = x.sum(axis=0)
        if np.min(np.diff(np.sort(s))) > 1e-6 * hi:
            break
    out.append(("distinct_s", Pool(space, x)))

    # S repeats in a fixed pattern; the per-atom splits differ.
    levels = rng.integers(n, n * hi // 2 + 1, size=3)
    pattern = [0, 0, 1, 1, 0, 2, 2, 1][:m] if m >= 3 else [0] * m
    s = np.array([levels[k] for k in pattern], dtype=float)
    while True:
        x = _split(rng, s, n)
        ok = all(
            len({tuple(x[:, j]) for j in range(m) if pattern[j] == lvl}) > 1
            for lvl in set(pattern)
            if pattern.count(lvl) > 1
        )
        if ok or n == 1:
            break
    out.append(("tied_s", Pool(space, x)))

    if 2 <= n <= len(_EQUAL_ATOMS) and np.allclose(space.weights[list(_EQUAL_ATOMS[:n])], space.weights[_EQUAL_ATOMS[0]]) and m > n:
        atoms = list(_EQUAL_ATOMS[:n])
        row = _ints(rng, 1, m, hi)[0]
        row[atoms] = rng.choice(np.arange(hi + 1), size=n, replace=False)
        x = np.tile(row, (n, 1))
        for k in range(n):
            x[k, atoms] = np.roll(row[atoms], k)
        out.append(("equal_q", Pool(space, x)))
        # Re-balancings of the same S: collisions on (S, q[S]) against the
        # equal-q pool, where hybrid rules switch formula.
        s = aggregate(Pool(space, x)).values
        out += [("family:equal_q", Pool(space, _split(rng, s, n))) for _ in range(2)]
    return out


def family(rng: np.random.Generator, space: ProbSpace, n: int, hi: int, size: int, label: str) -> list[tuple[str, Pool]]:
    base = _ints(rng, n, space.atom_count, hi)
    s = aggregate(Pool(space, base)).values
    members = [base] + [_split(rng, s, n) for _ in range(size)]
    first = np.zeros_like(base)
    first[0] = s
    members.append(first)
    if n > 1:
        last = np.zeros_like(base)
        last[-1] = s
        members.append(last)
    return [(f"family:{label}", Pool(space, x)) for x in members]


def make_battery(
    seed: int = 0,
    n_values=(2, 3, 4),
    random_per_n: int = 6,
    families_per_n: int = 2,
    family_size: int = 4,
    value_max: int = 100,
    weights=DEFAULT_WEIGHTS,
) -> Battery:
    """Deterministic battery for ``seed``; pools are grouped by ``n``."""
    space = ProbSpace(np.asarray(weights, dtype=float))
    rng = np.random.default_rng(seed)
    entries: list[tuple[str, Pool]] = []
    for n in n_values:
        entries += edge_pools(rng, space, n, value_max)
        for f in range(families_per_n):
            entries += family(rng, space, n, value_max, family_size, f"n{n}.{f}")
        entries += [("random", Pool(space, _ints(rng, n, space.atom_count, value_max))) for _ in range(random_per_n)]
    return Battery(
        space=space,
        pools=tuple(p for _, p in entries),
        tags=tuple(t for t, _ in entries),
        seed=seed,
        n_values=tuple(n_values),
        value_max=value_max,
        params={
            "random_per_n": random_per_n,
            "families_per_n": families_per_n,
            "family_size": family_size,
        },
    )


def battery_from_pool(pool: Pool, seed: int = 0, family_size: int = 4) -> Battery:
    """Battery around a user-supplied pool: the pool, its re-balancings and single-loaded versions.

    Re-balancings split ``S`` with random real fractions, so cross-pool
    aggregate values match up to rounding.
    """
    rng = np.random.default_rng(seed)
    s = aggregate(pool).values
    members = [("input", pool)]
    for _ in range(family_size):
        frac = rng.dirichlet(np.ones(pool.n), size=pool.m).T
        x = frac * s[None, :]
        x[-1] = np.maximum(s - x[:-1].sum(axis=0), 0.0)
        members.append(("family:input", Pool(pool.space, x)))
    first = np.zeros_like(pool.losses)
    first[0] = s
    members.append(("family:input", Pool(pool.space, first)))
    return Battery(
        space=pool.space,
        pools=tuple(p for _, p in members),
        tags=tuple(t for t, _ in members),
        seed=seed,
        n_values=(pool.n,),
        value_max=int(math.ceil(float(pool.losses.max()))) if pool.losses.size else 0,
        params={"family_size": family_size, "source": "input pool"},
    )


def permutations_for(n: int, seed: int = 0, max_exhaustive: int = 6, samples: int = 200) -> list[Permutation]:
    """All permutations for ``n <= max_exhaustive``; otherwise transpositions plus a seeded sample."""
    if n <= max_exhaustive:
        return [Permutation(p) for p in itertools.permutations(range(n))]
    rng = np.random.default_rng(seed)
    perms = {Permutation.identity(n)}
    for i in range(n - 1):
        m = list(range(n))
        m[i], m[i + 1] = m[i + 1], m[i]
        perms.add(Permutation(tuple(m)))
    while len(perms) < samples + n:
        perms.add(Permutation(tuple(int(k) for k in rng.permutation(n))))
    return sorted(perms, key=lambda p: p.mapping)
