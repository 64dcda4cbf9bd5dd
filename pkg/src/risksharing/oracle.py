"""Brute-force reference implementations.

Nothing here calls into :mod:`risksharing.rules` or :mod:`risksharing.metrics`:
moments are plain Python sums over atoms, grouping is a pairwise scan, and
each rule is a direct transcription of its formula. They are slow on
purpose; use them on desk-scale pools only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegeneratePoolError
from .prob_core import ContributionMatrix, Pool

#: Two aggregate values are in the same group when within this relative gap.
SAME_S_RTOL = 1e-9


def _mean(p, x) -> float:
    return sum(pk * xk for pk, xk in zip(p, x))


def _cov(p, x, y) -> float:
    mx, my = _mean(p, x), _mean(p, y)
    return sum(pk * (xk - mx) * (yk - my) for pk, xk, yk in zip(p, x, y))


def _columns_sum(rows) -> list[float]:
    return [sum(col) for col in zip(*rows)]


def _unpack(pool: Pool):
    p = [float(v) for v in pool.space.weights]
    rows = [[float(v) for v in row] for row in pool.losses]
    return p, rows, _columns_sum(rows)


def _matrix(rows) -> ContributionMatrix:
    return ContributionMatrix(np.array(rows, dtype=float))


def oracle_conditional_mean(pool: Pool) -> ContributionMatrix:
    """``E[X_i | S]`` via an explicit double loop over atoms (no sorting)."""
    p, rows, s = _unpack(pool)
    m = len(p)
    out = [[0.0] * m for _ in rows]
    for a in range(m):
        group = [b for b in range(m) if abs(s[a] - s[b]) <= SAME_S_RTOL * max(1.0, abs(s[a]), abs(s[b]))]
        mass = sum(p[b] for b in group)
        for i, row in enumerate(rows):
            out[i][a] = sum(p[b] * row[b] for b in group) / mass
    return _matrix(out)


def oracle_uniform(pool: Pool) -> ContributionMatrix:
    _, rows, s = _unpack(pool)
    n = len(rows)
    return _matrix([[sk / n for sk in s] for _ in rows])


def oracle_mean_proportional(pool: Pool) -> ContributionMatrix:
    p, rows, s = _unpack(pool)
    means = [_mean(p, row) for row in rows]
    total = _mean(p, s)
    if total == 0:
        raise DegeneratePoolError("oracle mean_proportional", "E[S]=0")
    return _matrix([[mi / total * sk for sk in s] for mi in means])


def oracle_covariance_linear(pool: Pool) -> ContributionMatrix:
    """``E[X_i] + cov(X_i, S) / var(S) * (S - E[S])``."""
    p, rows, s = _unpack(pool)
    var_s = _cov(p, s, s)
    if var_s <= 1e-12 * max(1.0, _mean(p, [v * v for v in s])):
        raise DegeneratePoolError("oracle covariance_linear", "var(S)=0")
    es = _mean(p, s)
    return _matrix([
        [_mean(p, row) + _cov(p, row, s) / var_s * (sk - es) for sk in s] for row in rows
    ])


def oracle_variance_linear(pool: Pool) -> ContributionMatrix:
    """``E[X_i] + var(X_i) / sum_k var(X_k) * (S - E[S])``."""
    p, rows, s = _unpack(pool)
    variances = [_cov(p, row, row) for row in rows]
    total = sum(variances)
    if total <= 0:
        raise DegeneratePoolError("oracle variance_linear", "var(X_k)=0 for all k")
    es = _mean(p, s)
    return _matrix([
        [_mean(p, row) + v / total * (sk - es) for sk in s] for row, v in zip(rows, variances)
    ])


def oracle_order_statistics(pool: Pool) -> ContributionMatrix:
    _, rows, _ = _unpack(pool)
    cols = [sorted(col) for col in zip(*rows)]
    return _matrix([list(r) for r in zip(*cols)])


def oracle_scenario_linear(pool: Pool, typical: int, high: int, low: int) -> ContributionMatrix:
    """``X_i(w*) + (X_i(w_hi) - X_i(w_lo)) / (S(w_hi) - S(w_lo)) * (S - S(w*))``."""
    _, rows, s = _unpack(pool)
    den = s[high] - s[low]
    if den == 0:
        raise DegeneratePoolError("oracle scenario_linear", "S(w_hi)=S(w_lo)")
    return _matrix([
        [row[typical] + (row[high] - row[low]) / den * (sk - s[typical]) for sk in s] for row in rows
    ])


@dataclass(frozen=True)
class EquivalenceReport:
    a: str
    b: str
    max_deviation: float
    compared: int
    skipped: int

    def within(self, tol: float) -> bool:
        return self.compared > 0 and self.max_deviation <= tol

    def to_dict(self) -> dict:
        return {
            "a": self.a,
            "b": self.b,
            "max_deviation": self.max_deviation,
            "compared": self.compared,
            "skipped": self.skipped,
        }


def oracle_rule_equivalence(a, b, pools) -> EquivalenceReport:
    """Largest entrywise gap between two rules (any callables ``Pool -> matrix``).

    Pools on which either rule reports a degenerate pool are skipped and
    counted.
    """
    worst, compared, skipped = 0.0, 0, 0
    for pool in pools:
        try:
            ca, cb = _values(a(pool)), _values(b(pool))
        except DegeneratePoolError:
            skipped += 1
            continue
        compared += 1
        worst = max(worst, float(np.max(np.abs(ca - cb))))
    return EquivalenceReport(_label(a), _label(b), worst, compared, skipped)


def _values(out) -> np.ndarray:
    return np.asarray(getattr(out, "values", out), dtype=float)


def _label(rule) -> str:
    return getattr(rule, "name", None) or getattr(rule, "__name__", repr(rule))
