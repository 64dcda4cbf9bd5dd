"""Risk-sharing rules as pure maps ``Pool -> ContributionMatrix``.

Every rule satisfies full allocation: per atom the contributions add up to
the aggregate loss. Rules whose formula divides by a pool-dependent quantity
carry a degenerate policy: ``"error"`` raises :class:`DegeneratePoolError`,
``"uniform"`` replaces every fraction by ``1/n``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Union

import numpy as np

from . import metrics as M
from .errors import DegeneratePoolError, RuleSpecError
from .metrics import BiMetric, RiskMetric, bimetric_rows, metric_rows
from .prob_core import ContributionMatrix, Pool, ProbSpace, aggregate, level_sets

KINDS = (
    "uniform",
    "q_proportional",
    "weighted_q_proportional",
    "q1q2_linear",
    "scenario_proportional",
    "scenario_linear",
    "covariance_linear",
    "variance_linear",
    "conditional_mean",
    "order_statistics",
    "all_in_one",
    "stand_alone",
    "hybrid",
    "linear_hybrid",
)
POLICIES = ("error", "uniform")

#: A denominator is treated as zero when it is this small relative to the sum
#: of the absolute values of its terms (exact cancellation included).
DENOMINATOR_RTOL = 1e-12
#: Relative spread under which metric values count as "all equal".
EQUAL_RTOL = 1e-12


@dataclass(frozen=True)
class RuleSpec:
    kind: str
    q: RiskMetric | None = None
    q2: BiMetric | None = None
    weights: tuple[float, ...] | None = None
    omegas: tuple[int, ...] = ()
    degenerate: str = "error"
    label: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise RuleSpecError(f"unknown rule kind {self.kind!r}")
        policy = {"uniform_fallback": "uniform"}.get(self.degenerate, self.degenerate)
        if policy not in POLICIES:
            raise RuleSpecError(f"degenerate policy must be one of {POLICIES}, got {self.degenerate!r}")
        object.__setattr__(self, "degenerate", policy)
        object.__setattr__(self, "omegas", tuple(int(k) for k in self.omegas))
        if self.weights is not None:
            w = tuple(float(x) for x in self.weights)
            if not w or any(not x > 0 for x in w):
                raise RuleSpecError("weights must be strictly positive")
            object.__setattr__(self, "weights", w)
        if any(k < 0 for k in self.omegas):
            raise RuleSpecError("scenario indices must be non-negative")

        needs_q = ("q_proportional", "weighted_q_proportional", "q1q2_linear", "hybrid", "linear_hybrid")
        if self.kind in needs_q and self.q is None:
            raise RuleSpecError(f"{self.kind} needs a risk metric q")
        if self.kind in ("q1q2_linear", "linear_hybrid") and self.q2 is None:
            raise RuleSpecError(f"{self.kind} needs a bi-metric q2")
        want = {"scenario_proportional": 1, "scenario_linear": 3}.get(self.kind)
        if want is not None and len(self.omegas) != want:
            raise RuleSpecError(f"{self.kind} needs {want} scenario index(es), got {len(self.omegas)}")

    @property
    def name(self) -> str:
        if self.label:
            return self.label
        k = self.kind
        if k in ("q_proportional", "hybrid"):
            return f"{k}[{self.q.name}]"
        if k == "weighted_q_proportional":
            w = "default" if self.weights is None else ",".join(f"{x:g}" for x in self.weights)
            return f"{k}[{self.q.name};w={w}]"
        if k in ("q1q2_linear", "linear_hybrid"):
            return f"{k}[{self.q.name};{self.q2.name}]"
        if k in ("scenario_proportional", "scenario_linear"):
            return f"{k}[{','.join(map(str, self.omegas))}]"
        return k

    def with_policy(self, policy: str) -> RuleSpec:
        return replace(self, degenerate=policy)

    def __call__(self, pool: Pool) -> ContributionMatrix:
        return apply(self, pool)


Rule = Union[RuleSpec, Callable[[Pool], ContributionMatrix]]


# -- constructors ----------------------------------------------------------

def uniform(**kw) -> RuleSpec:
    return RuleSpec("uniform", **kw)


def q_proportional(q: RiskMetric, **kw) -> RuleSpec:
    return RuleSpec("q_proportional", q=q, **kw)


def mean_proportional(**kw) -> RuleSpec:
    kw.setdefault("label", "mean_proportional")
    return RuleSpec("q_proportional", q=M.mean(), **kw)


def weighted_q_proportional(q: RiskMetric, weights=None, **kw) -> RuleSpec:
    return RuleSpec("weighted_q_proportional", q=q, weights=weights, **kw)


def q1q2_linear(q1: RiskMetric, q2: BiMetric, **kw) -> RuleSpec:
    return RuleSpec("q1q2_linear", q=q1, q2=q2, **kw)


def scenario_proportional(typical: int = 0, **kw) -> RuleSpec:
    return RuleSpec("scenario_proportional", omegas=(typical,), **kw)


def scenario_linear(typical: int = 0, high: int = 1, low: int = 2, **kw) -> RuleSpec:
    return RuleSpec("scenario_linear", omegas=(typical, high, low), **kw)


def covariance_linear(**kw) -> RuleSpec:
    return RuleSpec("covariance_linear", **kw)


def variance_linear(**kw) -> RuleSpec:
    return RuleSpec("variance_linear", **kw)


def conditional_mean(**kw) -> RuleSpec:
    return RuleSpec("conditional_mean", **kw)


def order_statistics(**kw) -> RuleSpec:
    return RuleSpec("order_statistics", **kw)


def all_in_one(**kw) -> RuleSpec:
    return RuleSpec("all_in_one", **kw)


def stand_alone(**kw) -> RuleSpec:
    return RuleSpec("stand_alone", **kw)


def hybrid(q: RiskMetric, **kw) -> RuleSpec:
    return RuleSpec("hybrid", q=q, **kw)


def linear_hybrid(q1: RiskMetric, q2: BiMetric, **kw) -> RuleSpec:
    return RuleSpec("linear_hybrid", q=q1, q2=q2, **kw)


# -- building blocks -------------------------------------------------------

def _uniform_split(s: np.ndarray, n: int) -> np.ndarray:
    return np.tile(s / n, (n, 1))


def _all_equal(v: np.ndarray) -> bool:
    return float(np.ptp(v)) <= EQUAL_RTOL * max(1.0, float(np.max(np.abs(v))))


def _degenerate(rule: RuleSpec, condition: str) -> None:
    if rule.degenerate == "error":
        raise DegeneratePoolError(rule.name, condition)


def _check_atoms(rule: RuleSpec, pool: Pool) -> None:
    for k in rule.omegas:
        if k >= pool.m:
            raise RuleSpecError(f"{rule.name}: scenario index {k} out of range for {pool.m} atoms")


def _proportional(rule: RuleSpec, pool: Pool, qs: np.ndarray, condition: str) -> np.ndarray:
    s = aggregate(pool).values
    total = math.fsum(qs)
    if total == 0.0:
        _degenerate(rule, condition)
        return _uniform_split(s, pool.n)
    if _all_equal(qs):
        # identical shares are exactly 1/n; keeps q-proportional == uniform bit-for-bit
        return _uniform_split(s, pool.n)
    return np.outer(qs / total, s)


def _linear(rule: RuleSpec, pool: Pool, q1s: np.ndarray, q2s: np.ndarray, condition: str) -> np.ndarray:
    s = aggregate(pool).values
    den = math.fsum(q2s)
    deviation = s - math.fsum(q1s)
    if abs(den) <= DENOMINATOR_RTOL * math.fsum(np.abs(q2s)):
        _degenerate(rule, condition)
        fractions = np.full(pool.n, 1.0 / pool.n)
    else:
        fractions = q2s / den
    return q1s[:, None] + np.outer(fractions, deviation)


def _order_statistics(pool: Pool) -> np.ndarray:
    return np.sort(pool.losses, axis=0, kind="stable")


def _conditional_mean(pool: Pool) -> np.ndarray:
    s = aggregate(pool).values
    w = pool.space.weights
    out = np.empty_like(pool.losses)
    for g in level_sets(s):
        if g.size == 1:  # keeps distinct-S pools bit-identical to stand-alone
            out[:, g] = pool.losses[:, g]
            continue
        wg = w[g]
        out[:, g] = ((pool.losses[:, g] @ wg) / wg.sum())[:, None]
    return out


def apply(rule: Rule, pool: Pool) -> ContributionMatrix:
    """Contributions of ``rule`` for ``pool``.

    Plain callables are accepted too and simply invoked, which lets the
    property checks run on ad-hoc rules.
    """
    if not isinstance(rule, RuleSpec):
        out = rule(pool)
        return out if isinstance(out, ContributionMatrix) else ContributionMatrix(np.asarray(out, float))

    _check_atoms(rule, pool)
    kind = rule.kind
    n = pool.n
    if kind == "uniform":
        c = _uniform_split(aggregate(pool).values, n)
    elif kind == "q_proportional":
        c = _proportional(rule, pool, metric_rows(rule.q, pool), f"{rule.q.name}[X_k]=0 for all k")
    elif kind == "weighted_q_proportional":
        w = np.arange(1.0, n + 1) if rule.weights is None else np.asarray(rule.weights)
        if w.size != n:
            raise RuleSpecError(f"{rule.name}: {w.size} weights for a pool of {n}")
        c = _proportional(rule, pool, w * metric_rows(rule.q, pool), f"w_k*{rule.q.name}[X_k]=0 for all k")
    elif kind == "scenario_proportional":
        q = M.scenario(rule.omegas[0])
        c = _proportional(rule, pool, metric_rows(q, pool), f"X_k(omega*={rule.omegas[0]})=0 for all k")
    elif kind == "q1q2_linear":
        c = _linear(
            rule, pool, metric_rows(rule.q, pool), bimetric_rows(rule.q2, pool),
            f"sum_k {rule.q2.name}[X_k,S]=0",
        )
    elif kind == "covariance_linear":
        c = _linear(rule, pool, metric_rows(M.mean(), pool), bimetric_rows(M.cov(), pool), "var(S)=0")
    elif kind == "variance_linear":
        c = _linear(
            rule, pool, metric_rows(M.mean(), pool), bimetric_rows(M.first_variance(), pool),
            "var(X_k)=0 for all k",
        )
    elif kind == "scenario_linear":
        c = _scenario_linear(rule, pool)
    elif kind == "conditional_mean":
        c = _conditional_mean(pool)
    elif kind == "order_statistics":
        c = _order_statistics(pool)
    elif kind == "all_in_one":
        c = np.zeros_like(pool.losses)
        c[0] = aggregate(pool).values
    elif kind == "stand_alone":
        c = pool.losses.copy()
    elif kind == "hybrid":
        qs = metric_rows(rule.q, pool)
        if _all_equal(qs):
            c = _order_statistics(pool)
        else:
            c = _proportional(rule, pool, qs, f"{rule.q.name}[X_k]=0 for all k")
    elif kind == "linear_hybrid":
        q1s, q2s = metric_rows(rule.q, pool), bimetric_rows(rule.q2, pool)
        if _all_equal(q1s) and _all_equal(q2s):
            c = _order_statistics(pool)
        else:
            c = _linear(rule, pool, q1s, q2s, f"sum_k {rule.q2.name}[X_k,S]=0")
    else:  # pragma: no cover - guarded by RuleSpec
        raise RuleSpecError(kind)
    return ContributionMatrix(c)


def _scenario_linear(rule: RuleSpec, pool: Pool) -> np.ndarray:
    typ, hi, lo = rule.omegas
    x = pool.losses
    s = aggregate(pool).values
    spread = x[:, hi] - x[:, lo]
    den = s[hi] - s[lo]
    if abs(den) <= DENOMINATOR_RTOL * math.fsum(np.abs(spread)):
        _degenerate(rule, f"S(omega_hi={hi})=S(omega_lo={lo})")
        fractions = np.full(pool.n, 1.0 / pool.n)
    else:
        fractions = spread / den
    return x[:, typ][:, None] + np.outer(fractions, s - s[typ])


def apply_hybrid_counterexample(q: RiskMetric, pool: Pool, degenerate: str = "error") -> ContributionMatrix:
    """Order statistics when all ``q[X_i]`` coincide, q-proportional otherwise."""
    return apply(hybrid(q, degenerate=degenerate), pool)


def expected_contributions(cm: ContributionMatrix, space: ProbSpace) -> np.ndarray:
    if cm.values.shape[1] != space.atom_count:
        raise ValueError("contribution matrix and space disagree on the atom count")
    return cm.values @ space.weights


def full_allocation_ok(cm: ContributionMatrix, pool: Pool, atol: float = 1e-9, rtol: float = 1e-12) -> bool:
    s = aggregate(pool).values
    return bool(np.all(np.abs(cm.values.sum(axis=0) - s) <= atol + rtol * np.abs(s)))


def catalog(q: RiskMetric | None = None, q2: BiMetric | None = None, degenerate: str = "uniform") -> list[RuleSpec]:
    """The paper's rules plus the counterexample rules used by the harness.

    ``q``/``q2`` only select which hybrid rules are appended.
    """
    kw = {"degenerate": degenerate}
    rules = [
        uniform(**kw),
        mean_proportional(**kw),
        q_proportional(M.variance_metric(), **kw),
        q_proportional(M.stddev(), **kw),
        weighted_q_proportional(M.mean(), **kw),
        scenario_proportional(0, **kw),
        scenario_linear(0, 1, 2, **kw),
        covariance_linear(**kw),
        variance_linear(**kw),
        conditional_mean(**kw),
        order_statistics(**kw),
        all_in_one(**kw),
        stand_alone(**kw),
    ]
    if q is not None:
        rules.append(hybrid(q, **kw))
        if q2 is not None:
            rules.append(linear_hybrid(q, q2, **kw))
    return rules
