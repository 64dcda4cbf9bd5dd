"""One- and two-dimensional risk metrics.

A :class:`RiskMetric` maps a loss to a non-negative number, a
:class:`BiMetric` maps an (individual loss, aggregate loss) pair to a real.
Both are small immutable descriptors (``kind`` + ``params``) evaluated via a
registry, so new kinds can be plugged in with :func:`register_metric` /
:func:`register_bimetric`. Declared attribute flags (normalized, additive)
are never trusted blindly: :func:`verify_attributes` audits them on a battery.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import MetricError, SpaceMismatchError
from .prob_core import (
    DEFAULT_TOL,
    Pool,
    RandomVariable,
    Tolerance,
    aggregate,
    covariance,
    expectation,
    variance,
)


@dataclass(frozen=True)
class _Entry:
    evaluator: Callable
    normalized: bool
    additive: bool
    arity: int  # number of parameters; -1 for "any"


_METRICS: dict[str, _Entry] = {}
_BIMETRICS: dict[str, _Entry] = {}

_ALIASES = {
    "const": "constant",
    "expectation": "mean",
    "var": "variance",
    "std": "stddev",
    "sd": "stddev",
    "scen": "scenario",
}
_BI_ALIASES = {
    "covariance": "cov",
    "var": "first_var",
    "first_variance": "first_var",
    "variance": "first_var",
    "scen_range": "scenario_range",
    "lift_of": "lift",
}


def register_metric(kind: str, evaluator: Callable, *, normalized: bool, additive: bool, arity: int = 0):
    """Register ``evaluator(rv, *params) -> float`` under ``kind``.

    Intended to be called at import/startup time only; the registry is read
    without locking afterwards.
    """
    _METRICS[kind] = _Entry(evaluator, normalized, additive, arity)


def register_bimetric(kind: str, evaluator: Callable, *, zero_at_zero: bool, additive: bool, arity: int = 0):
    _BIMETRICS[kind] = _Entry(evaluator, zero_at_zero, additive, arity)


@dataclass(frozen=True)
class RiskMetric:
    kind: str
    params: tuple = ()

    def __post_init__(self):
        kind = _ALIASES.get(self.kind, self.kind)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "params", tuple(self.params))
        entry = _METRICS.get(kind)
        if entry is None:
            raise MetricError(f"unknown risk metric {self.kind!r}")
        if entry.arity >= 0 and len(self.params) != entry.arity:
            raise MetricError(f"metric {kind!r} takes {entry.arity} parameter(s), got {len(self.params)}")
        if kind == "constant" and not self.params[0] > 0:
            raise MetricError("constant metric needs c > 0")
        if kind == "scenario" and (int(self.params[0]) != self.params[0] or self.params[0] < 0):
            raise MetricError(f"scenario index must be a non-negative integer, got {self.params[0]!r}")

    @property
    def normalized(self) -> bool:
        return _METRICS[self.kind].normalized

    @property
    def additive(self) -> bool:
        return _METRICS[self.kind].additive

    @property
    def name(self) -> str:
        if not self.params:
            return self.kind
        return self.kind + ":" + ",".join(_fmt_param(p) for p in self.params)

    def __call__(self, rv: RandomVariable) -> float:
        return eval_metric(self, rv)

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class BiMetric:
    kind: str
    params: tuple = ()

    def __post_init__(self):
        kind = _BI_ALIASES.get(self.kind, self.kind)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "params", tuple(self.params))
        entry = _BIMETRICS.get(kind)
        if entry is None:
            raise MetricError(f"unknown bi-metric {self.kind!r}")
        if entry.arity >= 0 and len(self.params) != entry.arity:
            raise MetricError(f"bi-metric {kind!r} takes {entry.arity} parameter(s), got {len(self.params)}")
        if kind == "lift" and not isinstance(self.params[0], RiskMetric):
            raise MetricError("lift needs a RiskMetric parameter")

    @property
    def zero_at_zero(self) -> bool:
        if self.kind == "lift":
            return self.params[0].normalized
        return _BIMETRICS[self.kind].normalized

    @property
    def additive(self) -> bool:
        """Additive in the first argument."""
        if self.kind == "lift":
            return self.params[0].additive
        return _BIMETRICS[self.kind].additive

    @property
    def name(self) -> str:
        if not self.params:
            return self.kind
        return self.kind + ":" + ",".join(_fmt_param(p) for p in self.params)

    def __call__(self, rv: RandomVariable, s: RandomVariable) -> float:
        return eval_bimetric(self, rv, s)

    def __str__(self):
        return self.name


def _fmt_param(p) -> str:
    if isinstance(p, RiskMetric):
        return p.name
    if isinstance(p, float) and p.is_integer():
        return str(int(p))
    return str(p)


def _check_atom(rv: RandomVariable, k) -> int:
    k = int(k)
    if not 0 <= k < rv.space.atom_count:
        raise MetricError(f"scenario index {k} out of range for {rv.space.atom_count} atoms")
    return k


def eval_metric(q: RiskMetric, rv: RandomVariable) -> float:
    value = float(_METRICS[q.kind].evaluator(rv, *q.params))
    if value < 0 or math.isnan(value):
        raise MetricError(f"metric {q.name} returned {value}, outside [0, inf)")
    return value


def eval_bimetric(q2: BiMetric, rv: RandomVariable, s: RandomVariable) -> float:
    if rv.space != s.space:
        raise SpaceMismatchError("bi-metric arguments live on different spaces")
    return float(_BIMETRICS[q2.kind].evaluator(rv, s, *q2.params))


def metric_rows(q: RiskMetric, pool: Pool) -> np.ndarray:
    """``q[X_i]`` for every participant."""
    return np.array([eval_metric(q, pool.row(i)) for i in range(pool.n)])


def bimetric_rows(q2: BiMetric, pool: Pool) -> np.ndarray:
    """``q2[X_i, S]`` for every participant."""
    s = aggregate(pool)
    return np.array([eval_bimetric(q2, pool.row(i), s) for i in range(pool.n)])


register_metric("constant", lambda rv, c: float(c), normalized=False, additive=False, arity=1)
register_metric("mean", expectation, normalized=True, additive=True)
register_metric("variance", variance, normalized=True, additive=False)
register_metric("stddev", lambda rv: math.sqrt(variance(rv)), normalized=True, additive=False)
register_metric("scenario", lambda rv, k: float(rv.values[_check_atom(rv, k)]), normalized=True, additive=True, arity=1)

register_bimetric("cov", covariance, zero_at_zero=True, additive=True)
register_bimetric("first_var", lambda rv, s: variance(rv), zero_at_zero=True, additive=False)


def _scenario_range(rv: RandomVariable, s: RandomVariable, hi, lo) -> float:
    hi, lo = _check_atom(rv, hi), _check_atom(rv, lo)
    return float((rv.values[hi] - rv.values[lo]) * (s.values[hi] - s.values[lo]))


register_bimetric("scenario_range", _scenario_range, zero_at_zero=True, additive=True, arity=2)
register_bimetric("lift", lambda rv, s, q: eval_metric(q, rv), zero_at_zero=True, additive=True, arity=1)


# -- constructors ----------------------------------------------------------

def constant(c: float = 1.0) -> RiskMetric:
    return RiskMetric("constant", (float(c),))


def mean() -> RiskMetric:
    return RiskMetric("mean")


def variance_metric() -> RiskMetric:
    return RiskMetric("variance")


def stddev() -> RiskMetric:
    return RiskMetric("stddev")


def scenario(atom: int) -> RiskMetric:
    return RiskMetric("scenario", (int(atom),))


def cov() -> BiMetric:
    return BiMetric("cov")


def first_variance() -> BiMetric:
    return BiMetric("first_var")


def scenario_range(hi: int, lo: int) -> BiMetric:
    return BiMetric("scenario_range", (int(hi), int(lo)))


def lift(q: RiskMetric) -> BiMetric:
    return BiMetric("lift", (q,))


def _parse_numbers(text: str, spec: str) -> tuple:
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        try:
            out.append(int(tok))
        except ValueError:
            try:
                out.append(float(tok))
            except ValueError:
                raise MetricError(f"bad parameter {tok!r} in metric spec {spec!r}") from None
    return tuple(out)


def parse_metric(spec: str) -> RiskMetric:
    """Parse CLI grammar such as ``"mean"``, ``"scenario:1"``, ``"constant:7"``."""
    spec = spec.strip()
    kind, _, rest = spec.partition(":")
    params = _parse_numbers(rest, spec) if rest else ()
    if kind.strip() in ("scenario", "scen"):
        params = tuple(int(p) for p in params)
    return RiskMetric(kind.strip(), params)


def parse_bimetric(spec: str) -> BiMetric:
    """Parse ``"cov"``, ``"first_var"``, ``"scenario_range:2,0"``, ``"lift:mean"``."""
    spec = spec.strip()
    kind, _, rest = spec.partition(":")
    kind = kind.strip()
    if _BI_ALIASES.get(kind, kind) == "lift":
        if not rest:
            raise MetricError("lift needs an inner metric, e.g. 'lift:mean'")
        return lift(parse_metric(rest))
    params = _parse_numbers(rest, spec) if rest else ()
    if _BI_ALIASES.get(kind, kind) == "scenario_range":
        params = tuple(int(p) for p in params)
    return BiMetric(kind, params)


# -- attribute audit -------------------------------------------------------

@dataclass
class AttributeReport:
    """Outcome of auditing a metric's declared flags on a battery.

    ``normalized`` stands for ``q[0] = 0`` (``q2[0, S] = 0`` for bi-metrics)
    and ``additive`` for additivity (in the first argument for bi-metrics).
    ``consistent`` is False when a *declared* flag fails on the battery.
    """

    metric: str
    declared_normalized: bool
    declared_additive: bool
    normalized: bool
    additive: bool
    witnesses: dict = field(default_factory=dict)

    @property
    def consistent(self) -> bool:
        return (self.normalized or not self.declared_normalized) and (
            self.additive or not self.declared_additive
        )

    def certifies(self, *, normalized: bool = False, additive: bool = False) -> bool:
        """True when the requested flags are both declared and verified."""
        ok = True
        if normalized:
            ok &= self.declared_normalized and self.normalized
        if additive:
            ok &= self.declared_additive and self.additive
        return ok

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "declared": {"normalized": self.declared_normalized, "additive": self.declared_additive},
            "verified": {"normalized": self.normalized, "additive": self.additive},
            "consistent": self.consistent,
            "witnesses": self.witnesses,
        }


def _summands(pool: Pool):
    """Yield (label, parts, total) pairs to test additivity on."""
    rows = pool.rows()
    yield "all", rows, aggregate(pool)
    for i in range(pool.n):
        for j in range(i + 1, pool.n):
            yield f"{i}+{j}", [rows[i], rows[j]], rows[i] + rows[j]
        yield f"{i}+{i}", [rows[i], rows[i]], rows[i] + rows[i]


def verify_attributes(
    q: RiskMetric | BiMetric, battery: Sequence[Pool], tol: Tolerance = DEFAULT_TOL
) -> AttributeReport:
    if not battery:
        raise ValueError("verify_attributes needs a non-empty battery")
    is_bi = isinstance(q, BiMetric)
    declared_norm = q.zero_at_zero if is_bi else q.normalized
    witnesses: dict = {}
    normalized = additive = True

    for idx, pool in enumerate(battery):
        zero = RandomVariable.constant(pool.space, 0.0)
        s = aggregate(pool)
        z = eval_bimetric(q, zero, s) if is_bi else eval_metric(q, zero)
        if normalized and not tol.close(z, 0.0):
            normalized = False
            witnesses["normalized"] = {"pool_index": idx, "value_at_zero": z}

        if not additive:
            continue
        for label, parts, total in _summands(pool):
            if is_bi:
                lhs = eval_bimetric(q, total, s)
                rhs = sum(eval_bimetric(q, x, s) for x in parts)
            else:
                lhs = eval_metric(q, total)
                rhs = sum(eval_metric(q, x) for x in parts)
            if not tol.close(lhs, rhs):
                additive = False
                witnesses["additive"] = {
                    "pool_index": idx,
                    "losses": pool.losses.tolist(),
                    "weights": pool.space.weights.tolist(),
                    "summands": label,
                    "metric_of_sum": lhs,
                    "sum_of_metrics": rhs,
                }
                break

    return AttributeReport(q.name, declared_norm, q.additive, normalized, additive, witnesses)
