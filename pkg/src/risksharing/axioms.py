"""Executable risk-sharing properties.

Every check compares a left-hand side with a right-hand side slot by slot
(participant x atom, per permutation or per pair of pools) and reports the
first slot where they differ beyond tolerance. Verdicts are always relative
to the pools and permutations supplied: ``holds_on_battery`` means "no
violation found", never "proved".

The sides are produced by a single function per property, shared between the
checks and :func:`replay_witness`, so a stored witness reproduces the same
floating-point numbers when replayed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .battery import Battery, permutations_for
from .errors import DegeneratePoolError
from .metrics import (
    AttributeReport,
    BiMetric,
    RiskMetric,
    bimetric_rows,
    eval_bimetric,
    eval_metric,
    metric_rows,
    verify_attributes,
)
from .prob_core import (
    DEFAULT_TOL,
    ContributionMatrix,
    Permutation,
    Pool,
    Tolerance,
    aggregate,
    level_labels,
    reshuffle,
)
from .rules import Rule, RuleSpec, apply


class Verdict(str, Enum):
    HOLDS = "holds_on_battery"
    VIOLATED = "violated"
    INCONCLUSIVE = "inconclusive"
    SKIPPED = "skipped"
    REFUSED = "refused"

    def __str__(self):
        return self.value


PERM_PROPERTIES = ("reshuffling", "source_anonymous", "source_anonymous_q_ratio", "source_anonymous_std")
CROSS_POOL_PROPERTIES = ("strongly_aggregate", "strongly_aggregate_q_ratio", "strongly_aggregate_std")
PROPERTY_NAMES = ("full_allocation", "aggregate") + PERM_PROPERTIES + CROSS_POOL_PROPERTIES
AXIOM_NUMBERS = {
    "reshuffling": 1,
    "source_anonymous": 2,
    "strongly_aggregate": 3,
    "source_anonymous_q_ratio": 4,
    "strongly_aggregate_q_ratio": 5,
    "source_anonymous_std": 6,
    "strongly_aggregate_std": 7,
}


@dataclass(frozen=True)
class PropertyKind:
    name: str
    q: RiskMetric | None = None
    q2: BiMetric | None = None

    def __post_init__(self):
        if self.name not in PROPERTY_NAMES:
            raise ValueError(f"unknown property {self.name!r}")
        if self.name.endswith("q_ratio") and self.q is None:
            raise ValueError(f"{self.name} needs a risk metric q")
        if self.name.endswith("_std") and (self.q is None or self.q2 is None):
            raise ValueError(f"{self.name} needs q1 and q2")

    @property
    def label(self) -> str:
        if self.name.endswith("_std"):
            return f"{self.name}[{self.q.name};{self.q2.name}]"
        if self.q is not None:
            return f"{self.name}[{self.q.name}]"
        return self.name

    @property
    def axiom(self) -> int | None:
        return AXIOM_NUMBERS.get(self.name)

    def __str__(self):
        return self.label


FULL_ALLOCATION = PropertyKind("full_allocation")
RESHUFFLING = PropertyKind("reshuffling")
SOURCE_ANONYMOUS = PropertyKind("source_anonymous")
AGGREGATE = PropertyKind("aggregate")
STRONGLY_AGGREGATE = PropertyKind("strongly_aggregate")


def source_anonymous_q_ratio(q: RiskMetric) -> PropertyKind:
    return PropertyKind("source_anonymous_q_ratio", q)


def strongly_aggregate_q_ratio(q: RiskMetric) -> PropertyKind:
    return PropertyKind("strongly_aggregate_q_ratio", q)


def source_anonymous_std(q1: RiskMetric, q2: BiMetric) -> PropertyKind:
    return PropertyKind("source_anonymous_std", q1, q2)


def strongly_aggregate_std(q1: RiskMetric, q2: BiMetric) -> PropertyKind:
    return PropertyKind("strongly_aggregate_std", q1, q2)


@dataclass(frozen=True)
class Witness:
    """Where a property failed. ``atoms`` has one entry per pool in ``pools``."""

    pools: tuple[Pool, ...]
    atoms: tuple[int, ...]
    participant: int | None
    lhs: float
    rhs: float
    tolerance: float
    perm: Permutation | None = None
    pool_indices: tuple = ()
    detail: str = ""

    def sort_key(self):
        idx = tuple(-1 if k is None else k for k in self.pool_indices)
        perm = self.perm.mapping if self.perm is not None else ()
        return (idx, perm, self.atoms, -1 if self.participant is None else self.participant, self.detail)

    def to_dict(self) -> dict:
        return {
            "pools": [
                {"losses": p.losses.tolist(), "weights": p.space.weights.tolist()} for p in self.pools
            ],
            "pool_indices": list(self.pool_indices),
            "perm": list(self.perm.mapping) if self.perm is not None else None,
            "atoms": list(self.atoms),
            "participant": self.participant,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "tolerance": self.tolerance,
            "detail": self.detail,
        }


@dataclass
class PropertyReport:
    rule: str
    property: str
    verdict: Verdict
    witness: Witness | None = None
    reason: str | None = None
    pools_checked: int = 0
    pools_skipped: int = 0
    kind: PropertyKind | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.verdict is Verdict.VIOLATED and self.witness is None:
            raise ValueError("a violated verdict needs a witness")

    @property
    def holds(self) -> bool:
        return self.verdict is Verdict.HOLDS

    @property
    def violated(self) -> bool:
        return self.verdict is Verdict.VIOLATED

    def to_dict(self) -> dict:
        return {
            "rule": self.rule,
            "property": self.property,
            "verdict": self.verdict.value,
            "reason": self.reason,
            "pools_checked": self.pools_checked,
            "pools_skipped": self.pools_skipped,
            "witness": self.witness.to_dict() if self.witness is not None else None,
        }


def rule_name(rule: Rule) -> str:
    if isinstance(rule, RuleSpec):
        return rule.name
    return getattr(rule, "__name__", repr(rule))


class Contributions:
    """Memoizes ``apply(rule, pool)`` for one rule within one run.

    Keys are caller-chosen (battery index plus permutation); a fresh instance
    per run keeps everything free of shared state.
    """

    def __init__(self, rule: Rule):
        self.rule = rule
        self._memo: dict = {}

    def get(self, pool: Pool, key=None) -> np.ndarray:
        if key is None:
            return apply(self.rule, pool).values
        if key not in self._memo:
            try:
                self._memo[key] = apply(self.rule, pool).values
            except DegeneratePoolError as exc:
                self._memo[key] = exc
        hit = self._memo[key]
        if isinstance(hit, DegeneratePoolError):
            raise hit
        return hit


def _report(rule, kind, verdict, witness=None, reason=None, checked=0, skipped=0) -> PropertyReport:
    return PropertyReport(rule_name(rule), kind.label, verdict, witness, reason, checked, skipped, kind)


def _first_violation(lhs: np.ndarray, rhs: np.ndarray, mask: np.ndarray, tol: Tolerance):
    bad = ~tol.close(lhs, rhs) & mask
    if not bad.any():
        return None
    i, j = np.argwhere(bad)[0]
    return int(i), int(j)


# -- full allocation -------------------------------------------------------

def _allocation_sides(c: np.ndarray, pool: Pool):
    lhs = np.array([math.fsum(col) for col in c.T])
    return lhs, aggregate(pool).values


def check_full_allocation(rule: Rule, pool: Pool, tol: Tolerance = DEFAULT_TOL, *, pool_index=None, _cache=None) -> PropertyReport:
    kind = FULL_ALLOCATION
    try:
        c = (_cache or Contributions(rule)).get(pool, None if _cache is None else (pool_index, None))
    except DegeneratePoolError as exc:
        return _report(rule, kind, Verdict.SKIPPED, reason=exc.condition, skipped=1)
    lhs, rhs = _allocation_sides(c, pool)
    bound = tol.atol + tol.rtol * np.abs(rhs)
    bad = np.flatnonzero(np.abs(lhs - rhs) > bound)
    if bad.size:
        j = int(bad[0])
        w = Witness((pool,), (j,), None, float(lhs[j]), float(rhs[j]), float(bound[j]), pool_indices=(pool_index,),
                    detail="sum_i C_i vs S")
        return _report(rule, kind, Verdict.VIOLATED, w, checked=1)
    return _report(rule, kind, Verdict.HOLDS, checked=1)


# -- permutation properties ------------------------------------------------

def _perm_sides(kind: PropertyKind, c: np.ndarray, cp: np.ndarray, pool: Pool, perm: Permutation, tol: Tolerance):
    """(lhs, rhs, mask) for permutation-based properties; mask is n x 1 or n x m."""
    idx = list(perm.mapping)
    n = pool.n
    if kind.name == "reshuffling":
        return cp, c[idx], np.ones((n, 1), bool)
    if kind.name == "source_anonymous":
        return cp, c, np.ones((n, 1), bool)
    if kind.name == "source_anonymous_q_ratio":
        qs = metric_rows(kind.q, pool)
        pos = qs > 0
        factor = np.where(pos, qs[idx] / np.where(pos, qs, 1.0), 0.0)
        return cp, factor[:, None] * c, pos[:, None]
    if kind.name == "source_anonymous_std":
        q1s = metric_rows(kind.q, pool)
        q2s = bimetric_rows(kind.q2, pool)
        nz = np.abs(q2s) > tol.atol
        factor = np.where(nz, q2s[idx] / np.where(nz, q2s, 1.0), 0.0)
        lhs = cp - q1s[idx][:, None]
        rhs = factor[:, None] * (c - q1s[:, None])
        return lhs, rhs, nz[:, None]
    raise ValueError(kind.name)


def _check_perm_property(kind, rule, pool, perms, tol, pool_index=None, cache=None) -> PropertyReport:
    cache = cache or Contributions(rule)
    perms = permutations_for(pool.n) if perms is None else list(perms)
    if not perms:
        raise ValueError("need at least one permutation")
    try:
        c = cache.get(pool, (pool_index, None) if pool_index is not None else None)
    except DegeneratePoolError as exc:
        return _report(rule, kind, Verdict.SKIPPED, reason=exc.condition, skipped=1)
    for perm in perms:
        shuffled = reshuffle(pool, perm)
        try:
            cp = cache.get(shuffled, (pool_index, perm.mapping) if pool_index is not None else None)
        except DegeneratePoolError as exc:
            return _report(rule, kind, Verdict.SKIPPED, reason=exc.condition, skipped=1)
        lhs, rhs, mask = _perm_sides(kind, c, cp, pool, perm, tol)
        hit = _first_violation(lhs, rhs, np.broadcast_to(mask, lhs.shape), tol)
        if hit is not None:
            i, j = hit
            w = Witness((pool,), (j,), i, float(lhs[i, j]), float(rhs[i, j]),
                        tol.bound(lhs[i, j], rhs[i, j]), perm, (pool_index,))
            return _report(rule, kind, Verdict.VIOLATED, w, checked=1)
    return _report(rule, kind, Verdict.HOLDS, checked=1)


def check_reshuffling(rule: Rule, pool: Pool, perms: Sequence[Permutation] | None = None,
                      tol: Tolerance = DEFAULT_TOL, **kw) -> PropertyReport:
    """``C_i[X^pi] == C_{pi(i)}[X]`` for all ``i``, ``pi`` and atoms."""
    return _check_perm_property(RESHUFFLING, rule, pool, perms, tol, **kw)


def check_source_anonymous(rule: Rule, pool: Pool, perms: Sequence[Permutation] | None = None,
                           tol: Tolerance = DEFAULT_TOL, **kw) -> PropertyReport:
    """``C_i[X^pi] == C_i[X]``."""
    return _check_perm_property(SOURCE_ANONYMOUS, rule, pool, perms, tol, **kw)


def check_source_anonymous_q_ratio(rule: Rule, q: RiskMetric, pool: Pool, perms=None,
                                   tol: Tolerance = DEFAULT_TOL, **kw) -> PropertyReport:
    """``C_i[X^pi] == q[X_pi(i)] / q[X_i] * C_i[X]`` wherever ``q[X_i] > 0``."""
    return _check_perm_property(source_anonymous_q_ratio(q), rule, pool, perms, tol, **kw)


def check_source_anonymous_std(rule: Rule, q1: RiskMetric, q2: BiMetric, pool: Pool, perms=None,
                               tol: Tolerance = DEFAULT_TOL, **kw) -> PropertyReport:
    """``C_i[X^pi] - q1[X_pi(i)] == q2[X_pi(i),S]/q2[X_i,S] * (C_i[X] - q1[X_i])`` wherever ``q2[X_i,S] != 0``.

    ``q2[X_i, S] != 0`` is read as ``|q2| > tol.atol``.
    """
    return _check_perm_property(source_anonymous_std(q1, q2), rule, pool, perms, tol, **kw)


# -- level-set properties --------------------------------------------------

@dataclass
class _Slots:
    """Per-pool quantities compared across aggregate level sets."""

    values: np.ndarray  # n x m standardized contributions
    valid: np.ndarray  # n, participants entering the comparison
    keys: np.ndarray  # m x d, grouping key per atom
    zero_lhs: np.ndarray | None = None  # n x m, must equal zero_rhs where ~valid
    zero_rhs: np.ndarray | None = None
    excluded: str | None = None


def _slot_sides(kind: PropertyKind, c: np.ndarray, pool: Pool, tol: Tolerance) -> _Slots:
    s = aggregate(pool)
    n = pool.n
    if kind.name in ("aggregate", "strongly_aggregate"):
        return _Slots(c, np.ones(n, bool), s.values[:, None])
    if kind.name == "strongly_aggregate_q_ratio":
        qs = metric_rows(kind.q, pool)
        pos = qs > 0
        if not pos.any():
            return _Slots(c, pos, s.values[:, None], excluded=f"{kind.q.name}[X_k]=0 for all k")
        ratio = c / np.where(pos, qs, 1.0)[:, None]
        keys = np.column_stack([s.values, np.full(pool.m, eval_metric(kind.q, s))])
        return _Slots(ratio, pos, keys, c, np.zeros_like(c))
    if kind.name == "strongly_aggregate_std":
        q1s = metric_rows(kind.q, pool)
        q2s = bimetric_rows(kind.q2, pool)
        nz = np.abs(q2s) > tol.atol
        if not nz.any():
            return _Slots(c, nz, s.values[:, None], excluded=f"{kind.q2.name}[X_k,S]=0 for all k")
        std = (c - q1s[:, None]) / np.where(nz, q2s, 1.0)[:, None]
        keys = np.column_stack([
            s.values,
            np.full(pool.m, eval_metric(kind.q, s)),
            np.full(pool.m, eval_bimetric(kind.q2, s, s)),
        ])
        return _Slots(std, nz, keys, c, np.repeat(q1s[:, None], pool.m, axis=1))
    raise ValueError(kind.name)


def _cluster(keys: np.ndarray) -> np.ndarray:
    """Labels grouping rows of ``keys`` whose columns all match level-set-wise."""
    labels = np.zeros(len(keys), dtype=int)
    for d in range(keys.shape[1]):
        new = np.empty_like(labels)
        nxt = 0
        for lab in np.unique(labels):
            members = np.flatnonzero(labels == lab)
            sub = level_labels(keys[members, d])
            new[members] = sub + nxt
            nxt += sub.max() + 1
        labels = new
    return labels


def _check_level_sets(kind, rule, pools, tol, pool_indices=None, cache=None, audit_reason=None) -> PropertyReport:
    """Shared engine for aggregate and the three strongly-aggregate flavours.

    Slots are (pool, atom) pairs; slots are grouped by key (``S`` value plus
    the metric values of ``S``), and within a group every participant's
    value must agree with the group's first valid slot.
    """
    cache = cache or Contributions(rule)
    pool_indices = list(range(len(pools))) if pool_indices is None else list(pool_indices)
    if audit_reason:
        return _report(rule, kind, Verdict.REFUSED, reason=audit_reason)
    sides: list[tuple[int, Pool, _Slots]] = []
    skipped = 0
    reasons = []
    for pos, (pool, idx) in enumerate(zip(pools, pool_indices)):
        try:
            c = cache.get(pool, (idx, None) if cache is not None and idx is not None else None)
        except DegeneratePoolError as exc:
            skipped += 1
            reasons.append(exc.condition)
            continue
        sl = _slot_sides(kind, c, pool, tol)
        if sl.excluded:
            skipped += 1
            reasons.append(sl.excluded)
            continue
        if sl.zero_lhs is not None:
            mask = np.broadcast_to(~sl.valid[:, None], c.shape)
            hit = _first_violation(sl.zero_lhs, sl.zero_rhs, mask, tol)
            if hit is not None:
                i, j = hit
                lhs, rhs = float(sl.zero_lhs[i, j]), float(sl.zero_rhs[i, j])
                w = Witness((pool,), (j,), i, lhs, rhs, tol.bound(lhs, rhs), pool_indices=(idx,),
                            detail="metric of X_i vanishes but contribution does not match")
                return _report(rule, kind, Verdict.VIOLATED, w, checked=len(sides) + 1, skipped=skipped)
        sides.append((idx, pool, sl))

    if not sides:
        reason = "; ".join(sorted(set(reasons))) or "no pools"
        return _report(rule, kind, Verdict.SKIPPED, reason=reason, skipped=skipped)

    slot_pool = np.concatenate([[k] * pool.m for k, (_, pool, _) in enumerate(sides)])
    slot_atom = np.concatenate([np.arange(pool.m) for _, pool, _ in sides])
    keys = np.vstack([sl.keys for _, _, sl in sides])
    labels = _cluster(keys)

    collision = False
    for lab in range(labels.max() + 1):
        members = np.flatnonzero(labels == lab)
        if len(set(slot_pool[members])) > 1:
            collision = True
        if len(members) < 2:
            continue
        n = sides[slot_pool[members[0]]][1].n
        for i in range(n):
            ref = None
            for sidx in members:
                k, j = slot_pool[sidx], slot_atom[sidx]
                idx, pool, sl = sides[k]
                if not sl.valid[i]:
                    continue
                if ref is None:
                    ref = (k, j)
                    continue
                rk, rj = ref
                a = sides[rk][2].values[i, rj]
                b = sl.values[i, j]
                if not tol.close(a, b):
                    w = Witness(
                        (sides[rk][1], pool), (int(rj), int(j)), i, float(a), float(b), tol.bound(a, b),
                        pool_indices=(sides[rk][0], idx),
                    )
                    return _report(rule, kind, Verdict.VIOLATED, w, checked=len(sides), skipped=skipped)

    if kind.name != "aggregate" and not collision:
        return _report(rule, kind, Verdict.INCONCLUSIVE, reason="no cross-pool collision of the grouping key",
                       checked=len(sides), skipped=skipped)
    return _report(rule, kind, Verdict.HOLDS, checked=len(sides), skipped=skipped)


def check_aggregate(rule: Rule, pool: Pool, tol: Tolerance = DEFAULT_TOL, *, pool_index=None, _cache=None) -> PropertyReport:
    """Contributions constant on every level set of ``S``."""
    idx = [pool_index] if pool_index is not None else None
    return _check_level_sets(AGGREGATE, rule, [pool], tol, idx, _cache)


def check_strongly_aggregate(rule: Rule, pools: Sequence[Pool], tol: Tolerance = DEFAULT_TOL, *,
                             pool_indices=None, _cache=None) -> PropertyReport:
    """One map ``S -> C`` shared by all pools: equal ``S`` values force equal contributions."""
    _same_n(pools)
    return _check_level_sets(STRONGLY_AGGREGATE, rule, pools, tol, pool_indices, _cache)


def _refusal(q, pools, audit, normalized: bool, additive: bool, tol) -> str | None:
    report = audit if audit is not None else verify_attributes(q, pools, tol)
    if report.certifies(normalized=normalized, additive=additive):
        return None
    what = "zero at zero" if isinstance(q, BiMetric) else "normalized"
    return f"{q.name} is not certified {what} and additive on this battery"


def check_strongly_aggregate_q_ratio(rule: Rule, q: RiskMetric, pools: Sequence[Pool], tol: Tolerance = DEFAULT_TOL,
                                     *, audit: AttributeReport | None = None, require_audit: bool = True,
                                     pool_indices=None, _cache=None) -> PropertyReport:
    """``C_i / q[X_i]`` is a function of ``(S, q[S])`` shared by all pools.

    Participants with ``q[X_i] = 0`` must contribute zero. ``q`` has to be
    declared and verified normalized and additive, otherwise the check is
    refused (``require_audit=False`` runs it anyway).
    """
    _same_n(pools)
    reason = _refusal(q, pools, audit, True, True, tol) if require_audit else None
    return _check_level_sets(strongly_aggregate_q_ratio(q), rule, pools, tol, pool_indices, _cache, reason)


def check_strongly_aggregate_std(rule: Rule, q1: RiskMetric, q2: BiMetric, pools: Sequence[Pool],
                                 tol: Tolerance = DEFAULT_TOL, *, audit: tuple | None = None,
                                 require_audit: bool = True, pool_indices=None, _cache=None) -> PropertyReport:
    """``(C_i - q1[X_i]) / q2[X_i, S]`` is a function of ``(S, q1[S], q2[S, S])`` shared by all pools.

    Where ``q2[X_i, S] = 0`` the contribution must equal ``q1[X_i]``.
    """
    _same_n(pools)
    reason = None
    if require_audit:
        a1, a2 = audit if audit is not None else (None, None)
        reason = _refusal(q1, pools, a1, True, True, tol) or _refusal(q2, pools, a2, True, True, tol)
    return _check_level_sets(strongly_aggregate_std(q1, q2), rule, pools, tol, pool_indices, _cache, reason)


def _same_n(pools):
    if len({p.n for p in pools}) > 1:
        raise ValueError("strongly-aggregate checks need pools with a common number of participants")
    if len({p.space for p in pools}) > 1:
        raise ValueError("strongly-aggregate checks need pools on a shared probability space")


# -- battery runner --------------------------------------------------------

def merge_reports(reports: Iterable[PropertyReport]) -> PropertyReport:
    """Combine per-pool reports; associative and independent of input order."""
    reports = list(reports)
    if not reports:
        raise ValueError("nothing to merge")
    first = reports[0]
    checked = sum(r.pools_checked for r in reports)
    skipped = sum(r.pools_skipped for r in reports)
    violated = [r for r in reports if r.violated]
    if violated:
        best = min(violated, key=lambda r: r.witness.sort_key())
        return PropertyReport(first.rule, first.property, Verdict.VIOLATED, best.witness, None, checked, skipped, first.kind)
    for verdict in (Verdict.HOLDS, Verdict.INCONCLUSIVE, Verdict.REFUSED, Verdict.SKIPPED):
        hits = [r for r in reports if r.verdict is verdict]
        if hits:
            reasons = sorted({r.reason for r in reports if r.reason and r.verdict is not Verdict.HOLDS})
            reason = "; ".join(reasons) if verdict is not Verdict.HOLDS else None
            return PropertyReport(first.rule, first.property, verdict, None, reason, checked, skipped, first.kind)
    raise AssertionError("unreachable")


def check_property(rule: Rule, kind: PropertyKind, battery: Battery | Sequence[Pool], perms=None,
                   tol: Tolerance = DEFAULT_TOL, cache: Contributions | None = None, audits: dict | None = None) -> PropertyReport:
    """Run one property over a whole battery.

    ``perms`` may be ``None`` (exhaustive up to n = 6), a list (used for
    every pool size it fits) or a dict ``n -> list``. ``audits`` maps metric
    names to precomputed :class:`AttributeReport` objects.
    """
    pools = list(battery.pools if isinstance(battery, Battery) else battery)
    cache = cache if cache is not None and cache.rule == rule else Contributions(rule)
    audits = audits or {}

    if kind.name in CROSS_POOL_PROPERTIES:
        groups: dict[int, list[int]] = {}
        for idx, pool in enumerate(pools):
            groups.setdefault(pool.n, []).append(idx)
        reports = []
        for n in sorted(groups):
            sub = [pools[i] for i in groups[n]]
            kw = {"pool_indices": groups[n], "_cache": cache}
            if kind.name == "strongly_aggregate":
                reports.append(check_strongly_aggregate(rule, sub, tol, **kw))
            elif kind.name == "strongly_aggregate_q_ratio":
                reports.append(check_strongly_aggregate_q_ratio(rule, kind.q, sub, tol, audit=audits.get(kind.q.name), **kw))
            else:
                a = (audits.get(kind.q.name), audits.get(kind.q2.name))
                reports.append(check_strongly_aggregate_std(
                    rule, kind.q, kind.q2, sub, tol, audit=a if a != (None, None) else None, **kw))
        if any(r.verdict is Verdict.REFUSED for r in reports):
            return next(r for r in reports if r.verdict is Verdict.REFUSED)
        return merge_reports(reports)

    reports = []
    for idx, pool in enumerate(pools):
        if kind.name == "full_allocation":
            reports.append(check_full_allocation(rule, pool, tol, pool_index=idx, _cache=cache))
        elif kind.name == "aggregate":
            reports.append(check_aggregate(rule, pool, tol, pool_index=idx, _cache=cache))
        else:
            reports.append(_check_perm_property(kind, rule, pool, _perms_for(perms, pool.n), tol, idx, cache))
    return merge_reports(reports)


def _perms_for(perms, n: int):
    if perms is None:
        return permutations_for(n)
    if isinstance(perms, dict):
        return perms.get(n) or permutations_for(n)
    fitting = [p for p in perms if len(p) == n]
    return fitting or permutations_for(n)


# -- witness replay --------------------------------------------------------

def replay_witness(rule: Rule, report: PropertyReport, tol: Tolerance = DEFAULT_TOL) -> PropertyReport:
    """Recompute both sides at the witness slot from scratch.

    Returns a report whose witness carries the recomputed numbers; for a
    genuine witness they equal the stored ones exactly.
    """
    w, kind = report.witness, report.kind
    if w is None or kind is None:
        raise ValueError("report has no replayable witness")
    pools = w.pools
    if kind.name == "full_allocation":
        lhs_a, rhs_a = _allocation_sides(apply(rule, pools[0]).values, pools[0])
        lhs, rhs = float(lhs_a[w.atoms[0]]), float(rhs_a[w.atoms[0]])
        bound = tol.atol + tol.rtol * abs(rhs)
        bad = abs(lhs - rhs) > bound
    elif kind.name in PERM_PROPERTIES:
        pool = pools[0]
        c = apply(rule, pool).values
        cp = apply(rule, reshuffle(pool, w.perm)).values
        lhs_a, rhs_a, _ = _perm_sides(kind, c, cp, pool, w.perm, tol)
        i, j = w.participant, w.atoms[0]
        lhs, rhs = float(lhs_a[i, j]), float(rhs_a[i, j])
        bad = not tol.close(lhs, rhs)
    else:
        sides = [_slot_sides(kind, apply(rule, p).values, p, tol) for p in pools]
        i = w.participant
        if len(pools) == 1 and w.detail.startswith("metric of X_i vanishes"):
            lhs, rhs = float(sides[0].zero_lhs[i, w.atoms[0]]), float(sides[0].zero_rhs[i, w.atoms[0]])
        else:
            lhs = float(sides[0].values[i, w.atoms[0]])
            rhs = float(sides[1].values[i, w.atoms[1]])
        bad = not tol.close(lhs, rhs)
    new = Witness(w.pools, w.atoms, w.participant, lhs, rhs, w.tolerance, w.perm, w.pool_indices, w.detail)
    verdict = Verdict.VIOLATED if bad else Verdict.HOLDS
    return PropertyReport(report.rule, report.property, verdict, new if bad else None, None, 1, 0, kind)


def max_deviation(a: Rule, b: Rule, pools: Iterable[Pool]) -> tuple[float, int]:
    """Largest ``|C^a - C^b|`` over pools both rules handle, and the number of pools skipped."""
    worst, skipped = 0.0, 0
    for pool in pools:
        try:
            ca, cb = apply(a, pool).values, apply(b, pool).values
        except DegeneratePoolError:
            skipped += 1
            continue
        worst = max(worst, float(np.max(np.abs(ca - cb))))
    return worst, skipped
