"""Classification matrix and theorem harness built on the property checks."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import metrics as M
from . import rules as R
from .axioms import (
    AGGREGATE,
    RESHUFFLING,
    SOURCE_ANONYMOUS,
    STRONGLY_AGGREGATE,
    Contributions,
    PropertyKind,
    PropertyReport,
    Verdict,
    check_property,
    max_deviation,
    replay_witness,
    rule_name,
    source_anonymous_q_ratio,
    source_anonymous_std,
    strongly_aggregate_q_ratio,
    strongly_aggregate_std,
)
from .battery import Battery
from .metrics import AttributeReport, BiMetric, RiskMetric, verify_attributes
from .prob_core import DEFAULT_TOL, Tolerance
from .rules import Rule, RuleSpec

SYMBOLS = {Verdict.HOLDS: "✓", Verdict.VIOLATED: "−"}
TABLE1_PROPERTIES = (RESHUFFLING, SOURCE_ANONYMOUS, AGGREGATE, STRONGLY_AGGREGATE)
_HEADERS = {
    "reshuffling": "Reshuffling",
    "source_anonymous": "Source-anonymous",
    "aggregate": "Aggregate",
    "strongly_aggregate": "Strongly aggregate",
}


def table1_rules(degenerate: str = "uniform", typical: int = 0) -> list[RuleSpec]:
    kw = {"degenerate": degenerate}
    return [
        R.order_statistics(**kw),
        R.conditional_mean(**kw),
        R.mean_proportional(**kw),
        R.scenario_proportional(typical, label="scenario_proportional", **kw),
        R.scenario_linear(typical, 1, 2, label="scenario_linear", **kw),
        R.all_in_one(**kw),
        R.uniform(**kw),
    ]


#: Expected symbols per row, columns in ``TABLE1_PROPERTIES`` order.
TABLE1_EXPECTED = {
    "order_statistics": "−✓−−",
    "conditional_mean": "✓−✓−",
    "mean_proportional": "✓−✓−",
    "scenario_proportional": "✓−✓−",
    "scenario_linear": "✓−✓−",
    "all_in_one": "−✓✓✓",
    "uniform": "✓✓✓✓",
}


@dataclass
class ClassificationMatrix:
    rules: list[str]
    properties: list[str]
    reports: list[list[PropertyReport]]
    battery: dict = field(default_factory=dict)

    def symbol(self, i: int, j: int) -> str:
        return SYMBOLS.get(self.reports[i][j].verdict, "?")

    def row(self, rule: str) -> str:
        i = self.rules.index(rule)
        return "".join(self.symbol(i, j) for j in range(len(self.properties)))

    def pattern(self) -> dict[str, str]:
        return {r: self.row(r) for r in self.rules}

    def mismatches(self, expected: dict[str, str] = TABLE1_EXPECTED) -> dict[str, tuple[str, str | None]]:
        """Rows whose symbols differ from ``expected`` (rules absent from it included)."""
        return {r: (got, expected.get(r)) for r, got in self.pattern().items() if expected.get(r) != got}

    def matches(self, expected: dict[str, str] = TABLE1_EXPECTED) -> bool:
        return not self.mismatches(expected)

    def to_markdown(self) -> str:
        heads = [_HEADERS.get(p, p) for p in self.properties]
        lines = ["| Rule | " + " | ".join(heads) + " |", "|---" * (len(heads) + 1) + "|"]
        for i, r in enumerate(self.rules):
            lines.append(f"| {r} | " + " | ".join(self.symbol(i, j) for j in range(len(heads))) + " |")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "battery": self.battery,
            "properties": list(self.properties),
            "rules": [
                {
                    "rule": r,
                    "pattern": self.row(r),
                    "reports": [rep.to_dict() for rep in self.reports[i]],
                }
                for i, r in enumerate(self.rules)
            ],
        }


def classify(rules: Sequence[Rule] | None, battery: Battery, perms=None, tol: Tolerance = DEFAULT_TOL,
             properties: Sequence[PropertyKind] = TABLE1_PROPERTIES) -> ClassificationMatrix:
    rules = table1_rules() if rules is None else list(rules)
    grid = []
    for rule in rules:
        cache = Contributions(rule)
        grid.append([check_property(rule, k, battery, perms, tol, cache) for k in properties])
    return ClassificationMatrix([rule_name(r) for r in rules], [k.label for k in properties], grid, battery.describe())


def implication_audit(reports: Sequence[PropertyReport]) -> list[str]:
    """Rules recorded strongly aggregate but not source-anonymous (must be empty)."""
    by_rule: dict[str, dict[str, Verdict]] = {}
    for rep in reports:
        by_rule.setdefault(rep.rule, {})[rep.property] = rep.verdict
    return sorted(
        r for r, v in by_rule.items()
        if v.get("strongly_aggregate") is Verdict.HOLDS and v.get("source_anonymous") is Verdict.VIOLATED
    )


# -- theorems --------------------------------------------------------------

THEOREMS = ("T1", "T2", "T3", "T4", "T5", "T6")


@dataclass
class IndependenceRow:
    rule: str
    expected: tuple[bool, ...]  # True = holds, False = violated, per axiom
    reports: list[PropertyReport]
    replay_ok: bool

    @property
    def ok(self) -> bool:
        got = tuple(r.holds if e else r.violated for r, e in zip(self.reports, self.expected))
        return all(got) and self.replay_ok

    def to_dict(self) -> dict:
        return {
            "rule": self.rule,
            "expected": ["holds" if e else "violated" for e in self.expected],
            "verdicts": [r.verdict.value for r in self.reports],
            "replay_ok": self.replay_ok,
            "ok": self.ok,
            "reports": [r.to_dict() for r in self.reports],
        }


@dataclass
class UniquenessRow:
    rule: str
    verdicts: list[Verdict]
    passes: bool
    deviation: float | None
    coincides: bool | None

    @property
    def ok(self) -> bool:
        return not self.passes or bool(self.coincides)

    def to_dict(self) -> dict:
        return {
            "rule": self.rule,
            "verdicts": [v.value for v in self.verdicts],
            "passes_all": self.passes,
            "max_deviation": self.deviation,
            "coincides": self.coincides,
        }


@dataclass
class TheoremReport:
    theorem: str
    named_rule: str
    axioms: list[str]
    only_if: list[PropertyReport]
    uniqueness: list[UniquenessRow]
    independence: list[IndependenceRow]
    audits: list[AttributeReport]

    @property
    def only_if_ok(self) -> bool:
        return all(r.holds for r in self.only_if)

    @property
    def uniqueness_ok(self) -> bool:
        return all(u.ok for u in self.uniqueness)

    @property
    def independence_ok(self) -> bool:
        return all(row.ok for row in self.independence)

    @property
    def ok(self) -> bool:
        return self.only_if_ok and self.uniqueness_ok and self.independence_ok

    def to_dict(self) -> dict:
        return {
            "theorem": self.theorem,
            "named_rule": self.named_rule,
            "axioms": self.axioms,
            "ok": self.ok,
            "only_if": [r.to_dict() for r in self.only_if],
            "uniqueness": [u.to_dict() for u in self.uniqueness],
            "independence": [row.to_dict() for row in self.independence],
            "audits": [a.to_dict() for a in self.audits],
        }

    def to_markdown(self) -> str:
        out = [f"## {self.theorem}: {self.named_rule}", "", f"Axioms: {', '.join(self.axioms)}", ""]
        out += ["Only-if:", ""]
        out += [f"- {r.property}: {r.verdict.value}" + (f" ({r.reason})" if r.reason else "") for r in self.only_if]
        out += ["", "Uniqueness:", "", "| Rule | Verdicts | Passes all | Max deviation | Coincides |", "|---|---|---|---|---|"]
        for u in self.uniqueness:
            dev = "" if u.deviation is None else f"{u.deviation:.3g}"
            co = "" if u.coincides is None else ("yes" if u.coincides else "NO")
            out.append(f"| {u.rule} | {' '.join(SYMBOLS.get(v, '?') for v in u.verdicts)} | "
                       f"{'yes' if u.passes else 'no'} | {dev} | {co} |")
        if self.independence:
            out += ["", "Independence / contrast:", ""]
            for row in self.independence:
                exp = ",".join("holds" if e else "violated" for e in row.expected)
                got = ",".join(r.verdict.value for r in row.reports)
                out.append(f"- {row.rule}: expected {exp}; got {got}" + ("" if row.ok else "  **MISMATCH**"))
        if self.audits:
            out += ["", "Metric audit:", ""]
            out += [f"- {a.metric}: normalized={a.normalized}, additive={a.additive}" for a in self.audits]
        out += ["", f"Result: {'ok' if self.ok else 'FAILED'}", ""]
        return "\n".join(out)


@dataclass(frozen=True)
class TheoremSetup:
    named: RuleSpec
    axioms: tuple[PropertyKind, ...]
    independence: tuple[tuple[RuleSpec, tuple[bool, ...]], ...]
    metrics: tuple = ()


def theorem_setup(theorem_id: str, q: RiskMetric | None = None, q1: RiskMetric | None = None,
                  q2: BiMetric | None = None, degenerate: str = "uniform") -> TheoremSetup:
    kw = {"degenerate": degenerate}
    q = q or M.mean()
    q1 = q1 or M.mean()
    q2 = q2 or M.cov()
    if theorem_id == "T1":
        return TheoremSetup(R.uniform(**kw), (RESHUFFLING, SOURCE_ANONYMOUS),
                            ((R.stand_alone(**kw), (True, False)), (R.order_statistics(**kw), (False, True))))
    if theorem_id == "T2":
        return TheoremSetup(R.uniform(**kw), (RESHUFFLING, STRONGLY_AGGREGATE),
                            ((R.stand_alone(**kw), (True, False)), (R.all_in_one(**kw), (False, True))))
    if theorem_id == "T3":
        return TheoremSetup(R.q_proportional(q, **kw), (RESHUFFLING, source_anonymous_q_ratio(q)),
                            ((R.stand_alone(**kw), (True, False)), (R.hybrid(q, **kw), (False, True))), (q,))
    if theorem_id == "T4":
        return TheoremSetup(R.q_proportional(q, **kw), (strongly_aggregate_q_ratio(q),),
                            ((R.uniform(**kw), (False,)),), (q,))
    if theorem_id == "T5":
        return TheoremSetup(R.q1q2_linear(q1, q2, **kw), (RESHUFFLING, source_anonymous_std(q1, q2)),
                            ((R.stand_alone(**kw), (True, False)), (R.linear_hybrid(q1, q2, **kw), (False, True))),
                            (q1, q2))
    if theorem_id == "T6":
        return TheoremSetup(R.q1q2_linear(q1, q2, **kw), (strongly_aggregate_std(q1, q2),),
                            ((R.uniform(**kw), (False,)),), (q1, q2))
    raise ValueError(f"unknown theorem {theorem_id!r}; expected one of {THEOREMS}")


def _coincide_tol(a: Rule, b: Rule, pools, tol: Tolerance) -> tuple[float, bool]:
    dev, _ = max_deviation(a, b, pools)
    scale = max((float(np.max(np.abs(p.losses.sum(axis=0)))) for p in pools), default=0.0)
    return dev, dev <= tol.atol + tol.rtol * scale


def theorem_harness(theorem_id: str, battery: Battery, perms=None, *, q: RiskMetric | None = None,
                    q1: RiskMetric | None = None, q2: BiMetric | None = None,
                    catalog: Sequence[RuleSpec] | None = None, tol: Tolerance = DEFAULT_TOL) -> TheoremReport:
    """Only-if, uniqueness and independence checks for one theorem on ``battery``.

    Uniqueness is battery-scoped: every catalog rule that passes all the
    theorem's axioms must coincide with the named rule on the battery pools.
    """
    setup = theorem_setup(theorem_id, q, q1, q2)
    pools = list(battery.pools)
    audits = {m.name: verify_attributes(m, pools, tol) for m in setup.metrics}

    def run(rule):
        cache = Contributions(rule)
        return [check_property(rule, k, battery, perms, tol, cache, audits) for k in setup.axioms]

    only_if = run(setup.named)

    cat = list(catalog) if catalog is not None else R.catalog(
        q=setup.named.q if theorem_id in ("T3", "T4", "T5", "T6") else None,
        q2=setup.named.q2 if theorem_id in ("T5", "T6") else None,
    )
    if theorem_id in ("T5", "T6"):
        cat = [r for r in cat if r.kind != "hybrid"]
    names = {rule_name(r) for r in cat}
    if rule_name(setup.named) not in names:
        cat.append(setup.named)
    uniq = []
    for rule in cat:
        reps = run(rule)
        passes = all(r.holds for r in reps)
        dev = co = None
        if passes:
            dev, co = _coincide_tol(rule, setup.named, pools, tol)
        uniq.append(UniquenessRow(rule_name(rule), [r.verdict for r in reps], passes, dev, co))

    indep = []
    for rule, expected in setup.independence:
        reps = run(rule)
        replay_ok = all(
            _replays(rule, r, tol) for r in reps if r.violated
        )
        indep.append(IndependenceRow(rule_name(rule), expected, reps, replay_ok))

    return TheoremReport(theorem_id, rule_name(setup.named), [k.label for k in setup.axioms], only_if, uniq, indep,
                         [audits[m] for m in sorted(audits)])


def _replays(rule: Rule, report: PropertyReport, tol: Tolerance) -> bool:
    again = replay_witness(rule, report, tol)
    return again.violated and again.witness.lhs == report.witness.lhs and again.witness.rhs == report.witness.rhs
