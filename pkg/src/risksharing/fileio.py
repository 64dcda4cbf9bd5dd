"""Pool CSV ingestion, run configuration and report emission."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np

from . import metrics as M
from . import rules as R
from .axioms import (
    AGGREGATE,
    FULL_ALLOCATION,
    RESHUFFLING,
    SOURCE_ANONYMOUS,
    STRONGLY_AGGREGATE,
    PropertyKind,
    PropertyReport,
    source_anonymous_q_ratio,
    source_anonymous_std,
    strongly_aggregate_q_ratio,
    strongly_aggregate_std,
)
from .errors import ConfigError, PoolFileError
from .prob_core import ContributionMatrix, Pool, ProbSpace, Tolerance, aggregate

POOL_PROB_TOL = 1e-9
SIG_DIGITS = 12


# -- pool files ------------------------------------------------------------

def parse_pool_csv(text: str) -> Pool:
    """Parse ``prob,X1,...,Xn`` rows (one per atom) into a :class:`Pool`.

    Probabilities are validated against ``POOL_PROB_TOL`` and then rescaled
    to sum to one exactly.
    """
    rows = list(csv.reader(io.StringIO(text)))
    rows = [(k + 1, r) for k, r in enumerate(rows) if any(cell.strip() for cell in r)]
    if not rows:
        raise PoolFileError("empty pool file")
    line, header = rows[0]
    header = [h.strip() for h in header]
    if len(header) < 2 or header[0].lower() != "prob":
        raise PoolFileError("header must be 'prob,X1,...,Xn'", line, 1)
    n = len(header) - 1
    if len(rows) < 2:
        raise PoolFileError("no atoms after the header", line)

    probs, losses = [], []
    for line, row in rows[1:]:
        if len(row) != n + 1:
            raise PoolFileError(f"expected {n + 1} cells, found {len(row)}", line)
        vals = []
        for col, cell in enumerate(row, start=1):
            try:
                v = float(cell)
            except ValueError:
                raise PoolFileError(f"not a number: {cell.strip()!r}", line, col) from None
            if not math.isfinite(v):
                raise PoolFileError(f"non-finite value {cell.strip()!r}", line, col)
            vals.append(v)
        if vals[0] <= 0:
            raise PoolFileError("probability must be > 0", line, 1)
        for col, v in enumerate(vals[1:], start=2):
            if v < 0:
                raise PoolFileError("losses must be >= 0", line, col)
        probs.append(vals[0])
        losses.append(vals[1:])

    total = math.fsum(probs)
    if abs(total - 1.0) > POOL_PROB_TOL:
        raise PoolFileError(f"probabilities sum to {total!r}, not 1 (tolerance {POOL_PROB_TOL:g})", rows[-1][0], 1)
    weights = np.array(probs) / total
    return Pool(ProbSpace(weights), np.array(losses).T)


def read_pool(path: str | Path) -> Pool:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise PoolFileError(f"cannot read {path}: {exc.strerror}") from None
    return parse_pool_csv(text)


def pool_to_csv(pool: Pool) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["prob"] + [f"X{i + 1}" for i in range(pool.n)])
    for j in range(pool.m):
        w.writerow([repr(float(pool.space.weights[j]))] + [repr(float(v)) for v in pool.losses[:, j]])
    return buf.getvalue()


def contributions_to_csv(cm: ContributionMatrix, pool: Pool) -> str:
    """``C1..Cn,S`` per atom, floats written with full round-trip precision."""
    s = aggregate(pool).values
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"C{i + 1}" for i in range(cm.n)] + ["S"])
    for j in range(pool.m):
        w.writerow([repr(float(v)) for v in cm.values[:, j]] + [repr(float(s[j]))])
    return buf.getvalue()


def read_contributions_csv(text: str) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`contributions_to_csv`: (n x m contributions, S)."""
    rows = list(csv.reader(io.StringIO(text)))
    header, body = rows[0], [r for r in rows[1:] if r]
    if not header or header[-1] != "S":
        raise PoolFileError("contribution file must end with an 'S' column", 1)
    data = np.array([[float(v) for v in r] for r in body])
    return data[:, :-1].T, data[:, -1]


# -- configuration ---------------------------------------------------------

RULE_NAMES = {
    "uniform": "uniform",
    "q_prop": "q_proportional",
    "mean_prop": "mean_proportional",
    "weighted_q_prop": "weighted_q_proportional",
    "q1q2_lin": "q1q2_linear",
    "scen_prop": "scenario_proportional",
    "scen_lin": "scenario_linear",
    "cov_lin": "covariance_linear",
    "var_lin": "variance_linear",
    "cond_mean": "conditional_mean",
    "order_stats": "order_statistics",
    "all_in_one": "all_in_one",
    "stand_alone": "stand_alone",
    "hybrid": "hybrid",
    "linear_hybrid": "linear_hybrid",
}

PROPERTY_ALIASES = {
    "sa_q_ratio": "source_anonymous_q_ratio",
    "sagg_q_ratio": "strongly_aggregate_q_ratio",
    "sa_std": "source_anonymous_std",
    "sagg_std": "strongly_aggregate_std",
}


@dataclass(frozen=True)
class BatteryConfig:
    n_values: tuple[int, ...] = (2, 3, 4)
    random_per_n: int = 6
    families_per_n: int = 2
    family_size: int = 4
    value_max: int = 100

    @classmethod
    def from_dict(cls, d: dict) -> BatteryConfig:
        _reject_unknown(d, cls, "battery")
        d = dict(d)
        if "n_values" in d:
            d["n_values"] = tuple(int(v) for v in d["n_values"])
        out = cls(**d)
        if not out.n_values or min(out.n_values) < 1:
            raise ConfigError("battery.n_values must list participant counts >= 1")
        return out


@dataclass(frozen=True)
class RunConfig:
    rule: str | None = None
    rules: tuple[str, ...] | None = None
    q: str | None = None
    q1: str | None = None
    q2: str | None = None
    omegas: tuple[int, ...] | None = None
    weights: tuple[float, ...] | None = None
    degenerate: str = "error"
    tol_abs: float = 1e-9
    tol_rel: float = 1e-9
    seed: int = 0
    battery: BatteryConfig = field(default_factory=BatteryConfig)
    properties: tuple[str, ...] = ("all",)
    theorems: tuple[str, ...] = ("T1", "T2", "T3", "T4", "T5", "T6")
    out: str | None = None
    format: str = "both"

    def __post_init__(self):
        if self.format not in ("json", "md", "both"):
            raise ConfigError(f"format must be json, md or both, got {self.format!r}")
        if self.degenerate not in ("error", "uniform", "uniform_fallback"):
            raise ConfigError(f"degenerate must be 'error' or 'uniform', got {self.degenerate!r}")
        if self.tol_abs < 0 or self.tol_rel < 0:
            raise ConfigError("tolerances must be non-negative")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        if self.omegas is not None and any(k < 0 for k in self.omegas):
            raise ConfigError("scenario indices must be non-negative")

    @classmethod
    def from_dict(cls, d: dict) -> RunConfig:
        if not isinstance(d, dict):
            raise ConfigError("configuration must be a JSON object")
        _reject_unknown(d, cls, "config")
        d = dict(d)
        if "battery" in d:
            d["battery"] = BatteryConfig.from_dict(d["battery"])
        for key in ("rules", "omegas", "weights", "theorems"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        if "properties" in d:
            props = d["properties"]
            d["properties"] = (props,) if isinstance(props, str) else tuple(props)
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path: str | Path) -> RunConfig:
        try:
            data = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
        return cls.from_dict(data)

    @property
    def tolerance(self) -> Tolerance:
        return Tolerance(self.tol_abs, self.tol_rel)

    def metric(self, which: str) -> M.RiskMetric | None:
        spec = getattr(self, which)
        return M.parse_metric(spec) if spec else None

    def bimetric(self) -> M.BiMetric | None:
        return M.parse_bimetric(self.q2) if self.q2 else None

    def validate_against(self, pool: Pool) -> None:
        """Scenario indices (in ``omegas`` and metric specs) must address atoms of ``pool``."""
        for k in self.omegas or ():
            if k >= pool.m:
                raise ConfigError(f"scenario index {k} out of range for a pool with {pool.m} atoms")
        for which in ("q", "q1"):
            q = self.metric(which)
            if q is not None and q.kind == "scenario" and q.params[0] >= pool.m:
                raise ConfigError(f"{which}={getattr(self, which)}: atom out of range for {pool.m} atoms")
        q2 = self.bimetric()
        if q2 is not None and q2.kind == "scenario_range" and max(q2.params) >= pool.m:
            raise ConfigError(f"q2={self.q2}: atom out of range for {pool.m} atoms")


def _reject_unknown(d: dict, cls, where: str) -> None:
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(d) - known)
    if unknown:
        raise ConfigError(f"unknown {where} key(s): {', '.join(unknown)}")


def build_rule(name: str, cfg: RunConfig) -> R.RuleSpec:
    """Rule from a CLI name (short or full kind) plus the config's parameters."""
    kind = RULE_NAMES.get(name, name)
    q, q1, q2 = cfg.metric("q"), cfg.metric("q1"), cfg.bimetric()
    kw = {"degenerate": cfg.degenerate}
    omegas = cfg.omegas
    if kind == "mean_proportional":
        return R.mean_proportional(**kw)
    if kind == "q_proportional":
        return R.q_proportional(q or M.mean(), **kw)
    if kind == "weighted_q_proportional":
        return R.weighted_q_proportional(q or M.mean(), cfg.weights, **kw)
    if kind == "q1q2_linear":
        return R.q1q2_linear(q1 or M.mean(), q2 or M.cov(), **kw)
    if kind == "scenario_proportional":
        return R.scenario_proportional(omegas[0] if omegas else 0, **kw)
    if kind == "scenario_linear":
        if omegas is not None and len(omegas) != 3:
            raise ConfigError("scen_lin needs three scenario indices: typical,high,low")
        return R.scenario_linear(*(omegas or (0, 1, 2)), **kw)
    if kind == "hybrid":
        return R.hybrid(q or M.mean(), **kw)
    if kind == "linear_hybrid":
        return R.linear_hybrid(q1 or M.mean(), q2 or M.cov(), **kw)
    if kind in R.KINDS:
        return R.RuleSpec(kind, **kw)
    raise ConfigError(f"unknown rule {name!r}; choose from {', '.join(RULE_NAMES)}")


def build_properties(cfg: RunConfig) -> list[PropertyKind]:
    """Resolve property names; ``all`` adds the metric-based ones when metrics are set."""
    q, q1, q2 = cfg.metric("q"), cfg.metric("q1"), cfg.bimetric()
    basic = [FULL_ALLOCATION, RESHUFFLING, SOURCE_ANONYMOUS, AGGREGATE, STRONGLY_AGGREGATE]
    out: list[PropertyKind] = []
    for name in cfg.properties:
        name = PROPERTY_ALIASES.get(name, name)
        if name == "all":
            out += basic
            if q is not None:
                out += [source_anonymous_q_ratio(q), strongly_aggregate_q_ratio(q)]
            if q1 is not None and q2 is not None:
                out += [source_anonymous_std(q1, q2), strongly_aggregate_std(q1, q2)]
        elif name.endswith("q_ratio"):
            if q is None:
                raise ConfigError(f"{name} needs --q")
            out.append(PropertyKind(name, q))
        elif name.endswith("_std"):
            if q1 is None or q2 is None:
                raise ConfigError(f"{name} needs --q1 and --q2")
            out.append(PropertyKind(name, q1, q2))
        else:
            try:
                out.append(PropertyKind(name))
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
    seen, unique = set(), []
    for k in out:
        if k.label not in seen:
            seen.add(k.label)
            unique.append(k)
    return unique


# -- emission --------------------------------------------------------------

def _round(obj: Any) -> Any:
    if isinstance(obj, float) or isinstance(obj, np.floating):
        x = float(obj)
        if not math.isfinite(x):
            return repr(x)
        return float(f"{x:.{SIG_DIGITS}g}") + 0.0
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, dict):
        return {str(k): _round(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _round(obj.tolist())
    return obj


def dumps_json(obj: Any) -> str:
    """Stable JSON: sorted keys, floats rounded to 12 significant digits."""
    return json.dumps(_round(obj), sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def reports_to_markdown(reports: list[PropertyReport], title: str = "Property report") -> str:
    lines = [f"# {title}", "", "| Rule | Property | Verdict | Detail |", "|---|---|---|---|"]
    for r in reports:
        lines.append(f"| {r.rule} | {r.property} | {r.verdict.value} | {_detail(r)} |")
    return "\n".join(lines) + "\n"


def _detail(r: PropertyReport) -> str:
    w = r.witness
    if w is None:
        return r.reason or ""
    parts = [f"pool {'/'.join('-' if k is None else str(k) for k in w.pool_indices)}"]
    if w.perm is not None:
        parts.append(f"perm {list(w.perm.mapping)}")
    if w.participant is not None:
        parts.append(f"participant {w.participant}")
    parts.append(f"atom {'/'.join(map(str, w.atoms))}")
    parts.append(f"lhs {w.lhs:.12g} vs rhs {w.rhs:.12g}")
    return ", ".join(parts)
