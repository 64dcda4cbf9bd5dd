"""Command-line entry points: ``compute``, ``check``, ``classify``, ``theorems``.

Exit codes: 0 ok, 1 input error, 2 degenerate pool under the ``error``
policy, 3 classification or theorem mismatch.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from .axioms import Contributions, check_property
from .battery import battery_from_pool, make_battery
from .errors import DegeneratePoolError, RiskSharingError
from .fileio import (
    RunConfig,
    build_properties,
    build_rule,
    contributions_to_csv,
    dumps_json,
    read_pool,
    reports_to_markdown,
)
from .harness import TABLE1_EXPECTED, classify, implication_audit, table1_rules, theorem_harness
from .rules import apply, expected_contributions

EXIT_OK, EXIT_INPUT, EXIT_DEGENERATE, EXIT_MISMATCH = 0, 1, 2, 3

TABLE1_SHORT = {
    "order_stats": "order_statistics",
    "cond_mean": "conditional_mean",
    "mean_prop": "mean_proportional",
    "scen_prop": "scenario_proportional",
    "scen_lin": "scenario_linear",
}


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with the input-error code instead of argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON run configuration; command-line flags override it")
    p.add_argument("--pool", help="pool CSV with header prob,X1,...,Xn")
    p.add_argument("--rule", action="append", help="rule name (repeatable for classify)")
    p.add_argument("--q", help="risk metric, e.g. mean, scenario:0, constant:7")
    p.add_argument("--q1", help="risk metric for the linear rules")
    p.add_argument("--q2", help="bi-metric, e.g. cov, first_var, scenario_range:1,2, lift:mean")
    p.add_argument("--omegas", help="scenario indices i[,j,k]")
    p.add_argument("--weights", help="position weights for weighted_q_prop, e.g. 1,2")
    p.add_argument("--degenerate", choices=["error", "uniform"])
    p.add_argument("--seed", type=int)
    p.add_argument("--tol-abs", type=float, dest="tol_abs")
    p.add_argument("--tol-rel", type=float, dest="tol_rel")
    p.add_argument("--out", help="output directory (default: stdout)")
    p.add_argument("--format", choices=["json", "md", "both"])


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="risksharing", description="Risk-sharing rules and their axioms on finite pools.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("compute", help="contributions of one rule for a pool")
    _common(p)

    p = sub.add_parser("check", help="check properties of one rule on a pool or a generated battery")
    _common(p)
    p.add_argument("--property", action="append", dest="properties",
                   help="property to check (repeatable); default all")

    p = sub.add_parser("classify", help="rules x {reshuffling, source-anonymous, aggregate, strongly aggregate}")
    _common(p)

    p = sub.add_parser("theorems", help="only-if, uniqueness and independence checks per theorem")
    _common(p)
    p.add_argument("--theorem", action="append", dest="theorems", choices=["T1", "T2", "T3", "T4", "T5", "T6"])
    return parser


def _config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    over = {}
    for key in ("q", "q1", "q2", "degenerate", "seed", "tol_abs", "tol_rel", "out", "format"):
        val = getattr(args, key, None)
        if val is not None:
            over[key] = val
    if args.rule:
        over["rule"] = args.rule[0]
        over["rules"] = tuple(args.rule)
    if args.omegas:
        over["omegas"] = _ints(args.omegas, "--omegas")
    if args.weights:
        over["weights"] = tuple(float(v) for v in args.weights.split(","))
    if getattr(args, "properties", None):
        over["properties"] = tuple(args.properties)
    if getattr(args, "theorems", None):
        over["theorems"] = tuple(args.theorems)
    return dataclasses.replace(cfg, **over)


def _ints(text: str, flag: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError:
        raise RiskSharingError(f"{flag} expects comma-separated integers, got {text!r}") from None


def _emit(cfg: RunConfig, stem: str, payload: dict, markdown: str) -> None:
    """Write JSON and/or Markdown once, at the end, to ``--out`` or stdout."""
    blobs = []
    if cfg.format in ("json", "both"):
        blobs.append((f"{stem}.json", dumps_json(payload)))
    if cfg.format in ("md", "both"):
        blobs.append((f"{stem}.md", markdown))
    if cfg.out:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        for name, text in blobs:
            (out / name).write_text(text)
    else:
        sys.stdout.write("\n".join(text for _, text in blobs))


def _battery(cfg: RunConfig, pool=None):
    if pool is not None:
        return battery_from_pool(pool, seed=cfg.seed)
    b = cfg.battery
    return make_battery(cfg.seed, b.n_values, b.random_per_n, b.families_per_n, b.family_size, b.value_max)


def cmd_compute(cfg: RunConfig, pool_path: str | None) -> int:
    if not pool_path:
        raise RiskSharingError("compute needs --pool")
    if not cfg.rule:
        raise RiskSharingError("compute needs --rule")
    pool = read_pool(pool_path)
    cfg.validate_against(pool)
    rule = build_rule(cfg.rule, cfg)
    cm = apply(rule, pool)
    table = contributions_to_csv(cm, pool)
    means = expected_contributions(cm, pool.space)
    residuals = cm.residuals(pool)
    summary = [f"rule: {rule.name}"]
    summary += [f"E[C{i + 1}] = {v:.12g}" for i, v in enumerate(means)]
    summary += ["residual per atom (sum C - S): " + ", ".join(f"{r:.3g}" for r in residuals)]
    summary = "\n".join(summary) + "\n"
    if cfg.out:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "contributions.csv").write_text(table)
        sys.stdout.write(summary)
    else:
        sys.stdout.write(table)
        sys.stderr.write(summary)
    return EXIT_OK


def cmd_check(cfg: RunConfig, pool_path: str | None) -> int:
    if not cfg.rule:
        raise RiskSharingError("check needs --rule")
    pool = read_pool(pool_path) if pool_path else None
    rule = build_rule(cfg.rule, cfg)
    if pool is not None:
        cfg.validate_against(pool)
        if rule.degenerate == "error":
            apply(rule, pool)  # surfaces DegeneratePoolError for the input pool itself
    battery = _battery(cfg, pool)
    for p in battery.pools:
        cfg.validate_against(p)
    props = build_properties(cfg)
    cache = Contributions(rule)
    reports = [check_property(rule, k, battery, None, cfg.tolerance, cache) for k in props]
    payload = {
        "rule": rule.name,
        "battery": battery.describe(),
        "tolerance": {"abs": cfg.tol_abs, "rel": cfg.tol_rel},
        "reports": [r.to_dict() for r in reports],
        "implication_audit": implication_audit(reports),
    }
    _emit(cfg, "check", payload, reports_to_markdown(reports, f"Properties of {rule.name}"))
    return EXIT_OK


def cmd_classify(cfg: RunConfig) -> int:
    battery = _battery(cfg)
    rules = table1_rules(cfg.degenerate, cfg.omegas[0] if cfg.omegas else 0)
    if cfg.rules:
        wanted = [TABLE1_SHORT.get(r, r) for r in cfg.rules]
        unknown = sorted(set(wanted) - {r.name for r in rules})
        if unknown:
            raise RiskSharingError(f"classify supports {', '.join(TABLE1_EXPECTED)}; unknown: {', '.join(unknown)}")
        rules = [r for r in rules if r.name in wanted]
    matrix = classify(rules, battery, None, cfg.tolerance)
    mismatches = matrix.mismatches()
    flat = [rep for row in matrix.reports for rep in row]
    payload = {
        **matrix.to_dict(),
        "expected": {r: TABLE1_EXPECTED[r] for r in matrix.rules},
        "matches": not mismatches,
        "implication_audit": implication_audit(flat),
    }
    md = "# Classification\n\n" + matrix.to_markdown()
    if mismatches:
        md += "\nMismatches: " + ", ".join(f"{r} got {g} expected {e}" for r, (g, e) in mismatches.items()) + "\n"
    _emit(cfg, "classify", payload, md)
    return EXIT_MISMATCH if mismatches else EXIT_OK


def cmd_theorems(cfg: RunConfig) -> int:
    battery = _battery(cfg)
    q, q1, q2 = cfg.metric("q"), cfg.metric("q1"), cfg.bimetric()
    reports = [theorem_harness(t, battery, None, q=q, q1=q1, q2=q2, tol=cfg.tolerance) for t in cfg.theorems]
    payload = {"battery": battery.describe(), "theorems": [r.to_dict() for r in reports],
               "ok": all(r.ok for r in reports)}
    md = "# Theorem harness\n\n" + "\n".join(r.to_markdown() for r in reports)
    _emit(cfg, "theorems", payload, md)
    return EXIT_OK if payload["ok"] else EXIT_MISMATCH


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _config(args)
        pool_path = args.pool
        if args.command == "compute":
            return cmd_compute(cfg, pool_path)
        if args.command == "check":
            return cmd_check(cfg, pool_path)
        if args.command == "classify":
            return cmd_classify(cfg)
        return cmd_theorems(cfg)
    except DegeneratePoolError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except RiskSharingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
