"""Run every characterization harness on the default battery and print a summary."""

import argparse
import sys

from risksharing import harness as H
from risksharing import metrics as M
from risksharing.battery import make_battery


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    battery = make_battery(seed=args.seed)
    runs = [("T1", {}), ("T2", {})]
    for q in (M.mean(), M.scenario(0)):
        runs += [("T3", {"q": q}), ("T4", {"q": q})]
    for q2 in (M.cov(), M.first_variance()):
        runs += [("T5", {"q1": M.mean(), "q2": q2}), ("T6", {"q1": M.mean(), "q2": q2})]
    failed = 0
    for tid, kwargs in runs:
        report = H.theorem_harness(tid, battery, **kwargs)
        label = ", ".join(f"{k}={v.name}" for k, v in kwargs.items())
        print(f"{tid} {label or '-'}: {'ok' if report.ok else 'FAILED'}")
        failed += not report.ok
    return 3 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
