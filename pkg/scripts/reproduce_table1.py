"""Classify the seven reference rules on the default battery and print the matrix."""

import argparse
import sys

from risksharing import harness as H
from risksharing.battery import make_battery


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    matrix = H.classify(None, make_battery(seed=args.seed))
    print(matrix.to_markdown())
    mismatches = matrix.mismatches()
    if mismatches:
        print(f"mismatching rows: {', '.join(mismatches)}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
