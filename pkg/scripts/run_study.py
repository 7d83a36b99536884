#!/usr/bin/env python3
"""Reproduce the car obstacle-avoidance study end to end.

Runs the three architectures under the worst-case sector perturbation, writes
traces, the comparison table, and the three plot descriptions, then sweeps the
uncertainty level.  Outputs land in out/study (override with --out).
"""

import argparse
import sys
from pathlib import Path

from rtvcbf.cli import main as cli_main

SCENARIO = Path(__file__).resolve().parent.parent / "scenarios" / "car_paper.scenario"


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="out/study")
    parser.add_argument("--skip-sweep", action="store_true")
    args = parser.parse_args()

    code = cli_main(["compare", "--scenario", str(SCENARIO), "--out", args.out])
    if code != 0:
        return code
    code = cli_main(["feasibility", "--scenario", str(SCENARIO), "--out", args.out])
    if code != 0:
        return code
    if not args.skip_sweep:
        code = cli_main(
            [
                "sweep", "--scenario", str(SCENARIO),
                "--param", "filter.theta", "--values", "0.0,0.25,0.5,0.75",
                "--out", args.out,
            ]
        )
    print(f"\nstudy artifacts in {args.out}/ (render plots with scripts/render_plots.py)")
    return code


if __name__ == "__main__":
    sys.exit(main())
