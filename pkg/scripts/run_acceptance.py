"""Run acceptance criteria and write a report bundle.

    python scripts/run_acceptance.py                 # all ten
    python scripts/run_acceptance.py --only 1,3,9 --out runs/acc
"""

import argparse
import sys

from parflow.acceptance import CRITERIA
from parflow.config import ExperimentConfig
from parflow.suites import emit


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--only", help="comma-separated criterion numbers")
    ap.add_argument("--out", default="runs/acceptance")
    ap.add_argument("--no-plots", action="store_true")
    args = ap.parse_args()
    numbers = [int(v) for v in args.only.split(",")] if args.only else sorted(CRITERIA)
    results = []
    for k in numbers:
        res = CRITERIA[k]()
        print(res.line(), flush=True)
        results.append(res)
    cfg = ExperimentConfig("suite", "acceptance", {"criteria": numbers}, output_dir=args.out)
    out = emit("acceptance", results, args.out, cfg, plots=not args.no_plots)
    print(f"{sum(r.passed for r in results)}/{len(results)} passed; report in {out.directory}")
    return 0 if out.passed else 1


if __name__ == "__main__":
    sys.exit(main())
