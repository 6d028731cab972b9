"""Run every experiment with one master seed into a single output directory.

    python3 scripts/run_all.py --seed 2024 --out results [--n-mc 200] [--only table2 fig7]
"""

import argparse
import sys
import time

from tomofid import cli


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--out", default="results")
    ap.add_argument("--n-mc", type=int, default=None)
    ap.add_argument("--only", nargs="*", choices=cli.EXPERIMENTS, default=list(cli.EXPERIMENTS))
    args = ap.parse_args()
    worst = 0
    for exp in args.only:
        argv = ["--experiment", exp, "--seed", str(args.seed), "--out", f"{args.out}/{exp}"]
        if args.n_mc is not None:
            argv += ["--n-mc", str(args.n_mc)]
        t0 = time.perf_counter()
        code = cli.main(argv)
        print(f"{exp}: exit {code} in {time.perf_counter() - t0:.1f}s", flush=True)
        worst = max(worst, code)
    return worst


if __name__ == "__main__":
    sys.exit(main())
