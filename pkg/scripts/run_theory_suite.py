"""Run the Monte Carlo theory-verification battery and print its report.

Exit status 0 iff every check passes; use --fast for a quick smoke pass or
--n to pin the large sample count directly.
"""

import argparse

from gaugeflow.theorylab import ALL_SYSTEMS, run_default_suite


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--systems", nargs="+", default=None, choices=ALL_SYSTEMS,
                    help="subset of stock systems (default: all)")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--fast", action="store_true", help="shrink sample sizes")
    ap.add_argument("--n", type=int, default=None,
                    help="override the large Monte Carlo sample count")
    ap.add_argument("--out", default=None, help="write the report JSON here")
    args = ap.parse_args()

    report = run_default_suite(seed=args.seed, fast=args.fast,
                               systems=args.systems, n_mc=args.n)
    for line in report.summary_lines():
        print(line)
    if args.out:
        report.to_json(args.out)
        print(f"report written to {args.out}")
    return 0 if report.all_passed else 1


if __name__ == "__main__":
    raise SystemExit(main())
