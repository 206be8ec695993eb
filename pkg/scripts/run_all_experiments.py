#!/usr/bin/env python3
"""Run every evaluation experiment into one results tree and summarize."""

import argparse
import sys

from fvr.experiments import EXPERIMENT_NAMES, SceneConfig, run_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results")
    ap.add_argument("--seed", type=int, default=3)
    ap.add_argument("--check", action="store_true", help="exit nonzero on any failed check")
    args = ap.parse_args()

    cfg = SceneConfig(alpha_l=0.006, deterministic=True, seed=args.seed)
    all_ok = True
    for name in EXPERIMENT_NAMES:
        report = run_experiment(name, cfg, f"{args.out}/{name}")
        status = "ok" if report.all_passed else "FAILED CHECKS"
        print(f"[{name}] {status} ({report.wall_s:.0f}s)")
        for check in report.checks:
            print(f"    {check.name}: {'PASS' if check.passed else 'FAIL'} ({check.detail})")
        all_ok &= report.all_passed
    if args.check and not all_ok:
        sys.exit(4)


if __name__ == "__main__":
    main()
