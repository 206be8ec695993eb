#!/usr/bin/env python3
"""Run the standard closed-loop color reconstruction and print its report.

The scene matches the acceptance setup: 64^3 synthetic flame, 10 cameras
(36 degree spacing, +/-5 degree jitter), 320x240 renders, deterministic.
"""

import argparse

from fvr.experiments import SceneConfig, run_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results/closed_loop")
    ap.add_argument("--seed", type=int, default=3)
    ap.add_argument("--snapshots", action="store_true")
    args = ap.parse_args()

    cfg = SceneConfig(alpha_l=0.006, deterministic=True, seed=args.seed)
    report = run_experiment("closed_loop", cfg, args.out, snapshots=args.snapshots,
                            save_renders=True)
    print("\n".join(report.summary_lines()))


if __name__ == "__main__":
    main()
