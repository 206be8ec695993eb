#!/usr/bin/env python3
"""Plot per-iteration RMSE curves from a reconstruction trace CSV."""

import argparse
import csv

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("trace", help="trace.csv written by reconstruction")
    ap.add_argument("--out", default="trace.png")
    args = ap.parse_args()

    iters, series = [], {"rmse_r": [], "rmse_g": [], "rmse_b": []}
    with open(args.trace, newline="") as f:
        for row in csv.DictReader(f):
            iters.append(int(row["iter"]))
            for key in series:
                if row.get(key):
                    series[key].append(float(row[key]))

    fig, ax = plt.subplots(figsize=(6, 4))
    for key, color in (("rmse_r", "tab:red"), ("rmse_g", "tab:green"), ("rmse_b", "tab:blue")):
        if series[key]:
            ax.plot(iters[: len(series[key])], series[key], color=color, label=key)
    ax.set_xlabel("iteration")
    ax.set_ylabel("bounding-box pixel RMSE")
    ax.set_yscale("log")
    ax.legend()
    fig.tight_layout()
    fig.savefig(args.out, dpi=130)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
