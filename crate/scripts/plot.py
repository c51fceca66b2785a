#!/usr/bin/env python3
"""Plot CSV tables written by `lrei`.

    plot.py run.csv [more.csv ...] [--columns mx,mz] [--stretch 1.25] [-o fig.png]
    plot.py converge.csv [-o fig.png]

`--stretch` divides the time axis of every file after the first, which puts a
q-LLG run at stretched time next to its q-LL counterpart.
"""

import argparse
import csv
import sys
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def read(path):
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    return rows


def plot_runs(paths, columns, stretch, ax):
    for k, path in enumerate(paths):
        rows = read(path)
        scale = stretch if k > 0 else 1.0
        t = [float(r["t"]) / scale for r in rows]
        cols = columns or [c for c in rows[0] if c != "t"]
        for c in cols:
            ax.plot(t, [float(r[c]) for r in rows], label=f"{path}: {c}", ls="-" if k == 0 else "--")
    ax.set_xlabel("t")
    ax.legend(fontsize="small")


def plot_converge(path, ax):
    series = defaultdict(list)
    for r in read(path):
        series[r["scheme"]].append((float(r["h"]), float(r["error"]), float(r["fitted_order"])))
    for scheme, pts in series.items():
        pts.sort()
        ax.loglog([p[0] for p in pts], [p[1] for p in pts], "o-", label=f"{scheme} (order {pts[0][2]:.2f})")
    ax.set_xlabel("h")
    ax.set_ylabel("error")
    ax.legend(fontsize="small")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("csv", nargs="+")
    ap.add_argument("--columns", default="")
    ap.add_argument("--stretch", type=float, default=1.0)
    ap.add_argument("-o", "--output", default="plot.png")
    args = ap.parse_args()
    fig, ax = plt.subplots(figsize=(7, 4.5))
    with open(args.csv[0]) as f:
        header = f.readline().strip().split(",")
    if header[:3] == ["scheme", "h", "error"]:
        plot_converge(args.csv[0], ax)
    else:
        cols = [c for c in args.columns.split(",") if c]
        plot_runs(args.csv, cols, args.stretch, ax)
    fig.tight_layout()
    fig.savefig(args.output, dpi=150)
    print(f"wrote {args.output}", file=sys.stderr)


if __name__ == "__main__":
    main()
