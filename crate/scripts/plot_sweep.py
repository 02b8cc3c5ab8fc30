#!/usr/bin/env python3
"""Recall/QPS plot data from a `caps sweep` CSV.

Prints one series per (strategy, mode, B, h) as `recall qps m` lines,
sorted by m, plus the Pareto frontier over all rows. With --png, also
draws the curves (needs matplotlib).
"""

import argparse
import csv
import sys
from collections import defaultdict

SCHEMA = [
    "config_id", "strategy", "mode", "b", "h", "m", "absence", "recall",
    "mean_latency_us", "qps", "candidates_scanned", "filter_passes",
    "distance_computations", "index_overhead_bytes", "build_seconds",
]


def load(path):
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames[: len(SCHEMA)] != SCHEMA:
            sys.exit(f"{path}: unexpected columns {reader.fieldnames}")
        return list(reader)


def series(rows):
    out = defaultdict(list)
    for r in rows:
        key = (r["strategy"], r["mode"], r["b"], r["h"], r.get("survivors", "0"))
        out[key].append((int(r["m"]), float(r["recall"]), float(r["qps"])))
    for pts in out.values():
        pts.sort()
    return out


def frontier(rows):
    pts = sorted(((float(r["recall"]), float(r["qps"]), r["config_id"]) for r in rows), reverse=True)
    best, front = -1.0, []
    for recall, qps, cid in pts:
        if qps > best:
            front.append((recall, qps, cid))
            best = qps
    return front


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("csv")
    ap.add_argument("--png", help="also write a recall/QPS figure here")
    args = ap.parse_args()
    rows = load(args.csv)
    curves = series(rows)
    for (strategy, mode, b, h, s), pts in sorted(curves.items()):
        label = f"{strategy} {mode} B={b} h={h}" + (f" survivors={s}" if s != "0" else "")
        print(f"# {label}")
        for m, recall, qps in pts:
            print(f"{recall:.4f} {qps:.1f} {m}")
        print()
    print("# pareto frontier (recall qps config_id)")
    for recall, qps, cid in frontier(rows):
        print(f"{recall:.4f} {qps:.1f} {cid}")

    if args.png:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(7, 5))
        for (strategy, mode, b, h, s), pts in sorted(curves.items()):
            label = f"{strategy} B={b} h={h}" + (f" S={s}" if s != "0" else "")
            ax.plot([p[1] for p in pts], [p[2] for p in pts], marker="o", ms=3, label=label)
        ax.set_xlabel("recall")
        ax.set_ylabel("queries per second")
        ax.set_yscale("log")
        ax.legend(fontsize=7)
        fig.tight_layout()
        fig.savefig(args.png, dpi=120)


if __name__ == "__main__":
    main()
