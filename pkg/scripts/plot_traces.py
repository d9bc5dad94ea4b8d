"""Plot per-node transmission probabilities from a conjmac CSV table.

Works on learn_<rule>.csv, adaptive_<rule>.csv and simulate.csv, and on
scan_<n>.csv (rho CDF). Needs matplotlib (the "plot" extra).

    python scripts/plot_traces.py out/learn/learn_best_response.csv -o fig.png
"""
from __future__ import annotations

import argparse
import csv
from collections import defaultdict
from pathlib import Path


def read_rows(path: Path) -> list[dict]:
    with path.open(newline="") as fh:
        return list(csv.DictReader(fh))


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description="plot a conjmac output table")
    ap.add_argument("table", type=Path)
    ap.add_argument("-o", "--output", type=Path, help="image file; shows a window when omitted")
    args = ap.parse_args(argv)

    import matplotlib

    if args.output:
        matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = read_rows(args.table)
    if not rows:
        raise SystemExit(f"{args.table}: empty table")
    fig, ax = plt.subplots(figsize=(6, 4))
    if "rho" in rows[0]:
        ax.step([float(r["rho"]) for r in rows], [float(r["cdf"]) for r in rows], where="post")
        ax.axvline(1.0, color="grey", lw=0.8, ls="--")
        ax.set_xlabel("spectral radius")
        ax.set_ylabel("CDF")
    else:
        x_key = "iteration" if "iteration" in rows[0] else "stage"
        series = defaultdict(list)
        for r in rows:
            series[int(r["node"])].append((int(r[x_key]), float(r["p"])))
        for node, pts in sorted(series.items()):
            xs, ys = zip(*pts)
            ax.plot(xs, ys, lw=1, label=f"node {node}")
        ax.set_xlabel(x_key)
        ax.set_ylabel("transmission probability")
        if len(series) <= 10:
            ax.legend(fontsize="small")
    ax.set_title(args.table.stem)
    fig.tight_layout()
    if args.output:
        fig.savefig(args.output, dpi=120)
    else:
        plt.show()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
