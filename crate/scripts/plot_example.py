"""Plot the output of `sdae example` in the stereographic plane.

usage: python scripts/plot_example.py figure/ [out.png]
"""
import sys
from pathlib import Path

import matplotlib.pyplot as plt
import pandas as pd


def chart(df):
    d = 1.0 - df["x3"]
    return df["x1"] / d, df["x2"] / d


def main():
    root = Path(sys.argv[1] if len(sys.argv) > 1 else "figure")
    out = sys.argv[2] if len(sys.argv) > 2 else root / "example.png"
    fig, axes = plt.subplots(1, 2, figsize=(10, 5), sharex=True, sharey=True)
    curve = pd.read_csv(root / "constraint_curve.csv")
    for ax, prefix in zip(axes, ["unconstrained", "constrained"]):
        for f in sorted(root.glob(f"{prefix}_*.csv")):
            ax.plot(*chart(pd.read_csv(f)), lw=0.8)
        ax.plot(curve["X"], curve["Y"], "k.", ms=1)
        ax.set_title(prefix)
        ax.set_aspect("equal")
    fig.savefig(out, dpi=150)


if __name__ == "__main__":
    main()
