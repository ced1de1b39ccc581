"""Render heatmaps from the CSV files written by ``trek smooth``.

    python3 docs/plot_surface.py out/            # surface.csv (+ truth.csv) -> surface.png
    python3 docs/plot_surface.py out/ --log      # also residuals.csv on a log scale

Needs matplotlib, which the package itself does not depend on.
"""

import argparse
import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def read_surface(path):
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    m = int(max(int(r["k1"]) for r in rows))
    z = np.zeros((m, m))
    for r in rows:
        z[int(r["k1"]) - 1, int(r["k2"]) - 1] = float(r["value"])
    return z


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("outdir", type=Path)
    p.add_argument("--log", action="store_true", help="add the residual trace panel")
    args = p.parse_args(argv)

    panels = [("estimate", args.outdir / "surface.csv")]
    if (args.outdir / "truth.csv").exists():
        panels.insert(0, ("truth", args.outdir / "truth.csv"))
    ncols = len(panels) + bool(args.log)
    fig, axes = plt.subplots(1, ncols, figsize=(4.5 * ncols, 4), squeeze=False)
    for ax, (title, path) in zip(axes[0], panels):
        im = ax.imshow(read_surface(path), origin="lower", extent=(0, 1, 0, 1), cmap="viridis")
        ax.set_title(title)
        fig.colorbar(im, ax=ax, fraction=0.046)
    if args.log:
        with open(args.outdir / "residuals.csv", encoding="utf-8", newline="") as fh:
            delta = [float(r["delta"]) for r in csv.DictReader(fh)]
        ax = axes[0][-1]
        ax.semilogy(delta)
        ax.set_xlabel("iteration")
        ax.set_title("squared projected residual")
    fig.tight_layout()
    fig.savefig(args.outdir / "surface.png", dpi=120)
    print(args.outdir / "surface.png")


if __name__ == "__main__":
    main()
