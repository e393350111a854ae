"""Plot a run directory: streamlines, free boundaries, interface and pressure.

    python3 scripts/plot_run.py gravjet_run --out run.png      (needs matplotlib)
"""
import argparse
import csv
from pathlib import Path

import numpy as np


def read_csv(path):
    with open(path) as fh:
        r = csv.reader(fh)
        head = next(r)
        rows = [[float(v) for v in rec] for rec in r]
    return head, np.array(rows).reshape(-1, len(head))


def main(argv=None):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("run")
    ap.add_argument("--out", default="run.png")
    args = ap.parse_args(argv)
    d = Path(args.run)
    head, a = read_csv(d / "fields.csv")
    x, y = np.unique(a[:, 0]), np.unique(a[:, 1])
    shape = (len(x), len(y))
    psi = a[:, 2].reshape(shape)
    p = a[:, 5].reshape(shape)
    fig, (ax0, ax1) = plt.subplots(2, 1, figsize=(11, 7), sharex=True)
    ax0.contour(x, y, psi.T, levels=np.linspace(0, np.nanmax(psi), 25), linewidths=0.5)
    if (d / "boundaries.csv").exists():
        _, b = read_csv(d / "boundaries.csv")
        for which, c in ((1, "C3"), (2, "C1")):
            m = b[:, 2] == which
            ax0.plot(b[m, 1], b[m, 0], ".", ms=2, color=c)
    if (d / "interface.csv").exists():
        _, k = read_csv(d / "interface.csv")
        ax0.plot(k[:, 1], k[:, 0], "k-", lw=1)
    ax0.set_ylabel("y")
    ax0.set_aspect("equal")
    im = ax1.pcolormesh(x, y, p.T, shading="auto")
    fig.colorbar(im, ax=ax1, label="p")
    ax1.set_xlabel("x")
    ax1.set_ylabel("y")
    ax1.set_aspect("equal")
    fig.tight_layout()
    fig.savefig(args.out, dpi=150)


if __name__ == "__main__":
    main()
