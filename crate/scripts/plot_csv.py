#!/usr/bin/env python3
"""Plot CSV files written by `qsync run`.

    python3 scripts/plot_csv.py out/fig2_analog.csv out/fig2_digital.csv -o fig2.png
    python3 scripts/plot_csv.py out/fig4_mi_feedback_on.csv -o fig4.png

Time series get one panel per observable. Files with `delta_a,j2,...`
columns are drawn as heat maps. Fidelity files get one curve per `kappa_t`.
"""

import argparse

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def read(path):
    with open(path) as f:
        lines = [l for l in f if not l.startswith("#")]
    header = lines[0].strip().split(",")
    rows = [[float(c) if c else np.nan for c in l.strip().split(",")] for l in lines[1:]]
    return header, np.array(rows)


def series(ax_grid, path, header, data):
    t = data[:, 0]
    for ax, k in zip(ax_grid, range(1, len(header))):
        ax.plot(t, data[:, k], label=path)
        ax.set_title(header[k])


def heatmap(ax, path, header, data):
    d, j, v = data[:, 0], data[:, 1], data[:, 2]
    nd, nj = len(np.unique(d)), len(np.unique(j))
    im = ax.imshow(v.reshape(nd, nj), origin="lower", aspect="auto", extent=[j.min(), j.max(), d.min(), d.max()])
    ax.set_xlabel("J2")
    ax.set_ylabel("delta_A")
    ax.set_title(path)
    plt.colorbar(im, ax=ax)


def fidelity(ax, header, data):
    for kt in np.unique(data[:, 0]):
        rows = data[data[:, 0] == kt]
        ax.semilogx(rows[:, 1], rows[:, 3], "o-", label=f"kappa t = {kt:g}")
    ax.set_xlabel("n")
    ax.set_ylabel("fidelity")
    ax.legend()


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("files", nargs="+")
    ap.add_argument("-o", "--output", default="plot.png")
    args = ap.parse_args()

    tables = [(p, *read(p)) for p in args.files]
    header = tables[0][1]
    if header[:2] == ["delta_a", "j2"]:
        fig, axes = plt.subplots(1, len(tables), figsize=(6 * len(tables), 5), squeeze=False)
        for ax, (p, h, d) in zip(axes[0], tables):
            heatmap(ax, p, h, d)
    elif "fidelity" in header:
        fig, ax = plt.subplots(figsize=(6, 4))
        for p, h, d in tables:
            fidelity(ax, h, d)
    else:
        n = len(header) - 1
        cols = 3
        fig, axes = plt.subplots((n + cols - 1) // cols, cols, figsize=(12, 3 * ((n + cols - 1) // cols)), squeeze=False)
        for p, h, d in tables:
            series(axes.flat, p, h, d)
        axes.flat[0].legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(args.output, dpi=120)


if __name__ == "__main__":
    main()
