"""Matplotlib helpers for comparison grids, transfer heatmaps and lambda curves."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

RC = {
    "font.size": 8,
    "axes.titlesize": 8,
    "axes.labelsize": 8,
    "xtick.labelsize": 7,
    "ytick.labelsize": 7,
    "figure.dpi": 100,
    "savefig.dpi": 150,
    # Fixed metadata keeps saved PNGs byte-identical across runs.
    "svg.hashsalt": "recoproc",
}


def _style():
    return plt.rc_context(RC)


def comparison_grid(columns, titles, captions=None, row_labels=None, cell_size=1.4):
    """Side-by-side image grid.

    ``columns`` is a list of image stacks (one per column, each N x H x W x 3);
    ``captions[c][r]`` is printed under cell (r, c).
    """
    n_cols = len(columns)
    n_rows = len(columns[0])
    with _style():
        fig, axes = plt.subplots(n_rows, n_cols, figsize=(cell_size * n_cols, cell_size * 1.25 * n_rows),
                                 squeeze=False)
        for c in range(n_cols):
            for r in range(n_rows):
                ax = axes[r][c]
                ax.imshow(np.clip(columns[c][r], 0, 1), interpolation="nearest")
                ax.set_xticks([])
                ax.set_yticks([])
                if r == 0:
                    ax.set_title(titles[c])
                if captions is not None and captions[c] is not None:
                    ax.set_xlabel(captions[c][r], fontsize=6)
                if c == 0 and row_labels is not None:
                    ax.set_ylabel(row_labels[r], fontsize=6)
        fig.tight_layout()
    return fig


def transfer_heatmap(matrix, title="Transfer accuracy"):
    grid = np.vstack([[matrix.baseline[c] for c in matrix.cols], matrix.grid()]) * 100
    rows = ["plain"] + list(matrix.rows)
    with _style():
        fig, ax = plt.subplots(figsize=(1.2 + 0.9 * len(matrix.cols), 0.9 + 0.5 * len(rows)))
        ax.imshow(grid, cmap="viridis", aspect="auto")
        ax.set_xticks(range(len(matrix.cols)), [f"eval {c}" for c in matrix.cols])
        ax.set_yticks(range(len(rows)), [r if r == "plain" else f"RA w/ {r}" for r in rows])
        for i, r in enumerate(rows):
            for j, c in enumerate(matrix.cols):
                weight = "bold" if r == c else "normal"
                ax.text(j, i, f"{grid[i, j]:.1f}", ha="center", va="center", color="w", fontweight=weight)
        ax.set_title(title)
        fig.tight_layout()
    return fig


def lambda_curve(rows, title="Quality / accuracy vs lambda"):
    lams = [r.lam for r in rows]
    xs = np.arange(len(lams))
    with _style():
        fig, ax1 = plt.subplots(figsize=(3.6, 2.4))
        ax1.plot(xs, [r.psnr for r in rows], "o-", color="tab:blue")
        ax1.set_ylabel("PSNR (dB)", color="tab:blue")
        ax1.set_xticks(xs, [f"{l:g}" for l in lams])
        ax1.set_xlabel("lambda")
        ax2 = ax1.twinx()
        ax2.plot(xs, [100 * r.accuracy for r in rows], "s--", color="tab:red")
        ax2.set_ylabel("accuracy (%)", color="tab:red")
        ax1.set_title(title)
        fig.tight_layout()
    return fig


def save(fig, path):
    fig.savefig(path, format="png", metadata={"Software": None})
    plt.close(fig)
    return path
