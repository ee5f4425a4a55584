"""Figure rendering for reports: depth-map dumps, loss curves, range charts."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

COLORMAP = "viridis"  # fixed perceptual map for all depth dumps


def save_depth_image(directory, stem, depth) -> str:
    """Colormapped depth dump; min/max are annotated in the filename."""
    depth = np.asarray(depth, dtype=np.float64)
    lo, hi = float(depth.min()), float(depth.max())
    path = f"{directory}/{stem}_min{lo:.3g}_max{hi:.3g}.png"
    plt.imsave(path, depth, cmap=COLORMAP, vmin=lo, vmax=hi if hi > lo else lo + 1e-6)
    return path


def save_loss_curves(rows, path) -> None:
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    steps = [r["step"] for r in rows]
    ax1.plot(steps, [r["total"] for r in rows], lw=0.8)
    ax1.set_xlabel("step")
    ax1.set_ylabel("total loss")
    ax1.set_yscale("log")
    for key in ("L_depth", "L_grad", "L_rot", "L_trans"):
        ax2.plot(steps, [max(r[key], 1e-12) for r in rows], lw=0.8, label=key)
    ax2.set_xlabel("step")
    ax2.set_yscale("log")
    ax2.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def save_range_chart(table, path) -> None:
    """Bar chart of per-depth-range scale-invariant error."""
    fig, ax = plt.subplots(figsize=(6, 4))
    labels = [f"{lo:g}-{hi:g}" for lo, hi, _, _ in table]
    values = [err for _, _, err, _ in table]
    ax.bar(labels, values, color="tab:blue")
    ax.set_xlabel("depth range (m)")
    ax.set_ylabel("sc-inv")
    ax.set_title("scale-invariant error by depth range")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def save_ablation_chart(rows, path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    metrics = ("sc_inv", "abs_inv", "abs_rel")
    x = np.arange(len(metrics))
    width = 0.8 / len(rows)
    for i, row in enumerate(rows):
        ax.bar(x + i * width, [row[m] for m in metrics], width, label=row["method"])
    ax.set_xticks(x + width * (len(rows) - 1) / 2)
    ax.set_xticklabels(metrics)
    ax.set_ylabel("error")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
