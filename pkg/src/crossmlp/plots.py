"""Figure rendering for run reports.

Everything draws through the Agg backend straight to files; nothing here
opens a window. Images arrive as float arrays in [-1, 1] (RGB, HxWx3) or
as single-channel maps (HxW) that get their own color scale.
"""

from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def _show_panel(ax, title: str, image: np.ndarray) -> None:
    if image.ndim == 3:
        ax.imshow(np.clip((image + 1.0) / 2.0, 0.0, 1.0))
    else:
        im = ax.imshow(image, cmap="viridis")
        plt.colorbar(im, ax=ax, fraction=0.046)
    ax.set_title(title, fontsize=8)
    ax.set_xticks([])
    ax.set_yticks([])


def save_panel_grid(panels: Sequence[Tuple[str, np.ndarray]], path,
                    n_cols: Optional[int] = None) -> Path:
    """One (title, image) subplot per panel, row-major."""
    path = Path(path)
    n = len(panels)
    n_cols = n_cols or min(n, 4)
    n_rows = (n + n_cols - 1) // n_cols
    fig, axes = plt.subplots(n_rows, n_cols,
                             figsize=(2.4 * n_cols, 2.6 * n_rows), squeeze=False)
    for ax in axes.flat:
        ax.axis("off")
    for ax, (title, image) in zip(axes.flat, panels):
        ax.axis("on")
        _show_panel(ax, title, image)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def save_loss_curves(history, path) -> Path:
    """Two panels: adversarial balance and the pixel/tv components."""
    path = Path(path)
    steps = [r.step for r in history]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.2))
    ax1.plot(steps, [r.g_total for r in history], label="g_total")
    ax1.plot(steps, [r.d for r in history], label="d")
    ax1.set_xlabel("step")
    ax1.set_yscale("symlog")
    ax1.legend(fontsize=8)
    ax2.plot(steps, [r.refined_img for r in history], label="pixel (image)")
    ax2.plot(steps, [r.refined_sem for r in history], label="pixel (semantic)")
    ax2.plot(steps, [r.s1_l1 for r in history], label="stage-1 L1")
    ax2.set_xlabel("step")
    ax2.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def save_metric_bars(labels: List[str], reports, path) -> Path:
    """Grouped bar chart of the pixel metrics across report rows."""
    path = Path(path)
    x = np.arange(len(labels))
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.2))
    ax1.bar(x, [r.ssim for r in reports], 0.6, color="tab:blue")
    ax1.set_xticks(x, labels, rotation=20, fontsize=8)
    ax1.set_title("SSIM", fontsize=9)
    width = 0.35
    ax2.bar(x - width / 2, [r.psnr for r in reports], width, label="PSNR")
    ax2.bar(x + width / 2, [r.sd for r in reports], width, label="SD")
    ax2.set_xticks(x, labels, rotation=20, fontsize=8)
    ax2.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path
