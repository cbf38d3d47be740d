"""Matplotlib figures written next to report outputs."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def disparity_panel(path, panels: dict, vmax: float | None = None) -> Path:
    """Side-by-side disparity maps; invalid pixels are drawn black."""
    path = Path(path)
    finite = [np.asarray(p)[np.isfinite(p)] for p in panels.values()]
    if vmax is None:
        vmax = max((float(f.max()) for f in finite if f.size), default=1.0)
    cmap = plt.get_cmap("viridis").copy()
    cmap.set_bad("black")
    fig, axes = plt.subplots(1, len(panels), figsize=(3.2 * len(panels), 3.2), squeeze=False)
    for ax, (title, disp) in zip(axes[0], panels.items()):
        im = ax.imshow(np.ma.masked_invalid(disp), cmap=cmap, vmin=0, vmax=vmax)
        ax.set_title(title)
        ax.set_axis_off()
    fig.colorbar(im, ax=axes[0].tolist(), shrink=0.8, label="disparity")
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path


def error_chart(path, results, metric: str = "nocc") -> Path:
    """Grouped bar chart of avgErr per dataset and post-processing mode."""
    path = Path(path)
    names = [name for name, _ in results]
    columns = list(results[0][1])
    x = np.arange(len(names))
    width = 0.8 / len(columns)
    fig, ax = plt.subplots(figsize=(max(4.0, 0.6 * len(names) + 2), 3.5))
    for k, col in enumerate(columns):
        ax.bar(x + k * width, [res[col].avg_err for _, res in results], width, label=col)
    ax.set_xticks(x + 0.4 - width / 2, names, rotation=45, ha="right")
    ax.set_ylabel(f"avgErr ({metric})")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path


def stage_chart(path, medians: dict) -> Path:
    """Horizontal bars of median seconds per pipeline stage."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(5, 0.4 * len(medians) + 1.2))
    ax.barh(list(medians), list(medians.values()))
    ax.set_xlabel("median seconds")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path
