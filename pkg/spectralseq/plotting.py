"""Vector figures for benchmark results (SVG, reproducible bytes)."""
from __future__ import annotations

from pathlib import Path
from typing import Dict, Iterable, Mapping, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

ARCH_LABELS = {"fno2d": "FNO-2d", "frnn": "F-RNN", "rnn": "RNN", "crnn": "C-RNN"}
ARCH_MARKERS = {"fno2d": "o", "frnn": "s", "rnn": "^", "crnn": "D"}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with matplotlib.rc_context({"svg.hashsalt": "spectralseq", "svg.fonttype": "none"}):
        fig.savefig(path, format=path.suffix.lstrip(".") or "svg", metadata={"Date": None})
    plt.close(fig)
    return path


def plot_noise_scatter(rows: Iterable[Mapping], path, title: Optional[str] = None) -> Path:
    """
    Scatter of log10(MSE) against noise factor N, one series per architecture.

    Parameters
    ----------
    rows : iterable of mappings
        Each with keys ``arch``, ``N`` and ``mse``.
    path : path-like
        Output file; the suffix picks the format (``.svg`` recommended).
    """
    series: Dict[str, list] = {}
    for row in rows:
        series.setdefault(row["arch"], []).append((float(row["N"]), float(row["mse"])))
    fig, ax = plt.subplots(figsize=(5, 4))
    for arch in sorted(series):
        pts = sorted(series[arch])
        ax.plot([n for n, _ in pts], [np.log10(m) for _, m in pts],
                marker=ARCH_MARKERS.get(arch, "o"), linestyle="--", label=ARCH_LABELS.get(arch, arch))
    ax.set_xlabel("noise factor N")
    ax.set_ylabel("log10(MSE)")
    if title:
        ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    return _save(fig, path)


def plot_rollout_snapshots(truth: np.ndarray, predictions: Mapping[str, np.ndarray], path,
                           frames: Optional[Sequence[int]] = None, title: Optional[str] = None) -> Path:
    """
    Ground truth and predictions side by side at a few rollout frames.

    Parameters
    ----------
    truth : np.ndarray
        (nx, ny, T_out) target frames of one simulation.
    predictions : mapping
        Architecture name -> (nx, ny, T_out) prediction.
    frames : sequence of int, optional
        Frame indices to show; default first, middle and last.
    """
    T_out = truth.shape[-1]
    if frames is None:
        frames = sorted({0, T_out // 2, T_out - 1})
    rows = [("truth", truth)] + [(ARCH_LABELS.get(k, k), v) for k, v in predictions.items()]
    vmin, vmax = float(truth.min()), float(truth.max())
    fig, axes = plt.subplots(len(rows), len(frames), figsize=(2.4 * len(frames), 2.2 * len(rows)), squeeze=False)
    for i, (label, data) in enumerate(rows):
        for j, k in enumerate(frames):
            ax = axes[i, j]
            im = ax.imshow(data[..., k].T, origin="lower", cmap="RdBu_r", vmin=vmin, vmax=vmax)
            ax.set_xticks([])
            ax.set_yticks([])
            if i == 0:
                ax.set_title(f"step {k + 1}")
            if j == 0:
                ax.set_ylabel(label)
    fig.colorbar(im, ax=axes, shrink=0.8)
    if title:
        fig.suptitle(title)
    return _save(fig, path)
