"""Figures written straight to files.

Everything here builds a :class:`matplotlib.figure.Figure` without pyplot,
so rendering works headless and leaves no global state behind.
"""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib as mpl
import numpy as np
from matplotlib.figure import Figure

from .taxonomy import VOID, Level

STYLE = {
    "font.size": 9,
    "axes.titlesize": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 120,
    "savefig.bbox": "tight",
}

LEVEL_RGB = {
    VOID: (0, 0, 0),
    Level.IMPOSSIBLE: (204, 40, 40),
    Level.POSSIBLE: (235, 200, 40),
    Level.PREFERABLE: (40, 170, 60),
}

BAR_COLORS = ["#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3"]


def level_rgb(levels: np.ndarray) -> np.ndarray:
    """Red/yellow/green rendering of a level mask (void black)."""
    lut = np.zeros((256, 3), dtype=np.uint8)
    for lvl, rgb in LEVEL_RGB.items():
        lut[int(lvl)] = rgb
    return lut[np.asarray(levels).astype(np.uint8)]


def _save(fig: Figure, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path)
    return path


def _show_image(ax, image):
    img = np.asarray(image)
    if img.ndim == 3 and img.shape[-1] == 1:
        img = img[..., 0]
    ax.imshow(img, cmap="gray" if img.ndim == 2 else None, vmin=0, vmax=1 if img.dtype.kind == "f" else 255)
    ax.set_axis_off()


def weightmap_figure(levels, distance, raw, weights, path, image=None, w_max: float = 10.0) -> Path:
    """Level mask, edge distance, raw and normalised weight, side by side."""
    panels = [("levels", level_rgb(levels), None), ("edge distance", distance, "magma"),
              ("raw weight", raw, "viridis"), (f"weight (0..{w_max:g})", weights, "viridis")]
    if image is not None:
        panels.insert(0, ("image", image, "gray"))
    with mpl.rc_context(STYLE):
        fig = Figure(figsize=(2.6 * len(panels), 2.0))
        axes = fig.subplots(1, len(panels))
        for ax, (title, arr, cmap) in zip(axes, panels):
            if title == "image":
                _show_image(ax, arr)
            elif cmap is None:
                ax.imshow(arr)
                ax.set_axis_off()
            else:
                im = ax.imshow(arr, cmap=cmap, vmin=0, vmax=w_max if title.startswith("weight") else None)
                fig.colorbar(im, ax=ax, fraction=0.046, pad=0.02)
                ax.set_axis_off()
            ax.set_title(title)
        return _save(fig, path)


def prediction_figure(image, pred_levels, rendered, path, gt_levels=None) -> Path:
    """Input, argmax levels, affordance map (and ground truth when known)."""
    n = 3 + (gt_levels is not None)
    with mpl.rc_context(STYLE):
        fig = Figure(figsize=(2.6 * n, 2.0))
        axes = fig.subplots(1, n)
        _show_image(axes[0], image)
        axes[0].set_title("image")
        axes[1].imshow(level_rgb(pred_levels))
        axes[1].set_title("argmax levels")
        im = axes[2].imshow(rendered, cmap="RdYlGn", vmin=0, vmax=1)
        axes[2].set_title("affordance")
        fig.colorbar(im, ax=axes[2], fraction=0.046, pad=0.02)
        if gt_levels is not None:
            axes[3].imshow(level_rgb(gt_levels))
            axes[3].set_title("ground truth")
        for ax in axes:
            ax.set_axis_off()
        return _save(fig, path)


def confusion_figure(conf, path, weighted: bool = False) -> Path:
    """Row-normalised confusion matrix with raw counts annotated."""
    m = conf.weighted_counts if weighted else conf.counts
    rows = m.sum(axis=1, keepdims=True)
    frac = np.divide(m, rows, out=np.zeros(m.shape, dtype=float), where=rows > 0)
    names = [Level(l).label for l in conf.ranks.levels]
    with mpl.rc_context(STYLE):
        fig = Figure(figsize=(3.4, 3.0))
        ax = fig.subplots()
        ax.imshow(frac, cmap="Blues", vmin=0, vmax=1)
        for (i, j), v in np.ndenumerate(m):
            txt = f"{v:.0f}" if not weighted else f"{v:.1f}"
            ax.text(j, i, f"{txt}\n{frac[i, j]:.1%}", ha="center", va="center",
                    color="white" if frac[i, j] > 0.6 else "black", fontsize=7)
        ax.set_xticks(range(len(names)), names)
        ax.set_yticks(range(len(names)), names)
        ax.set_xlabel("predicted")
        ax.set_ylabel("ground truth")
        ax.set_title("weighted confusion" if weighted else "confusion")
        return _save(fig, path)


def metrics_bars(reports: Sequence, path, metrics=("red R %", "red R_w %", "green P %", "green P_w %", "MS %")) -> Path:
    """Grouped bars of the percentage columns, one group per metric."""
    with mpl.rc_context(STYLE):
        fig = Figure(figsize=(1.2 * len(metrics) + 1.5, 2.6))
        ax = fig.subplots()
        x = np.arange(len(metrics))
        width = 0.8 / max(len(reports), 1)
        for k, rep in enumerate(reports):
            row = rep.row()
            vals = [float(row[m]) if row[m] != "n/a" else np.nan for m in metrics]
            ax.bar(x + k * width - 0.4 + width / 2, vals, width, label=rep.label or f"run {k}",
                   color=BAR_COLORS[k % len(BAR_COLORS)])
        ax.set_xticks(x, metrics)
        ax.set_ylabel("%")
        ax.set_ylim(0, 100)
        ax.legend(frameon=False, fontsize=7)
        return _save(fig, path)


def grouped_bars(rows: dict, columns: Sequence[str], path, ylabel: str = "RMSE") -> Path:
    """One bar per row name inside each column group (e.g. class definition x test set)."""
    names = list(rows)
    with mpl.rc_context(STYLE):
        fig = Figure(figsize=(1.6 * len(columns) + 2.5, 2.6))
        ax = fig.subplots()
        x = np.arange(len(columns))
        width = 0.8 / max(len(names), 1)
        for k, name in enumerate(names):
            vals = [np.nan if rows[name].get(c) is None else rows[name][c] for c in columns]
            ax.bar(x + k * width - 0.4 + width / 2, vals, width, label=name, color=BAR_COLORS[k % len(BAR_COLORS)])
        ax.set_xticks(x, columns)
        ax.set_ylabel(ylabel)
        ax.legend(frameon=False, fontsize=7)
        return _save(fig, path)


def loss_curves(history: dict, path) -> Path:
    with mpl.rc_context(STYLE):
        fig = Figure(figsize=(3.6, 2.4))
        ax = fig.subplots()
        for key, style in (("train_loss", "-"), ("val_loss", "--")):
            vals = history.get(key) or []
            ax.plot(range(1, len(vals) + 1), vals, style, label=key.replace("_", " "))
        ax.set_xlabel("epoch")
        ax.set_ylabel("loss")
        ax.legend(frameon=False)
        return _save(fig, path)


def soft_label_figure(table: np.ndarray, rank_values, path, title: str = "") -> Path:
    """One bar group per target level, showing its soft label vector."""
    table = np.asarray(table)
    k = len(rank_values)
    with mpl.rc_context(STYLE):
        fig = Figure(figsize=(1.3 * k + 1.5, 2.4))
        ax = fig.subplots()
        x = np.arange(k)
        width = 0.8 / k
        for i in range(k):
            ax.bar(x + i * width - 0.4 + width / 2, table[:, i], width, label=f"rank {rank_values[i]:g}",
                   color=BAR_COLORS[i % len(BAR_COLORS)])
        ax.set_xticks(x, [f"target {r:g}" for r in rank_values])
        ax.set_ylim(0, 1)
        ax.set_ylabel("label mass")
        if title:
            ax.set_title(title)
        ax.legend(frameon=False, fontsize=7)
        return _save(fig, path)
