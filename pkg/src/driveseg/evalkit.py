"""Severity-aware segmentation metrics.

All pixel metrics derive from a :class:`ConfusionMatrix` over the levels
of a :class:`~driveseg.ordinal.RankSet`; rows are ground truth, columns
predictions. Undefined rates are ``None`` and print as ``n/a``.
"""
from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .ordinal import RankSet, expected_rank
from .taxonomy import VOID, Level

DEFAULT_THRESHOLDS = (0.5, 0.75)


class ConfusionMatrix:
    def __init__(self, ranks: RankSet = RankSet()):
        self.ranks = ranks
        k = len(ranks)
        self.counts = np.zeros((k, k), dtype=np.int64)
        self.weighted_counts = np.zeros((k, k), dtype=np.float64)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def copy(self) -> "ConfusionMatrix":
        out = ConfusionMatrix(self.ranks)
        out.counts = self.counts.copy()
        out.weighted_counts = self.weighted_counts.copy()
        return out

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if other.ranks != self.ranks:
            raise ValueError("cannot merge confusion matrices over different rank sets")
        out = self.copy()
        out.counts += other.counts
        out.weighted_counts += other.weighted_counts
        return out

    def accumulate(self, pred, gt, weights=None) -> "ConfusionMatrix":
        """Add one image in place; void ground-truth pixels are skipped."""
        pred, gt = np.asarray(pred), np.asarray(gt)
        if pred.shape != gt.shape:
            raise ValueError(f"prediction {pred.shape} and ground truth {gt.shape} shapes differ")
        if weights is not None:
            weights = np.asarray(weights, dtype=np.float64)
            if weights.shape != gt.shape:
                raise ValueError("weight map shape differs from the ground truth")
        lut = self.ranks.level_lut()
        keep = gt != VOID
        g = lut[gt[keep].astype(np.int64)]
        p = lut[pred[keep].astype(np.int64)]
        if (g < 0).any():
            raise ValueError(f"ground truth holds levels outside the rank set {self.ranks.levels}")
        if (p < 0).any():
            raise ValueError(f"prediction holds levels outside the rank set {self.ranks.levels}")
        k = len(self.ranks)
        flat = g * k + p
        self.counts += np.bincount(flat, minlength=k * k).reshape(k, k)
        w = weights[keep] if weights is not None else np.ones(flat.size)
        np.add.at(self.weighted_counts.reshape(-1), flat, w)
        return self

    # -- derived metrics --------------------------------------------------

    def _matrix(self, weighted: bool):
        return self.weighted_counts if weighted else self.counts

    def recall(self, level, weighted: bool = False):
        m = self._matrix(weighted)
        i = self.ranks.index_of(level)
        den = m[i].sum()
        return float(m[i, i] / den) if den > 0 else None

    def precision(self, level, weighted: bool = False):
        m = self._matrix(weighted)
        i = self.ranks.index_of(level)
        den = m[:, i].sum()
        return float(m[i, i] / den) if den > 0 else None

    def accuracy(self):
        return float(np.trace(self.counts) / self.total) if self.total else None

    def _rank_diff(self) -> np.ndarray:
        r = np.asarray(self.ranks.values)
        return r[None, :] - r[:, None]

    def rmse(self):
        if not self.total:
            return None
        return math.sqrt(float((self.counts * self._rank_diff() ** 2).sum()) / self.total)

    def mistakes(self) -> int:
        return self.total - int(np.trace(self.counts))

    def mistake_severity(self):
        n = self.mistakes()
        if n == 0:
            return None
        return float((self.counts * _severity_terms(self.ranks)).sum() / n)


def _severity_terms(ranks: RankSet) -> np.ndarray:
    span = ranks.r_max - ranks.r_min - 1
    if span <= 0:
        raise ValueError("mistake severity needs r_max - r_min > 1")
    r = np.asarray(ranks.values)
    d = np.abs(r[None, :] - r[:, None])
    return np.where(d > 0, (d - 1) / span, 0.0)


def accumulate(pred, gt, weights=None, conf: ConfusionMatrix | None = None,
               ranks: RankSet = RankSet()) -> ConfusionMatrix:
    conf = conf.copy() if conf is not None else ConfusionMatrix(ranks)
    return conf.accumulate(pred, gt, weights)


def precision_recall(conf: ConfusionMatrix, level, weighted: bool = False):
    return conf.precision(level, weighted), conf.recall(level, weighted)


def rmse(pred, gt, ranks: RankSet = RankSet()) -> float:
    conf = accumulate(pred, gt, ranks=ranks)
    if conf.total == 0:
        raise ValueError("RMSE needs at least one non-void pixel")
    return conf.rmse()


def mistake_severity(pred, gt, ranks: RankSet = RankSet()) -> float:
    """Mean normalised rank error over wrong pixels; 0.0 if nothing is wrong
    (check :meth:`ConfusionMatrix.mistakes` to tell the cases apart)."""
    ms = accumulate(pred, gt, ranks=ranks).mistake_severity()
    return 0.0 if ms is None else ms


# -- obstacle boxes --------------------------------------------------------

Box = tuple  # (x0, y0, x1, y1), half-open


def _check_boxes(boxes, shape):
    if not boxes:
        raise ValueError("instance recall needs at least one box")
    H, W = shape
    for x0, y0, x1, y1 in boxes:
        if not (0 <= x0 < x1 <= W and 0 <= y0 < y1 <= H):
            raise ValueError(f"box {(x0, y0, x1, y1)} is empty or outside the {W}x{H} image")


def instance_recall(pred, boxes: Sequence[Box], threshold: float = 0.5):
    """(pixel recall over the union of boxes, fraction of boxes with >= threshold impossible pixels)."""
    if not 0 < threshold <= 1:
        raise ValueError("threshold must lie in (0, 1]")
    counts = box_counts(pred, boxes)
    return _recalls(counts, threshold)


def box_counts(pred, boxes: Sequence[Box]) -> dict:
    """Raw tallies so recalls can be pooled over many images."""
    pred = np.asarray(pred)
    _check_boxes(boxes, pred.shape)
    hit = pred == Level.IMPOSSIBLE
    union = np.zeros(pred.shape, dtype=bool)
    fractions = []
    for x0, y0, x1, y1 in boxes:
        union[y0:y1, x0:x1] = True
        fractions.append(float(hit[y0:y1, x0:x1].mean()))
    return {"union_pixels": int(union.sum()), "union_hits": int((hit & union).sum()), "fractions": fractions}


def _recalls(counts: dict, threshold: float):
    pixel = counts["union_hits"] / counts["union_pixels"] if counts["union_pixels"] else None
    fr = counts["fractions"]
    inst = sum(f >= threshold for f in fr) / len(fr) if fr else None
    return pixel, inst


def merge_box_counts(parts: Iterable[dict]) -> dict:
    out = {"union_pixels": 0, "union_hits": 0, "fractions": []}
    for p in parts:
        out["union_pixels"] += p["union_pixels"]
        out["union_hits"] += p["union_hits"]
        out["fractions"] += p["fractions"]
    return out


def read_boxes(path) -> dict:
    """``image_id x0 y0 x1 y1`` per line -> {image_id: [boxes]}."""
    boxes = defaultdict(list)
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 5:
            raise ValueError(f"{path}:{lineno}: expected 'image_id x0 y0 x1 y1'")
        try:
            boxes[parts[0]].append(tuple(int(float(v)) for v in parts[1:]))
        except ValueError:
            raise ValueError(f"{path}:{lineno}: box coordinates must be numbers") from None
    return dict(boxes)


def scale_boxes(boxes, src_shape, dst_shape):
    sy, sx = dst_shape[0] / src_shape[0], dst_shape[1] / src_shape[1]
    out = []
    for x0, y0, x1, y1 in boxes:
        b = (int(math.floor(x0 * sx)), int(math.floor(y0 * sy)), int(math.ceil(x1 * sx)), int(math.ceil(y1 * sy)))
        b = (max(0, b[0]), max(0, b[1]), min(dst_shape[1], b[2]), min(dst_shape[0], b[3]))
        if b[2] > b[0] and b[3] > b[1]:
            out.append(b)
    return out


# -- probabilistic maps ----------------------------------------------------

def affordance_map(probs, ranks: RankSet = RankSet()):
    """(expected rank per pixel, the same rescaled to [0, 1])."""
    e = expected_rank(probs, ranks)
    e = np.asarray(e, dtype=np.float64)
    return e, (e - ranks.r_min) / (ranks.r_max - ranks.r_min)


def affordance_rasters(rendered: np.ndarray, cmap: str = "RdYlGn"):
    """8-bit grayscale and colour-mapped RGB rasters of a [0, 1] affordance map."""
    from matplotlib import colormaps

    r = np.clip(rendered, 0.0, 1.0)
    gray = np.rint(r * 255).astype(np.uint8)
    color = (colormaps[cmap](r)[..., :3] * 255).round().astype(np.uint8)
    return gray, color


# -- reporting ---------------------------------------------------------------

COLUMNS = ("red R %", "red R_w %", "green P %", "green P_w %", "MS %", "RMSE")


@dataclass
class MetricsReport:
    recall: dict
    precision: dict
    recall_w: dict
    precision_w: dict
    rmse: float | None
    ms: float | None
    accuracy: float | None
    pixels: int
    samples: int = 0
    instance: dict = field(default_factory=dict)
    label: str = ""

    def row(self) -> dict:
        red, green = Level.IMPOSSIBLE.label, Level.PREFERABLE.label
        return {
            "red R %": _pct(self.recall.get(red)),
            "red R_w %": _pct(self.recall_w.get(red)),
            "green P %": _pct(self.precision.get(green)),
            "green P_w %": _pct(self.precision_w.get(green)),
            "MS %": _pct(self.ms),
            "RMSE": "n/a" if self.rmse is None else f"{self.rmse:.3f}",
        }

    def to_dict(self) -> dict:
        return {
            "label": self.label, "samples": self.samples, "pixels": self.pixels,
            "recall": self.recall, "precision": self.precision,
            "recall_w": self.recall_w, "precision_w": self.precision_w,
            "rmse": self.rmse, "ms": self.ms, "accuracy": self.accuracy,
            "instance": self.instance,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_text(self) -> str:
        return format_table([self], label_header="Learning")


def _pct(v) -> str:
    return "n/a" if v is None else f"{100 * v:.2f}"


def report(conf: ConfusionMatrix, samples: int = 0, instance: dict | None = None, label: str = "") -> MetricsReport:
    names = {lvl: Level(lvl).label for lvl in conf.ranks.levels}
    return MetricsReport(
        recall={n: conf.recall(l) for l, n in names.items()},
        precision={n: conf.precision(l) for l, n in names.items()},
        recall_w={n: conf.recall(l, True) for l, n in names.items()},
        precision_w={n: conf.precision(l, True) for l, n in names.items()},
        rmse=conf.rmse(),
        ms=conf.mistake_severity() if conf.ranks.r_max - conf.ranks.r_min > 1 else None,
        accuracy=conf.accuracy(),
        pixels=conf.total,
        samples=samples,
        instance=dict(instance or {}),
        label=label,
    )


def format_table(reports: Sequence[MetricsReport], label_header: str = "Learning",
                 columns: Sequence[str] = COLUMNS) -> str:
    rows = [[r.label or "-"] + [r.row()[c] for c in columns] for r in reports]
    header = [label_header] + list(columns)
    widths = [max(len(str(x)) for x in col) for col in zip(header, *rows)]
    fmt = lambda cells: "  ".join(str(c).ljust(w) if i == 0 else str(c).rjust(w)
                                  for i, (c, w) in enumerate(zip(cells, widths)))
    lines = [fmt(header), "  ".join("-" * w for w in widths)] + [fmt(r) for r in rows]
    return "\n".join(lines)


def format_rmse_table(rows: dict, columns: Sequence[str]) -> str:
    """Class-definition rows x test-set columns of RMSE values (3 decimals)."""
    header = ["Segmentation class definition"] + list(columns)
    body = [[name] + [("n/a" if vals.get(c) is None else f"{vals[c]:.3f}") for c in columns]
            for name, vals in rows.items()]
    widths = [max(len(x) for x in col) for col in zip(header, *body)]
    fmt = lambda cells: "  ".join(c.ljust(w) if i == 0 else c.rjust(w)
                                  for i, (c, w) in enumerate(zip(cells, widths)))
    return "\n".join([fmt(header), "  ".join("-" * w for w in widths)] + [fmt(r) for r in body])
