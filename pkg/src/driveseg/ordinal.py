"""Soft ordinal labels, KL pixel loss and rank decoding (numpy)."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .taxonomy import VOID, Level

PROB_FLOOR = 1e-12
PENALTIES = ("sld", "ad")
LABEL_MODES = ("sord", "one_hot")


@dataclass(frozen=True)
class RankSet:
    """Rank values attached to an ordered tuple of levels.

    Channel ``i`` of any soft label over this set corresponds to
    ``levels[i]`` with rank ``values[i]``.
    """

    values: tuple[float, ...] = (1.0, 2.0, 3.0)
    levels: tuple[int, ...] = (Level.IMPOSSIBLE, Level.POSSIBLE, Level.PREFERABLE)

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        object.__setattr__(self, "levels", tuple(int(v) for v in self.levels))
        if len(self.values) != len(self.levels) or len(self.values) < 2:
            raise ValueError("ranks and levels must have equal length >= 2")
        if any(v <= 0 for v in self.values):
            raise ValueError("ranks must be strictly positive")
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise ValueError("ranks must be strictly increasing")
        if VOID in self.levels:
            raise ValueError("void cannot carry a rank")

    @classmethod
    def binary(cls) -> "RankSet":
        return cls((1.0, 3.0), (Level.IMPOSSIBLE, Level.PREFERABLE))

    @classmethod
    def for_space(cls, label_space: str) -> "RankSet":
        return cls() if label_space == "three_level" else cls.binary()

    def __len__(self) -> int:
        return len(self.values)

    @property
    def r_min(self) -> float:
        return self.values[0]

    @property
    def r_max(self) -> float:
        return self.values[-1]

    def index_of(self, level: int) -> int:
        try:
            return self.levels.index(int(level))
        except ValueError:
            raise ValueError(f"level {level} is not in rank set {self.levels}") from None

    def rank_of(self, level: int) -> float:
        return self.values[self.index_of(level)]

    def level_lut(self) -> np.ndarray:
        """Level value (0..3) -> channel index, -1 for void/absent."""
        lut = np.full(4, -1, dtype=np.int64)
        for i, lvl in enumerate(self.levels):
            lut[lvl] = i
        return lut

    def rank_lut(self) -> np.ndarray:
        """Level value (0..3) -> rank value, nan for void/absent."""
        lut = np.full(4, np.nan)
        for v, lvl in zip(self.values, self.levels):
            lut[lvl] = v
        return lut


def metric_penalty(r_t: float, r_i: float, kind: str = "sld") -> float:
    if kind == "sld":
        if r_t <= 0 or r_i <= 0:
            raise ValueError("SLD penalty needs strictly positive ranks")
        return (math.log(r_i) - math.log(r_t)) ** 2
    if kind == "ad":
        return abs(r_i - r_t)
    raise ValueError(f"unknown penalty kind {kind!r}")


def sord_from_penalties(phi: Sequence[float]) -> np.ndarray:
    """exp(-phi) normalised; shifted by min(phi) so large scales stay finite."""
    phi = np.asarray(phi, dtype=np.float64)
    e = np.exp(-(phi - phi.min()))
    return e / e.sum()


def sord_encode(target: int, ranks: RankSet = RankSet(), kind: str = "sld", scale: float = 1.0) -> np.ndarray:
    """SORD soft label for ``target`` level. ``scale`` multiplies the penalty."""
    if int(target) == VOID:
        raise ValueError("void pixels have no soft label; mask them before encoding")
    r_t = ranks.rank_of(target)
    phi = [scale * metric_penalty(r_t, r, kind) for r in ranks.values]
    return sord_from_penalties(phi)


def one_hot(target: int, ranks: RankSet = RankSet()) -> np.ndarray:
    if int(target) == VOID:
        raise ValueError("void pixels have no label")
    y = np.zeros(len(ranks))
    y[ranks.index_of(target)] = 1.0
    return y


@lru_cache(maxsize=None)
def label_table(ranks: RankSet = RankSet(), kind: str = "sld", mode: str = "sord") -> np.ndarray:
    """(K, K) lookup: row i is the soft label for channel i."""
    if mode == "sord":
        rows = [sord_encode(lvl, ranks, kind) for lvl in ranks.levels]
    elif mode == "one_hot":
        rows = [one_hot(lvl, ranks) for lvl in ranks.levels]
    else:
        raise ValueError(f"unknown label mode {mode!r}")
    table = np.stack(rows)
    table.setflags(write=False)
    return table


def encode_mask(levels: np.ndarray, ranks: RankSet = RankSet(), kind: str = "sld",
                mode: str = "sord") -> tuple[np.ndarray, np.ndarray]:
    """Returns ``(labels, void)``: labels is (..., K), zero at void pixels."""
    levels = np.asarray(levels)
    idx = ranks.level_lut()[levels.astype(np.int64)]
    void = idx < 0
    if (void & (levels != VOID)).any():
        bad = np.unique(levels[void & (levels != VOID)])
        raise ValueError(f"levels {bad.tolist()} are not part of the rank set {ranks.levels}")
    table = label_table(ranks, kind, mode)
    labels = table[np.where(void, 0, idx)]
    labels[void] = 0.0
    return labels, void


def _check_simplex(p: np.ndarray, name: str):
    if (p < 0).any() or not np.allclose(p.sum(axis=-1), 1.0, atol=1e-6):
        raise ValueError(f"{name} must be a normalised probability vector")


def kl_loss(y, y_hat) -> float | np.ndarray:
    """KL(y || y_hat) over the last axis, 0 ln 0 = 0, y_hat floored at 1e-12."""
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    _check_simplex(y, "y")
    _check_simplex(y_hat, "y_hat")
    q = np.maximum(y_hat, PROB_FLOOR)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(y > 0, y * (np.log(np.where(y > 0, y, 1.0)) - np.log(q)), 0.0)
    out = terms.sum(axis=-1)
    return float(out) if out.ndim == 0 else out


def batch_loss(targets, preds, void, weights=None) -> float:
    """Sum of (weighted) per-pixel KL over non-void pixels / #non-void pixels."""
    targets = np.asarray(targets, dtype=np.float64)
    preds = np.asarray(preds, dtype=np.float64)
    void = np.asarray(void, dtype=bool)
    if targets.shape != preds.shape or targets.shape[:-1] != void.shape:
        raise ValueError("targets, preds and void mask shapes disagree")
    keep = ~void
    n = int(keep.sum())
    if n == 0:
        raise ValueError("batch has no non-void pixels")
    per_pixel = kl_loss(targets[keep], preds[keep])
    if weights is not None:
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != void.shape:
            raise ValueError("weight map shape disagrees with the void mask")
        per_pixel = per_pixel * weights[keep]
    return float(per_pixel.sum() / n)


def decode_argmax(y_hat, ranks: RankSet = RankSet()):
    """Most probable level; ties go to the lower rank (np.argmax picks the first)."""
    y_hat = np.asarray(y_hat)
    idx = np.argmax(y_hat, axis=-1)
    out = np.asarray(ranks.levels, dtype=np.int8)[idx]
    return Level(int(out)) if out.ndim == 0 else out


def expected_rank(y_hat, ranks: RankSet = RankSet()):
    y_hat = np.asarray(y_hat, dtype=np.float64)
    out = y_hat @ np.asarray(ranks.values)
    return float(out) if out.ndim == 0 else out
