"""Object-class to driveability mapping.

Level masks are plain ``int8`` numpy arrays holding 1 (impossible),
2 (possible), 3 (preferable) or ``VOID`` (0).
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping

import numpy as np

log = logging.getLogger(__name__)

VOID = 0


class Level(enum.IntEnum):
    IMPOSSIBLE = 1
    POSSIBLE = 2
    PREFERABLE = 3

    @property
    def rank(self) -> int:
        return int(self)

    @property
    def label(self) -> str:
        return self.name.lower()


LEVEL_NAMES = {lvl.label: int(lvl) for lvl in Level}
LEVEL_NAMES["void"] = VOID

BINARY_MODES = ("road_vs_rest", "freespace_vs_obstacles")


class TaxonomyError(ValueError):
    pass


class UnmappedClassError(TaxonomyError):
    def __init__(self, class_id: int, count: int, dataset_id: str = ""):
        self.class_id = class_id
        self.count = count
        where = f" in taxonomy {dataset_id!r}" if dataset_id else ""
        super().__init__(f"class id {class_id} is not mapped{where} ({count} pixels affected)")


@dataclass(frozen=True)
class TaxonomyMap:
    dataset_id: str
    levels: Mapping[int, int]
    names: Mapping[int, str] = field(default_factory=dict)

    def __post_init__(self):
        bad = {v for v in self.levels.values() if v not in (VOID, 1, 2, 3)}
        if bad:
            raise TaxonomyError(f"invalid level values {sorted(bad)}")

    def __getitem__(self, class_id: int) -> int:
        return self.levels[class_id]

    def __contains__(self, class_id: int) -> bool:
        return class_id in self.levels

    def __len__(self) -> int:
        return len(self.levels)

    @property
    def is_trainable(self) -> bool:
        vals = set(self.levels.values())
        return Level.IMPOSSIBLE in vals and Level.PREFERABLE in vals

    def object_classes(self) -> list[int]:
        """Non-void class ids in ascending order (channel order for object pretraining)."""
        return sorted(c for c, v in self.levels.items() if v != VOID)

    def lookup_table(self, size: int | None = None) -> np.ndarray:
        """Dense id -> level array; unmapped slots hold -1."""
        n = max(max(self.levels, default=0) + 1, size or 0)
        table = np.full(n, -1, dtype=np.int16)
        for cid, lvl in self.levels.items():
            table[cid] = lvl
        return table

    def collapsed(self, mode: str) -> "TaxonomyMap":
        table = {c: _collapse_value(v, mode) for c, v in self.levels.items()}
        return TaxonomyMap(f"{self.dataset_id}:{mode}", table, dict(self.names))


def load_taxonomy(config_text: str) -> TaxonomyMap:
    """Parse ``dataset: <id>`` plus ``<class_id>,<class_name>,<level>`` rows."""
    dataset_id = None
    levels: dict[int, int] = {}
    names: dict[int, str] = {}
    for lineno, raw in enumerate(config_text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.lower().startswith("dataset:"):
            if dataset_id is not None:
                raise TaxonomyError(f"line {lineno}: duplicate dataset header")
            dataset_id = line.split(":", 1)[1].strip()
            if not dataset_id:
                raise TaxonomyError(f"line {lineno}: empty dataset id")
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 3:
            raise TaxonomyError(f"line {lineno}: expected '<class_id>,<class_name>,<level>', got {raw.strip()!r}")
        sid, name, lvl = parts
        try:
            cid = int(sid)
        except ValueError:
            raise TaxonomyError(f"line {lineno}: class id {sid!r} is not an integer") from None
        if cid < 0:
            raise TaxonomyError(f"line {lineno}: negative class id {cid}")
        if lvl.lower() not in LEVEL_NAMES:
            raise TaxonomyError(f"line {lineno}: unknown level {lvl!r} (expected one of {', '.join(LEVEL_NAMES)})")
        if cid in levels:
            raise TaxonomyError(f"line {lineno}: duplicate class id {cid}")
        levels[cid] = LEVEL_NAMES[lvl.lower()]
        names[cid] = name
    if dataset_id is None:
        raise TaxonomyError("missing 'dataset:' header line")
    if not levels:
        raise TaxonomyError(f"taxonomy {dataset_id!r} has no entries")
    tax = TaxonomyMap(dataset_id, levels, names)
    if not tax.is_trainable:
        log.warning("taxonomy %r lacks an impossible or a preferable entry", dataset_id)
    return tax


def read_taxonomy(path) -> TaxonomyMap:
    return load_taxonomy(Path(path).read_text())


def builtin_taxonomy(name: str) -> TaxonomyMap:
    """Load one of the shipped taxonomy files (``synth``, ``cityscapes``)."""
    text = resources.files("driveseg.data").joinpath(f"{name}.txt").read_text()
    return load_taxonomy(text)


def resolve_taxonomy(spec) -> TaxonomyMap:
    if isinstance(spec, TaxonomyMap):
        return spec
    p = Path(spec)
    if p.exists():
        return read_taxonomy(p)
    return builtin_taxonomy(str(spec))


def remap_mask(mask: np.ndarray, tax: TaxonomyMap) -> np.ndarray:
    mask = np.asarray(mask)
    if mask.size == 0:
        return np.zeros(mask.shape, dtype=np.int8)
    if mask.min() < 0:
        raise TaxonomyError("class id masks must be nonnegative")
    table = tax.lookup_table(int(mask.max()) + 1)
    out = table[mask]
    if (out < 0).any():
        ids, counts = np.unique(mask[out < 0], return_counts=True)
        raise UnmappedClassError(int(ids[0]), int(counts[0]), tax.dataset_id)
    return out.astype(np.int8)


def _collapse_value(v: int, mode: str) -> int:
    if mode == "road_vs_rest":
        return Level.IMPOSSIBLE if v == Level.POSSIBLE else v
    if mode == "freespace_vs_obstacles":
        return Level.PREFERABLE if v == Level.POSSIBLE else v
    raise ValueError(f"unknown binary mode {mode!r}; expected one of {BINARY_MODES}")


def collapse_binary(levels: np.ndarray, mode: str) -> np.ndarray:
    levels = np.asarray(levels)
    if levels.size and not np.isin(levels, (VOID, 1, 2, 3)).all():
        raise TaxonomyError("collapse_binary expects a level mask")
    target = _collapse_value(Level.POSSIBLE, mode)
    out = levels.astype(np.int8, copy=True)
    out[out == Level.POSSIBLE] = target
    return out
