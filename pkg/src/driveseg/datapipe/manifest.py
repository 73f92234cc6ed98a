"""Tab-separated image/mask manifests.

Format::

    dataset: kitti
    split: train
    taxonomy: kitti.txt
    images/000.png<TAB>masks/000.png
    ...

Header lines are optional; record paths are relative to the manifest's
directory. ``#`` starts a comment.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from ..taxonomy import TaxonomyMap, resolve_taxonomy

log = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")
HEADER_KEYS = ("dataset", "split", "taxonomy")


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class Record:
    image: Path
    mask: Path

    @property
    def stem(self) -> str:
        return self.image.stem


@dataclass
class DatasetManifest:
    dataset_id: str
    split: str
    records: list[Record]
    taxonomy: TaxonomyMap | None = None
    path: Path | None = field(default=None, compare=False)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i) -> Record:
        return self.records[i]


def parse_manifest(text: str, root: Path, source: str = "<manifest>") -> tuple[dict, list[Record]]:
    header: dict[str, str] = {}
    records: list[Record] = []
    seen: set[tuple[str, str]] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        if "\t" not in line:
            key, sep, value = line.partition(":")
            key = key.strip().lower()
            if not sep or key not in HEADER_KEYS:
                raise ManifestError(f"{source}:{lineno}: expected 'image<TAB>mask' or a header line, got {raw!r}")
            header[key] = value.strip()
            continue
        parts = [p.strip() for p in line.split("\t")]
        if len(parts) != 2 or not all(parts):
            raise ManifestError(f"{source}:{lineno}: expected exactly two tab-separated paths")
        key = (parts[0], parts[1])
        if key in seen:
            log.warning("%s:%d: duplicate record %s dropped", source, lineno, parts[0])
            continue
        seen.add(key)
        records.append(Record(root / parts[0], root / parts[1]))
    return header, records


def _check_ids(records, tax: TaxonomyMap):
    for rec in records:
        ids = np.unique(np.asarray(Image.open(rec.mask)))
        missing = [int(i) for i in ids if int(i) not in tax]
        if missing:
            raise ManifestError(f"{rec.mask}: class ids {missing} are not in taxonomy {tax.dataset_id!r}")


def load_manifest(path, taxonomy=None, split: str | None = None, check_ids: bool = True) -> DatasetManifest:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ManifestError(f"cannot read manifest {path}: {e}") from e
    header, records = parse_manifest(text, path.parent, str(path))
    if not records:
        raise ManifestError(f"{path}: manifest has no records")
    missing = [f"{r.image if not r.image.exists() else r.mask}" for r in records
               if not (r.image.exists() and r.mask.exists())]
    if missing:
        raise ManifestError(f"{path}: {len(missing)} record file(s) missing, e.g. {missing[:3]}")
    split = split or header.get("split", "train")
    if split not in SPLITS:
        raise ManifestError(f"{path}: unknown split {split!r}")
    tax = None
    if taxonomy is not None:
        tax = resolve_taxonomy(taxonomy)
    elif "taxonomy" in header:
        ref = header["taxonomy"]
        tax = resolve_taxonomy(path.parent / ref if (path.parent / ref).exists() else ref)
    if tax is not None and check_ids:
        _check_ids(records, tax)
    dataset_id = header.get("dataset") or (tax.dataset_id if tax else path.stem)
    return DatasetManifest(dataset_id, split, records, tax, path)


def write_manifest(path, records, dataset_id: str, split: str, taxonomy: str | None = None):
    path = Path(path)
    lines = [f"dataset: {dataset_id}", f"split: {split}"]
    if taxonomy:
        lines.append(f"taxonomy: {taxonomy}")
    for img, msk in records:
        lines.append(f"{Path(img).relative_to(path.parent).as_posix()}\t{Path(msk).relative_to(path.parent).as_posix()}")
    path.write_text("\n".join(lines) + "\n")
    return path
