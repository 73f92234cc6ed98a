from __future__ import annotations

from dataclasses import dataclass, replace

import cv2
import numpy as np
from PIL import Image

from ..taxonomy import TaxonomyMap, remap_mask

DEFAULT_SIZE = (240, 480)
DESK_SIZE = (64, 128)
LUMA = np.array([0.299, 0.587, 0.114], dtype=np.float32)


class SampleError(ValueError):
    pass


@dataclass
class Sample:
    """One training/evaluation example.

    ``image`` is float32 (H, W, C) in [0, 1]; ``levels`` an int8 level mask;
    ``ids`` the source class ids at the same resolution (kept for object
    pretraining and alignment checks).
    """
    image: np.ndarray
    levels: np.ndarray
    ids: np.ndarray | None = None
    weights: np.ndarray | None = None
    dataset_id: str = ""
    name: str = ""

    def __post_init__(self):
        if self.image.shape[:2] != self.levels.shape:
            raise SampleError(f"image {self.image.shape[:2]} and mask {self.levels.shape} sizes differ")

    @property
    def size(self) -> tuple[int, int]:
        return self.levels.shape

    def replace(self, **kw) -> "Sample":
        return replace(self, **kw)


def to_gray(image: np.ndarray) -> np.ndarray:
    if image.shape[-1] == 1:
        return image
    return (image[..., :3] @ LUMA)[..., None].astype(np.float32)


def resize_image(image: np.ndarray, size) -> np.ndarray:
    H, W = size
    if image.shape[:2] == (H, W):
        return image
    out = cv2.resize(image, (W, H), interpolation=cv2.INTER_LINEAR)
    return out.reshape(H, W, image.shape[-1])


def resize_mask(mask: np.ndarray, size) -> np.ndarray:
    H, W = size
    if mask.shape == (H, W):
        return mask
    dtype = mask.dtype
    out = cv2.resize(mask.astype(np.uint8), (W, H), interpolation=cv2.INTER_NEAREST)
    return out.astype(dtype)


def read_image(path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    except OSError as e:
        raise SampleError(f"cannot decode image {path}: {e}") from e
    return arr


def read_mask(path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            if im.mode not in ("L", "P"):
                raise SampleError(f"{path}: masks must be single-channel 8-bit (got mode {im.mode})")
            return np.asarray(im, dtype=np.uint8).copy()
    except OSError as e:
        raise SampleError(f"cannot decode mask {path}: {e}") from e


def prepare_arrays(image, ids, tax: TaxonomyMap, size=DEFAULT_SIZE, grayscale: bool = True,
                   dataset_id: str = "", name: str = "") -> Sample:
    image = np.asarray(image, dtype=np.float32)
    if image.ndim == 2:
        image = image[..., None]
    ids = np.asarray(ids)
    if image.shape[:2] != ids.shape:
        raise SampleError(f"{name or 'sample'}: image {image.shape[:2]} and mask {ids.shape} sizes differ")
    if grayscale:
        image = to_gray(image)
    levels = remap_mask(ids, tax)
    return Sample(resize_image(image, size), resize_mask(levels, size),
                  resize_mask(ids.astype(np.uint8), size), dataset_id=dataset_id, name=name)


def prepare_sample(record, target_size=DEFAULT_SIZE, grayscale: bool = True, tax: TaxonomyMap | None = None,
                   dataset_id: str = "") -> Sample:
    if tax is None:
        raise SampleError("prepare_sample needs a taxonomy")
    image = read_image(record.image)
    ids = read_mask(record.mask)
    return prepare_arrays(image, ids, tax, target_size, grayscale, dataset_id, record.stem)
