"""Seeded joint augmentation of image and masks.

Geometric transforms move image and masks through the same coordinate
map (bilinear for the image, nearest for masks); photometric transforms
touch the image only.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields

import cv2
import numpy as np

from .prepare import Sample

GEOMETRIC = ("hflip", "rotate", "crop", "perspective", "grid")
PHOTOMETRIC = ("brightness", "contrast", "tone", "color")

_BORDER = cv2.BORDER_REFLECT_101


@dataclass
class AugmentationPolicy:
    prob: dict = field(default_factory=lambda: {k: 0.5 for k in GEOMETRIC + PHOTOMETRIC})
    rotate_deg: float = 10.0
    crop_scale: tuple = (0.8, 1.0)
    perspective: float = 0.05
    grid_distort: float = 0.1
    grid_steps: int = 5
    brightness: float = 0.2
    contrast: float = 0.2
    gamma: tuple = (0.8, 1.25)
    hue_deg: float = 10.0

    @classmethod
    def none(cls) -> "AugmentationPolicy":
        return cls(prob={k: 0.0 for k in GEOMETRIC + PHOTOMETRIC})

    @classmethod
    def only(cls, *names: str, p: float = 1.0) -> "AugmentationPolicy":
        unknown = set(names) - set(GEOMETRIC + PHOTOMETRIC)
        if unknown:
            raise ValueError(f"unknown transforms {sorted(unknown)}")
        return cls(prob={k: (p if k in names else 0.0) for k in GEOMETRIC + PHOTOMETRIC})

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentationPolicy":
        d = dict(d)
        base = cls()
        if "p" in d:
            p = float(d.pop("p"))
            base.prob = {k: p for k in base.prob}
        enabled = d.pop("transforms", None)
        if enabled is not None:
            base.prob = {k: (v if k in enabled else 0.0) for k, v in base.prob.items()}
        names = {f.name for f in fields(cls)}
        for k, v in d.items():
            if k not in names:
                raise ValueError(f"unknown augmentation option {k!r}")
            setattr(base, k, tuple(v) if isinstance(v, list) else v)
        return base


def _warp_affine(arr, M, interp):
    H, W = arr.shape[:2]
    out = cv2.warpAffine(arr, M, (W, H), flags=interp, borderMode=_BORDER)
    return out.reshape(arr.shape)


def _warp_persp(arr, M, interp):
    H, W = arr.shape[:2]
    out = cv2.warpPerspective(arr, M, (W, H), flags=interp, borderMode=_BORDER)
    return out.reshape(arr.shape)


def _remap(arr, mx, my, interp):
    out = cv2.remap(arr, mx, my, interpolation=interp, borderMode=_BORDER)
    return out.reshape(arr.shape)


def _resize(arr, H, W, interp):
    return cv2.resize(arr, (W, H), interpolation=interp).reshape((H, W) + arr.shape[2:])


def _grid_maps(H, W, steps, limit, rng):
    def axis(n):
        step = n / steps
        scales = 1.0 + rng.uniform(-limit, limit, steps)
        knots_src = np.concatenate([[0.0], np.cumsum(step * scales)])
        knots_src *= (n - 1) / knots_src[-1]
        knots_dst = np.linspace(0, n - 1, steps + 1)
        return np.interp(np.arange(n), knots_dst, knots_src).astype(np.float32)
    xs, ys = axis(W), axis(H)
    return np.broadcast_to(xs[None, :], (H, W)).copy(), np.broadcast_to(ys[:, None], (H, W)).copy()


class _Geometry:
    """Applies one drawn geometric op to image and masks alike."""

    def __init__(self, image, masks):
        self.image = image
        self.masks = [m.astype(np.uint8) for m in masks]

    def apply(self, fn):
        self.image = fn(self.image, cv2.INTER_LINEAR)
        self.masks = [fn(m, cv2.INTER_NEAREST) for m in self.masks]


def augment(sample: Sample, policy: AugmentationPolicy, seed) -> Sample:
    rng = np.random.default_rng(seed)
    p = policy.prob
    H, W = sample.size
    masks = [sample.levels] + ([sample.ids] if sample.ids is not None else [])
    geo = _Geometry(sample.image.astype(np.float32), masks)

    def fires(name):
        return rng.random() < p.get(name, 0.0)

    if fires("hflip"):
        geo.apply(lambda a, _: np.ascontiguousarray(a[:, ::-1]))
    if fires("rotate"):
        angle = rng.uniform(-policy.rotate_deg, policy.rotate_deg)
        M = cv2.getRotationMatrix2D(((W - 1) / 2, (H - 1) / 2), angle, 1.0)
        geo.apply(lambda a, i: _warp_affine(a, M, i))
    if fires("crop"):
        s = rng.uniform(*policy.crop_scale)
        ch, cw = max(1, round(H * s)), max(1, round(W * s))
        y0 = int(rng.integers(0, H - ch + 1))
        x0 = int(rng.integers(0, W - cw + 1))
        geo.apply(lambda a, i: _resize(np.ascontiguousarray(a[y0:y0 + ch, x0:x0 + cw]), H, W, i))
    if fires("perspective"):
        src = np.float32([[0, 0], [W - 1, 0], [W - 1, H - 1], [0, H - 1]])
        jitter = rng.uniform(-policy.perspective, policy.perspective, (4, 2)) * [W, H]
        M = cv2.getPerspectiveTransform(src, (src + jitter).astype(np.float32))
        geo.apply(lambda a, i: _warp_persp(a, M, i))
    if fires("grid"):
        mx, my = _grid_maps(H, W, policy.grid_steps, policy.grid_distort, rng)
        geo.apply(lambda a, i: _remap(a, mx, my, i))

    img = geo.image
    if fires("brightness"):
        img = img + rng.uniform(-policy.brightness, policy.brightness)
    if fires("contrast"):
        a = 1.0 + rng.uniform(-policy.contrast, policy.contrast)
        img = (img - img.mean()) * a + img.mean()
    img = np.clip(img, 0.0, 1.0)
    if fires("tone"):
        lo, hi = policy.gamma
        img = img ** np.exp(rng.uniform(np.log(lo), np.log(hi)))
    if fires("color") and img.shape[-1] == 3:
        hsv = cv2.cvtColor(img.astype(np.float32), cv2.COLOR_RGB2HSV)
        hsv[..., 0] = (hsv[..., 0] + rng.uniform(-policy.hue_deg, policy.hue_deg)) % 360.0
        img = cv2.cvtColor(hsv, cv2.COLOR_HSV2RGB)
    img = np.clip(img, 0.0, 1.0).astype(np.float32)

    levels = geo.masks[0].astype(sample.levels.dtype)
    ids = geo.masks[1].astype(sample.ids.dtype) if sample.ids is not None else None
    # weight maps depend on the final geometry; recomputed downstream
    return sample.replace(image=img, levels=levels, ids=ids, weights=None)
