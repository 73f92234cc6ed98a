"""Procedural outdoor scenes: sky, terrain, a trapezoidal path and obstacles.

Class ids follow the shipped ``synth`` taxonomy.
"""
from __future__ import annotations

from pathlib import Path

import cv2
import numpy as np
from PIL import Image

from .manifest import write_manifest

SKY, TERRAIN, PATH, OBSTACLE = 0, 1, 2, 3
CLASS_NAMES = {SKY: "sky", TERRAIN: "terrain", PATH: "path", OBSTACLE: "obstacle"}
SPLIT_CODES = {"train": 0, "val": 1, "test": 2}


def _noise(rng, H, W, cells, amp):
    coarse = rng.normal(0.0, 1.0, (cells, cells * 2)).astype(np.float32)
    return cv2.resize(coarse, (W, H), interpolation=cv2.INTER_CUBIC)[..., None] * amp


def _color(rng, base, spread):
    return np.clip(np.asarray(base) + rng.uniform(-spread, spread, 3), 0.0, 1.0)


def synth_scene(seed, width: int = 128, height: int = 64, texture: bool = True, return_boxes: bool = False):
    """Render one scene. Returns ``(image, mask)`` (plus boxes on request).

    ``image`` is float32 (H, W, 3) in [0, 1]; ``mask`` uint8 class ids;
    boxes are half-open ``(x0, y0, x1, y1)`` obstacle extents.
    """
    if width < 32 or height < 32:
        raise ValueError("synthetic scenes need width, height >= 32")
    rng = np.random.default_rng(seed)
    H, W = height, width
    yy, xx = np.mgrid[0:H, 0:W]
    mask = np.full((H, W), SKY, dtype=np.uint8)
    img = np.zeros((H, W, 3), dtype=np.float32)

    horizon = int(H * rng.uniform(0.3, 0.5))
    sky_top, sky_bot = _color(rng, (0.55, 0.7, 0.9), 0.15), _color(rng, (0.8, 0.85, 0.9), 0.1)
    t = (yy / max(horizon, 1))[..., None]
    img[:] = sky_top * (1 - t) + sky_bot * t

    ground = yy >= horizon
    mask[ground] = TERRAIN
    terrain = _color(rng, (0.35, 0.45, 0.2), 0.12)
    img[ground] = terrain

    # path: trapezoid from the bottom edge towards a vanishing point
    bottom_c = W * rng.uniform(0.3, 0.7)
    bottom_w = W * rng.uniform(0.25, 0.6)
    top_c = W * rng.uniform(0.35, 0.65)
    top_w = bottom_w * rng.uniform(0.05, 0.3)
    top_y = horizon + rng.integers(0, max(2, H // 10))
    frac = np.clip((yy - top_y) / max(H - 1 - top_y, 1), 0.0, 1.0)
    centre = top_c + (bottom_c - top_c) * frac
    half = (top_w + (bottom_w - top_w) * frac) / 2
    path = (yy >= top_y) & (np.abs(xx - centre) <= half)
    mask[path] = PATH
    img[path] = _color(rng, (0.55, 0.52, 0.48), 0.1)

    boxes = []
    for _ in range(int(rng.integers(0, 5))):
        y1 = int(rng.uniform(horizon + 0.15 * (H - horizon), H))
        depth = (y1 - horizon) / max(H - horizon, 1)
        oh = max(3, int(H * depth * rng.uniform(0.2, 0.5)))
        ow = max(3, int(oh * rng.uniform(0.6, 2.0)))
        if rng.random() < 0.5:
            # on the path, so obstacles border preferable ground
            row = min(y1 - 1, H - 1)
            x0 = int(centre[row, 0] + rng.uniform(-half[row, 0], half[row, 0]) - ow / 2)
        else:
            x0 = int(rng.uniform(-ow / 3, W - 2 * ow / 3))
        y0 = max(0, y1 - oh)
        x0c, x1c = max(0, x0), min(W, x0 + ow)
        if x1c <= x0c:
            continue
        if rng.random() < 0.5:
            shape = (xx >= x0c) & (xx < x1c) & (yy >= y0) & (yy < y1)
        else:
            cx, cy = x0 + ow / 2, (y0 + y1) / 2
            shape = ((xx + 0.5 - cx) / (ow / 2)) ** 2 + ((yy + 0.5 - cy) / ((y1 - y0) / 2)) ** 2 <= 1.0
        if not shape.any():
            continue
        mask[shape] = OBSTACLE
        img[shape] = _color(rng, rng.uniform(0.1, 0.8, 3), 0.05)
        ys, xs = np.nonzero(shape)
        boxes.append((int(xs.min()), int(ys.min()), int(xs.max()) + 1, int(ys.max()) + 1))

    if texture:
        img += _noise(rng, H, W, 4, 0.04) + rng.normal(0.0, 0.03, img.shape).astype(np.float32)
    img = np.clip(img, 0.0, 1.0).astype(np.float32)
    return (img, mask, boxes) if return_boxes else (img, mask)


def split_seed(root: int, split: str, index: int) -> np.random.SeedSequence:
    """Seeds for different splits never collide: the split code is part of the entropy."""
    return np.random.SeedSequence([int(root), SPLIT_CODES[split], int(index)])


def write_synth_dataset(out_dir, counts: dict, seed: int = 0, width: int = 128, height: int = 64,
                        taxonomy_ref: str = "synth") -> dict:
    """Write images, masks, boxes and one manifest per split; returns manifest paths."""
    out_dir = Path(out_dir)
    manifests = {}
    for split, n in counts.items():
        if n <= 0:
            continue
        img_dir, msk_dir = out_dir / split / "images", out_dir / split / "masks"
        img_dir.mkdir(parents=True, exist_ok=True)
        msk_dir.mkdir(parents=True, exist_ok=True)
        records, box_lines = [], []
        for i in range(n):
            img, mask, boxes = synth_scene(split_seed(seed, split, i), width, height, return_boxes=True)
            name = f"{split}_{i:05d}"
            ip, mp = img_dir / f"{name}.png", msk_dir / f"{name}.png"
            Image.fromarray(np.rint(img * 255).astype(np.uint8)).save(ip)
            Image.fromarray(mask).save(mp)
            records.append((ip, mp))
            box_lines += [f"{name} {x0} {y0} {x1} {y1}" for x0, y0, x1, y1 in boxes]
        mpath = write_manifest(out_dir / f"{split}.tsv", records, "synth", split, taxonomy_ref)
        (out_dir / f"{split}_boxes.txt").write_text("\n".join(box_lines) + ("\n" if box_lines else ""))
        manifests[split] = mpath
    return manifests
