"""Desk-scale experiment harnesses on synthetic scenes.

Each study trains small models under controlled variations and returns
plain dicts of metrics, so callers (tests, CLI) decide how to render them.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from statistics import median

import numpy as np

from .datapipe import DESK_SIZE, Sample, prepare_arrays, synth_scene
from .datapipe.synth import split_seed
from .evalkit import ConfusionMatrix, box_counts, merge_box_counts, report, _recalls
from .lossweight import weight_map
from .network import Checkpoint, ModelConfig, TrainConfig, init_model, predict, train
from .ordinal import RankSet, decode_argmax
from .taxonomy import BINARY_MODES, builtin_taxonomy, collapse_binary

log = logging.getLogger(__name__)

BINARY_ROWS = {
    "road_vs_rest": "Road/path green vs. red rest",
    "freespace_vs_obstacles": "Free space green vs. red obstacles",
    "three_level": "3-level driveability green yellow red",
}


def synth_samples(split: str, n: int, seed: int = 0, size=DESK_SIZE, grayscale: bool = True,
                  with_boxes: bool = False):
    """In-memory synthetic split; boxes (if requested) keyed by sample name."""
    tax = builtin_taxonomy("synth")
    H, W = size
    samples, boxes = [], {}
    for i in range(n):
        img, mask, bx = synth_scene(split_seed(seed, split, i), W, H, return_boxes=True)
        name = f"{split}_{i:05d}"
        samples.append(prepare_arrays(img, mask, tax, size, grayscale, "synth", name))
        if bx:
            boxes[name] = bx
    return (samples, boxes) if with_boxes else samples


def gt_levels(sample: Sample, label_space: str) -> np.ndarray:
    if label_space in BINARY_MODES:
        return collapse_binary(sample.levels, label_space)
    return sample.levels


def evaluate_model(model, samples, label_space: str = "three_level", beta: float = 30.0, w_max: float = 10.0,
                   boxes: dict | None = None, thresholds=(0.5, 0.75), label: str = ""):
    ranks = RankSet.for_space(label_space)
    conf = ConfusionMatrix(ranks)
    probs = predict(model, np.stack([s.image for s in samples]))
    parts = []
    for s, p in zip(samples, probs):
        gt = gt_levels(s, label_space)
        conf.accumulate(decode_argmax(p, ranks), gt, weight_map(gt, beta, w_max))
        if boxes and s.name in boxes:
            parts.append(box_counts(decode_argmax(p, ranks), boxes[s.name]))
    instance = {}
    if parts:
        merged = merge_box_counts(parts)
        for t in thresholds:
            pix, inst = _recalls(merged, t)
            instance["pixel_recall"] = pix
            instance[f"instance_recall@{t:g}"] = inst
    return report(conf, len(samples), instance, label)


@dataclass
class StudyConfig:
    n_train: int = 200
    n_val: int = 40
    n_test: int = 40
    data_seed: int = 0
    epochs: int = 15
    lw_epochs: int = 8
    patience: int = 10
    lr: float = 1e-3
    lw_lr: float = 1e-4
    batch_size: int = 8
    augment: bool = False
    model: ModelConfig = None

    def __post_init__(self):
        if self.model is None:
            self.model = ModelConfig.desk()


def _splits(cfg: StudyConfig):
    size = (cfg.model.height, cfg.model.width)
    gray = cfg.model.in_channels == 1
    return (synth_samples("train", cfg.n_train, cfg.data_seed, size, gray),
            synth_samples("val", cfg.n_val, cfg.data_seed, size, gray),
            synth_samples("test", cfg.n_test, cfg.data_seed, size, gray))


def _tcfg(cfg: StudyConfig, seed: int, **kw) -> TrainConfig:
    base = TrainConfig(stage="transfer_driveability", lr=cfg.lr, batch_size=cfg.batch_size, seed=seed,
                       max_epochs=cfg.epochs, patience=cfg.patience, augment=cfg.augment)
    return replace(base, **kw)


def fit(cfg: StudyConfig, tcfg: TrainConfig, train_s, val_s, init: Checkpoint | None = None) -> Checkpoint:
    model = init_model(tcfg, cfg.model, init, seed=tcfg.seed)
    return train(tcfg, model, [train_s], val_s)


def severity_study(cfg: StudyConfig, seeds=(0, 1, 2, 3, 4), with_lw: bool = True) -> dict:
    """one-hot vs SORD (vs SORD+LW) over seed pairs sharing data, init and batch order."""
    train_s, val_s, test_s = _splits(cfg)
    runs = []
    for seed in seeds:
        row = {"seed": seed}
        for mode in ("one_hot", "sord"):
            ck = fit(cfg, _tcfg(cfg, seed, label_mode=mode), train_s, val_s)
            row[mode] = evaluate_model(ck.model(), test_s, label=mode).to_dict()
            if mode == "sord" and with_lw:
                lw_cfg = _tcfg(cfg, seed, stage="lw_finetune", label_mode="sord", lr=cfg.lw_lr,
                               max_epochs=cfg.lw_epochs)
                lw = fit(cfg, lw_cfg, train_s, val_s, init=ck)
                row["sord_lw"] = evaluate_model(lw.model(), test_s, label="sord_lw").to_dict()
        log.info("seed %d: %s", seed, {k: v["ms"] for k, v in row.items() if k != "seed"})
        runs.append(row)
    summary = {}
    for key in ("one_hot", "sord", "sord_lw"):
        if key not in runs[0]:
            continue
        summary[key] = {
            "median_ms": median(r[key]["ms"] for r in runs),
            "median_rmse": median(r[key]["rmse"] for r in runs),
            "median_red_recall_w": median(r[key]["recall_w"]["impossible"] for r in runs),
            "median_green_precision_w": median(r[key]["precision_w"]["preferable"] for r in runs),
        }
    return {"runs": runs, "summary": summary}


def binary_study(cfg: StudyConfig, seed: int = 0) -> dict:
    """RMSE of one-hot models trained under each class definition."""
    train_s, val_s, test_s = _splits(cfg)
    out = {}
    for space in ("road_vs_rest", "freespace_vs_obstacles", "three_level"):
        ck = fit(cfg, _tcfg(cfg, seed, label_mode="one_hot", label_space=space), train_s, val_s)
        out[space] = {
            "val": evaluate_model(ck.model(), val_s, space).rmse,
            "test": evaluate_model(ck.model(), test_s, space).rmse,
        }
    return out
