"""Three-stage training: object pretraining, driveability transfer, loss-weighted fine-tuning."""
from __future__ import annotations

import copy
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .. import CHECKPOINT_FORMAT
from ..datapipe import AugmentationPolicy, Sample, augment, balanced_batches
from ..lossweight import weight_map
from ..ordinal import LABEL_MODES, PENALTIES, RankSet, label_table
from ..taxonomy import BINARY_MODES, collapse_binary
from .loss import kl_batch_loss, kl_loss_sums
from .model import ModelConfig, SegNet, build_model

log = logging.getLogger(__name__)

STAGES = ("pretrain_objects", "transfer_driveability", "lw_finetune")
LABEL_SPACES = ("three_level",) + BINARY_MODES + ("objects",)
DEFAULT_LR = {"pretrain_objects": 1e-3, "transfer_driveability": 1e-4, "lw_finetune": 1e-4}


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    stage: str = "transfer_driveability"
    lr: float | None = None
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    batch_size: int = 8
    label_mode: str = "sord"
    penalty: str = "sld"
    label_space: str = "three_level"
    loss_weighting: bool | None = None
    beta: float = 30.0
    w_max: float = 10.0
    seed: int = 0
    max_epochs: int = 30
    patience: int = 10
    augment: bool = True
    object_classes: list | None = None
    deterministic: bool = True

    def resolved(self) -> "TrainConfig":
        if self.stage not in STAGES:
            raise ValueError(f"unknown stage {self.stage!r}; expected one of {STAGES}")
        cfg = replace(self, betas=tuple(self.betas))
        if cfg.lr is None:
            cfg.lr = DEFAULT_LR[cfg.stage]
        if cfg.loss_weighting is None:
            cfg.loss_weighting = cfg.stage == "lw_finetune"
        if cfg.stage == "pretrain_objects":
            cfg.label_space, cfg.label_mode = "objects", "one_hot"
            if not cfg.object_classes:
                raise ValueError("object pretraining needs the list of object class ids")
        if cfg.label_space not in LABEL_SPACES:
            raise ValueError(f"unknown label space {cfg.label_space!r}")
        if cfg.label_mode not in LABEL_MODES:
            raise ValueError(f"unknown label mode {cfg.label_mode!r}")
        if cfg.penalty not in PENALTIES:
            raise ValueError(f"unknown penalty {cfg.penalty!r}")
        return cfg

    def to_dict(self) -> dict:
        d = asdict(self)
        d["betas"] = list(self.betas)
        return d


@dataclass
class Checkpoint:
    state: dict
    model_cfg: ModelConfig
    train_cfg: TrainConfig
    epoch: int
    history: dict = field(default_factory=lambda: {"train_loss": [], "val_loss": []})
    best_val: float = math.inf

    def model(self) -> SegNet:
        m = SegNet(self.model_cfg)
        m.load_state_dict(self.state)
        m.eval()
        return m

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        torch.save({
            "format": CHECKPOINT_FORMAT,
            "state": self.state,
            "model_cfg": self.model_cfg.to_dict(),
            "train_cfg": self.train_cfg.to_dict(),
            "epoch": self.epoch,
            "history": self.history,
            "best_val": self.best_val,
        }, path)
        return path

    @classmethod
    def load(cls, path) -> "Checkpoint":
        blob = torch.load(path, map_location="cpu", weights_only=True)
        if blob.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"{path}: unsupported checkpoint format {blob.get('format')!r}")
        tc = blob["train_cfg"]
        tc["betas"] = tuple(tc["betas"])
        return cls(blob["state"], ModelConfig(**blob["model_cfg"]), TrainConfig(**tc),
                   blob["epoch"], blob["history"], blob["best_val"])


class TargetEncoder:
    """Turns samples into per-pixel target distributions for one label space."""

    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg
        if cfg.label_space == "objects":
            classes = list(cfg.object_classes)
            self.lut = np.full(256, -1, dtype=np.int64)
            self.lut[classes] = np.arange(len(classes))
            self.table = np.eye(len(classes))
            self.ranks = None
        else:
            self.ranks = RankSet.for_space(cfg.label_space)
            self.lut = self.ranks.level_lut()
            self.table = np.asarray(label_table(self.ranks, cfg.penalty, cfg.label_mode))

    @property
    def n_channels(self) -> int:
        return len(self.table)

    def index_mask(self, sample: Sample) -> np.ndarray:
        if self.cfg.label_space == "objects":
            if sample.ids is None:
                raise ValueError("object pretraining needs class-id masks")
            return self.lut[sample.ids.astype(np.int64)]
        levels = sample.levels
        if self.cfg.label_space in BINARY_MODES:
            levels = collapse_binary(levels, self.cfg.label_space)
        return self.lut[levels.astype(np.int64)]

    def weights(self, idx: np.ndarray) -> np.ndarray:
        return weight_map(idx, self.cfg.beta, self.cfg.w_max)

    def tensors(self, samples: Sequence[Sample], weighted: bool, dtype=torch.float32):
        idx = np.stack([self.index_mask(s) for s in samples])
        void = idx < 0
        targets = self.table[np.where(void, 0, idx)]
        targets[void] = 0.0
        x = np.stack([s.image for s in samples]).transpose(0, 3, 1, 2)
        w = None
        if weighted:
            w = np.stack([s.weights if s.weights is not None else self.weights(i) for s, i in zip(samples, idx)])
            w = torch.as_tensor(w, dtype=dtype)
        return (torch.as_tensor(x, dtype=dtype), torch.as_tensor(targets.transpose(0, 3, 1, 2), dtype=dtype),
                torch.as_tensor(void), w)


def make_optimizer(cfg: TrainConfig, params) -> torch.optim.Adam:
    return torch.optim.Adam(params, lr=cfg.lr, betas=tuple(cfg.betas), eps=cfg.eps)


@torch.no_grad()
def evaluate_loss(model: SegNet, samples: Sequence[Sample], cfg: TrainConfig, batch_size: int = 16) -> float:
    """Pooled loss over all non-void pixels of ``samples`` (inference mode)."""
    cfg = cfg.resolved()
    enc = TargetEncoder(cfg)
    was_training = model.training
    model.eval()
    dtype = next(model.parameters()).dtype
    total, count = 0.0, 0
    try:
        for i in range(0, len(samples), batch_size):
            x, t, v, w = enc.tensors(samples[i:i + batch_size], cfg.loss_weighting, dtype)
            s, n = kl_loss_sums(model(x), t, v, w)
            total += s
            count += n
    finally:
        model.train(was_training)
    if count == 0:
        raise ValueError("validation set has no non-void pixels")
    return total / count


def _with_weights(samples, enc: TargetEncoder):
    return [s if s.weights is not None else s.replace(weights=enc.weights(enc.index_mask(s))) for s in samples]


def train(cfg: TrainConfig, model: SegNet, train_sets: Sequence[Sequence[Sample]], val_samples: Sequence[Sample],
          policy: AugmentationPolicy | None = None, checkpoint_path=None) -> Checkpoint:
    """Minimise the (weighted) KL batch loss with Adam; keeps the best-validation state."""
    cfg = cfg.resolved()
    enc = TargetEncoder(cfg)
    if model.cfg.out_channels != enc.n_channels:
        raise ValueError(f"model has {model.cfg.out_channels} outputs but label space "
                         f"{cfg.label_space!r} needs {enc.n_channels}")
    if not val_samples:
        raise ValueError("training needs a validation set for model selection")
    if cfg.deterministic:
        torch.use_deterministic_algorithms(True)
    if not cfg.augment:
        policy = None
    elif policy is None:
        policy = AugmentationPolicy()

    root = np.random.SeedSequence(cfg.seed)
    torch_seed, shuffle_seed, aug_seed = (int(s.generate_state(1)[0]) for s in root.spawn(3))
    torch.manual_seed(torch_seed)
    opt = make_optimizer(cfg, model.parameters())
    dtype = next(model.parameters()).dtype

    if cfg.loss_weighting:
        val_samples = _with_weights(val_samples, enc)
    ckpt = Checkpoint(copy.deepcopy(model.state_dict()), model.cfg, cfg, 0)
    ckpt.best_val = evaluate_loss(model, val_samples, cfg)
    log.info("stage %s: initial val loss %.5f", cfg.stage, ckpt.best_val)
    stale = 0
    for epoch in range(1, cfg.max_epochs + 1):
        model.train()
        losses = []
        batches = balanced_batches(train_sets, cfg.batch_size, np.random.default_rng([shuffle_seed, epoch]))
        for b, batch in enumerate(batches):
            samples = [s for _, s in batch]
            if policy is not None:
                samples = [augment(s, policy, [aug_seed, epoch, b, k]) for k, s in enumerate(samples)]
            x, t, v, w = enc.tensors(samples, cfg.loss_weighting, dtype)
            loss = kl_batch_loss(model(x), t, v, w)
            if not torch.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}, batch {b} "
                                       f"(lr={cfg.lr}, last losses {losses[-3:]})")
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(loss.item())
        val = evaluate_loss(model, val_samples, cfg)
        ckpt.history["train_loss"].append(float(np.mean(losses)))
        ckpt.history["val_loss"].append(val)
        log.info("stage %s epoch %d: train %.5f val %.5f", cfg.stage, epoch, np.mean(losses), val)
        if val < ckpt.best_val:
            ckpt.best_val, ckpt.epoch, stale = val, epoch, 0
            ckpt.state = copy.deepcopy(model.state_dict())
            if checkpoint_path:
                ckpt.save(checkpoint_path)
        else:
            stale += 1
            if stale >= cfg.patience:
                log.info("early stop after %d stale epochs", stale)
                break
    model.load_state_dict(ckpt.state)
    model.eval()
    if checkpoint_path:
        ckpt.save(checkpoint_path)
    return ckpt


def transfer_head(checkpoint: Checkpoint | str | Path, n_out: int = 3, seed: int = 0) -> SegNet:
    """Reuse every pretrained layer; re-initialise only the final conv with ``n_out`` channels."""
    if not isinstance(checkpoint, Checkpoint):
        checkpoint = Checkpoint.load(checkpoint)
    src = checkpoint.model()
    cfg = replace(checkpoint.model_cfg, out_channels=n_out)
    model = build_model(cfg, seed=seed)
    body = {k: v for k, v in src.state_dict().items() if not k.startswith("head.")}
    missing, unexpected = model.load_state_dict(body, strict=False)
    if unexpected or any(not k.startswith("head.") for k in missing):
        raise ValueError(f"architecture mismatch: missing={missing}, unexpected={unexpected}")
    return model


def init_model(cfg: TrainConfig, model_cfg: ModelConfig, init: Checkpoint | str | Path | None = None,
               seed: int = 0) -> SegNet:
    """Starting model for a stage, enforcing the stage order."""
    cfg = cfg.resolved()
    n_out = TargetEncoder(cfg).n_channels
    if init is not None and not isinstance(init, Checkpoint):
        init = Checkpoint.load(init)
    if cfg.stage == "lw_finetune":
        if init is None or init.train_cfg.stage not in ("transfer_driveability", "lw_finetune"):
            raise ValueError("lw_finetune starts from a transfer_driveability checkpoint")
        if init.model_cfg.out_channels != n_out:
            raise ValueError("checkpoint label space does not match the fine-tuning stage")
        return init.model().train()
    if init is None:
        return build_model(replace(model_cfg, out_channels=n_out), seed=seed)
    if cfg.stage == "transfer_driveability":
        return transfer_head(init, n_out, seed=seed)
    return init.model().train()
