"""SegNet-style encoder/decoder with pooling-index unpooling."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F


@dataclass
class ModelConfig:
    in_channels: int = 1
    height: int = 64
    width: int = 128
    depth: int = 3
    convs_per_block: int = 2
    base_width: int = 16
    max_width: int = 512
    dropout: float = 0.5
    dropout_blocks: int = 1
    out_channels: int = 3

    @classmethod
    def desk(cls, **kw) -> "ModelConfig":
        return cls(**kw)

    @classmethod
    def full(cls, **kw) -> "ModelConfig":
        base = dict(height=240, width=480, depth=5, base_width=64, dropout_blocks=3)
        base.update(kw)
        return cls(**base)

    @classmethod
    def preset(cls, name: str, **kw) -> "ModelConfig":
        if name not in ("desk", "full"):
            raise ValueError(f"unknown model preset {name!r}")
        return getattr(cls, name)(**kw)

    def widths(self) -> list[int]:
        return [min(self.base_width * 2 ** i, self.max_width) for i in range(self.depth)]

    def validate(self):
        if self.in_channels not in (1, 3):
            raise ValueError("input must have 1 or 3 channels")
        if self.convs_per_block < 1 or self.depth < 1:
            raise ValueError("depth and convs_per_block must be positive")
        # odd sizes are fine: unpooling restores each level's recorded size
        step = 2 ** self.depth
        if self.height < step or self.width < step:
            raise ValueError(f"input {self.height}x{self.width} vanishes after {self.depth} poolings (needs >= {step})")
        if not 0 <= self.dropout_blocks <= self.depth:
            raise ValueError("dropout_blocks must lie in [0, depth]")

    def to_dict(self) -> dict:
        return asdict(self)


def unpool(x: torch.Tensor, indices: torch.Tensor, size) -> torch.Tensor:
    """Max-unpooling as a scatter; 2x2/stride-2 pooling indices never collide."""
    n, c = x.shape[:2]
    out = x.new_zeros(n, c, size[0] * size[1])
    out = out.scatter(2, indices.flatten(2), x.flatten(2))
    return out.view(n, c, *size)


def _conv(cin, cout):
    return [nn.Conv2d(cin, cout, 3, padding=1), nn.BatchNorm2d(cout), nn.ReLU(inplace=True)]


class SegNet(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        widths = cfg.widths()
        n = cfg.convs_per_block

        self.encoder = nn.ModuleList()
        cin = cfg.in_channels
        for w in widths:
            layers = _conv(cin, w)
            for _ in range(n - 1):
                layers += _conv(w, w)
            self.encoder.append(nn.Sequential(*layers))
            cin = w

        # decoder blocks run deepest first; the last one hands off to the head
        self.decoder = nn.ModuleList()
        for i in reversed(range(cfg.depth)):
            w = widths[i]
            w_out = widths[i - 1] if i > 0 else widths[0]
            layers = []
            for _ in range(n - 1):
                layers += _conv(w, w)
            if i > 0:
                layers += _conv(w, w_out)
            self.decoder.append(nn.Sequential(*layers))
        self.head = nn.Conv2d(widths[0], cfg.out_channels, 3, padding=1)
        self.drop = nn.Dropout(cfg.dropout)

    def _dropped(self, level: int) -> bool:
        return level >= self.cfg.depth - self.cfg.dropout_blocks

    def features(self, x: torch.Tensor) -> torch.Tensor:
        """Activations feeding the classification head."""
        indices, sizes = [], []
        for level, block in enumerate(self.encoder):
            x = block(x)
            sizes.append(x.shape[-2:])
            x, idx = F.max_pool2d(x, 2, 2, return_indices=True)
            indices.append(idx)
            if self._dropped(level):
                x = self.drop(x)
        for j, block in enumerate(self.decoder):
            level = self.cfg.depth - 1 - j
            if self._dropped(level):
                x = self.drop(x)
            x = unpool(x, indices[level], sizes[level])
            x = block(x)
        return x

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(self.features(x))

    def n_conv_layers(self) -> int:
        return sum(isinstance(m, nn.Conv2d) for m in self.modules())


def build_model(cfg: ModelConfig, seed: int | None = None) -> SegNet:
    if seed is not None:
        with torch.random.fork_rng():
            torch.manual_seed(seed)
            return SegNet(cfg)
    return SegNet(cfg)


def param_count(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


def _as_batch(model: SegNet, images) -> torch.Tensor:
    x = torch.as_tensor(np.asarray(images, dtype=np.float32))
    if x.ndim == 3:
        x = x[None]
    cfg = model.cfg
    if x.ndim != 4 or tuple(x.shape[1:]) != (cfg.height, cfg.width, cfg.in_channels):
        raise ValueError(f"expected images of shape (H, W, C) = {(cfg.height, cfg.width, cfg.in_channels)}, "
                         f"got {tuple(x.shape)}")
    dtype = next(model.parameters()).dtype
    return x.permute(0, 3, 1, 2).to(dtype)


@torch.no_grad()
def predict(model: SegNet, images, batch_size: int = 16) -> np.ndarray:
    """Per-pixel softmax probabilities, (N, H, W, K) or (H, W, K) for one image."""
    single = np.asarray(images).ndim == 3
    x = _as_batch(model, images)
    was_training = model.training
    model.eval()
    try:
        out = [torch.softmax(model(x[i:i + batch_size]), dim=1) for i in range(0, len(x), batch_size)]
    finally:
        model.train(was_training)
    probs = torch.cat(out).permute(0, 2, 3, 1).double().numpy()
    return probs[0] if single else probs
