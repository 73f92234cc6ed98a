"""Declarative run configuration.

A run is described by a sectioned key-value file (TOML, or the JSON this
module writes back out). Command-line ``--set section.key=value`` pairs
override file values; the fully resolved config is saved beside outputs.
"""
from __future__ import annotations

import json
import os
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .network import ModelConfig, TrainConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

OUT_ENV = "DRIVESEG_OUT"


class ConfigError(ValueError):
    pass


@dataclass
class DataSection:
    train: list = field(default_factory=list)  # one manifest per dataset, batched evenly
    val: str = ""
    test: str = ""
    taxonomy: str = ""  # overrides the manifests' own taxonomy header
    size: list = field(default_factory=lambda: [64, 128])
    grayscale: bool = True
    boxes: str = ""


@dataclass
class ModelSection:
    preset: str = "desk"
    overrides: dict = field(default_factory=dict)  # any ModelConfig field


@dataclass
class TrainSection:
    stage: str = "transfer_driveability"
    init: str = ""  # checkpoint to start from
    lr: float | None = None
    batch_size: int = 8
    max_epochs: int = 30
    patience: int = 10
    augment: bool = True
    object_classes: list = field(default_factory=list)
    deterministic: bool = True


@dataclass
class LossSection:
    label_mode: str = "sord"
    penalty: str = "sld"
    label_space: str = "three_level"
    loss_weighting: bool | None = None
    beta: float = 30.0
    w_max: float = 10.0


@dataclass
class EvalSection:
    checkpoint: str = ""
    thresholds: list = field(default_factory=lambda: [0.5, 0.75])
    label: str = ""


@dataclass
class RunSection:
    out_dir: str = ""
    seed: int = 0


SECTIONS = {"data": DataSection, "model": ModelSection, "train": TrainSection, "loss": LossSection,
            "eval": EvalSection, "run": RunSection}


@dataclass
class RunConfig:
    data: DataSection = field(default_factory=DataSection)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainSection = field(default_factory=TrainSection)
    loss: LossSection = field(default_factory=LossSection)
    eval: EvalSection = field(default_factory=EvalSection)
    run: RunSection = field(default_factory=RunSection)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        unknown = set(d) - set(SECTIONS)
        if unknown:
            raise ConfigError(f"unknown config section(s): {sorted(unknown)}")
        parts = {}
        for name, sec in SECTIONS.items():
            body = d.get(name, {})
            if not isinstance(body, dict):
                raise ConfigError(f"[{name}] must be a table")
            parts[name] = _section(sec, name, body)
        cfg = cls(**parts)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)

    def validate(self):
        if isinstance(self.data.train, str):
            self.data.train = [self.data.train]
        if len(self.data.size) != 2 or any(int(v) < 1 for v in self.data.size):
            raise ConfigError("data.size must be [height, width]")
        try:
            self.model_config()
            self.train_config().resolved()
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e)) from None

    def model_config(self) -> ModelConfig:
        H, W = (int(v) for v in self.data.size)
        kw = {"height": H, "width": W, "in_channels": 1 if self.data.grayscale else 3}
        kw.update(self.model.overrides)
        cfg = ModelConfig.preset(self.model.preset, **kw)
        cfg.validate()
        return cfg

    def train_config(self) -> TrainConfig:
        t, l = self.train, self.loss
        return TrainConfig(
            stage=t.stage, lr=t.lr, batch_size=t.batch_size, label_mode=l.label_mode, penalty=l.penalty,
            label_space=l.label_space, loss_weighting=l.loss_weighting, beta=l.beta, w_max=l.w_max,
            seed=self.run.seed, max_epochs=t.max_epochs, patience=t.patience, augment=t.augment,
            object_classes=list(t.object_classes) or None, deterministic=t.deterministic,
        )

    def out_dir(self, default: str) -> Path:
        root = Path(os.environ.get(OUT_ENV) or ".")
        return root / (self.run.out_dir or default)

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        return path


def _section(sec, name: str, body: dict):
    names = {f.name for f in fields(sec)}
    bad = set(body) - names
    if bad:
        raise ConfigError(f"[{name}] unknown key(s): {sorted(bad)}")
    return sec(**body)


def read_config_file(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
    try:
        if path.suffix == ".json":
            return json.loads(text)
        return tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as e:
        raise ConfigError(f"{path}: {e}") from None


def parse_value(text: str):
    """JSON literal when it parses (numbers, booleans, lists), else the raw string."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(d: dict, pairs) -> dict:
    """Apply ``section.key=value`` strings (``model.overrides.depth=4`` nests further)."""
    out = json.loads(json.dumps(d))
    for pair in pairs:
        key, sep, value = pair.partition("=")
        if not sep or "." not in key:
            raise ConfigError(f"override {pair!r} is not of the form section.key=value")
        *path, last = key.strip().split(".")
        node = out
        for p in path:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {pair!r}: {p} is not a table")
        node[last] = parse_value(value.strip())
    return out


def load_config(path=None, overrides=(), values: dict | None = None) -> RunConfig:
    """File, then ``--set`` strings, then already-typed ``{"section.key": value}`` entries."""
    d = read_config_file(path) if path else {}
    d = apply_overrides(d, overrides)
    for key, value in (values or {}).items():
        section, _, name = key.partition(".")
        d.setdefault(section, {})[name] = value
    try:
        return RunConfig.from_dict(d)
    except TypeError as e:
        raise ConfigError(str(e)) from None

