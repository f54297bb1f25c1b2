"""Training configuration: a flat ``key=value`` file read with python-dotenv.

Example::

    dataset=data/train
    epochs=100
    lr_decay_epochs=20,40,60,80
    regime=asymmetric-scale
"""

import logging
import os
from dataclasses import dataclass, fields
from typing import Optional, Tuple

from dotenv import dotenv_values

REGIMES = (
    "identity",
    "fixed-scale",
    "asymmetric-scale",
    "homography-in-scale",
    "homography-out-of-scale",
)
GT_POLICIES = ("pixel-centers", "bilinear")
POSITIVE_INTS = (
    "epochs",
    "steps_per_epoch",
    "batch_size",
    "queries",
    "crop_h",
    "crop_w",
    "channels",
    "n_freq",
    "hidden",
    "log_every",
)


class TrainConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    dataset: str = "data/train"
    epochs: int = 100
    steps_per_epoch: int = 1
    batch_size: int = 4
    queries: int = 256
    lr: float = 1e-4
    lr_decay_epochs: Tuple[int, ...] = (20, 40, 60, 80)
    lr_decay_factor: float = 0.5
    seed: int = 0
    crop_h: int = 48
    crop_w: int = 48
    regime: str = "asymmetric-scale"
    fixed_scale: float = 2.0
    gt_policy: str = "pixel-centers"
    channels: int = 64
    n_freq: int = 32
    hidden: int = 128
    log_every: int = 10
    loss_trace: Optional[str] = None

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise TrainConfigError(
                f"regime: unknown value {self.regime!r}, "
                f"expected one of {list(REGIMES)}"
            )
        if self.gt_policy not in GT_POLICIES:
            raise TrainConfigError(
                f"gt_policy: unknown value {self.gt_policy!r}, "
                f"expected one of {list(GT_POLICIES)}"
            )
        for name in POSITIVE_INTS:
            if getattr(self, name) < 1:
                raise TrainConfigError(
                    f"{name}: must be at least 1, got {getattr(self, name)}"
                )
        if self.lr <= 0 or self.lr_decay_factor <= 0 or self.fixed_scale <= 0:
            raise TrainConfigError(
                "lr, lr_decay_factor and fixed_scale must be positive"
            )
        if list(self.lr_decay_epochs) != sorted(self.lr_decay_epochs):
            raise TrainConfigError(
                f"lr_decay_epochs: must be ascending, got {self.lr_decay_epochs}"
            )

    @property
    def crop_size(self) -> Tuple[int, int]:
        return self.crop_h, self.crop_w


def _convert(name: str, annotation, raw: str):
    text = raw.strip()
    try:
        if annotation is int:
            return int(text)
        if annotation is float:
            return float(text)
        if annotation == Tuple[int, ...]:
            return tuple(int(part) for part in text.split(",") if part.strip())
        if annotation == Optional[str]:
            return text or None
        return text
    except ValueError:
        raise TrainConfigError(f"{name}: cannot parse {raw!r}") from None


def load_train_config(path: str) -> TrainConfig:
    if not os.path.exists(path):
        raise TrainConfigError(f"Config file {path} does not exist")
    values = dotenv_values(path)
    known = {f.name: f.type for f in fields(TrainConfig)}
    kwargs = {}
    for key, raw in values.items():
        name = key.strip().lower()
        if name not in known:
            raise TrainConfigError(f"{key}: unknown config key")
        if raw is None:
            raise TrainConfigError(f"{key}: missing value")
        kwargs[name] = _convert(name, known[name], raw)
    config = TrainConfig(**kwargs)
    logging.info(f"Loaded training config from {path}: {config}")
    return config


def lr_at_epoch(cfg: TrainConfig, epoch: int) -> float:
    """Multi-step schedule: lr times the decay factor for each decay epoch reached."""
    passed = sum(1 for milestone in cfg.lr_decay_epochs if epoch >= milestone)
    return cfg.lr * cfg.lr_decay_factor**passed
