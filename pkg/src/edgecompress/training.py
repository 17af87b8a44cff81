"""Mini-batch training with AdamW and cross-entropy."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from edgecompress.config import defaults
from edgecompress.data import Dataset, batches
from edgecompress.engine import OptimizerState, Tensor, adamw_step, cross_entropy
from edgecompress.errors import ConfigurationError
from edgecompress.model.ir import Model, forward

UpdateFn = Callable[[dict[str, np.ndarray], dict[str, np.ndarray], OptimizerState], None]


@dataclass
class TrainConfig:
    epochs: int = 1
    batch_size: int = 64
    lr: float = 0.004
    weight_decay: float = 0.05
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    seed: int = 0
    augment: bool = False

    def __post_init__(self):
        self.betas = tuple(self.betas)
        if self.epochs < 0 or self.batch_size < 1 or self.lr <= 0:
            raise ConfigurationError("epochs >= 0, batch_size >= 1 and lr > 0 are required")

    @classmethod
    def from_defaults(cls, **overrides) -> "TrainConfig":
        d = dict(defaults()["training"])
        d.update(overrides)
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["betas"] = list(self.betas)
        return d


@dataclass
class TrainHistory:
    losses: list[float] = field(default_factory=list)
    steps: int = 0


def steps_per_epoch(n: int, batch_size: int) -> int:
    return math.ceil(n / batch_size)


def fit(model: Model, ds: Dataset, cfg: TrainConfig, update: UpdateFn | None = None) -> TrainHistory:
    """Train ``model`` in place. Epoch e shuffles with seed (cfg.seed, e).

    ``update`` replaces the optimizer step; it receives parameter arrays,
    their gradients and the optimizer state, and must modify the arrays in place.
    """
    update = update or adamw_step
    state = OptimizerState(lr=cfg.lr, weight_decay=cfg.weight_decay, betas=cfg.betas, eps=cfg.eps)
    names = list(model.params)
    for t in model.params.values():
        t.requires_grad = True
        t.grad = None
    history = TrainHistory()
    try:
        for epoch in range(cfg.epochs):
            for images, labels in batches(ds, cfg.batch_size, shuffle_seed=[cfg.seed, epoch], augment=cfg.augment):
                loss = cross_entropy(forward(model, Tensor(images)), labels)
                loss.backward()
                arrays = {k: model.params[k].data for k in names}
                grads = {k: model.params[k].grad for k in names}
                update(arrays, grads, state)
                for t in model.params.values():
                    t.grad = None
                history.losses.append(loss.item())
                history.steps += 1
    finally:
        for t in model.params.values():
            t.requires_grad = False
            t.grad = None
    return history
