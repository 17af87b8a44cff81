"""Group-sparse training by dual half-space projected gradient.

Training runs plain AdamW for a warmup period, then freezes a redundant set:
the lowest-saliency fraction of groups. From then on the important groups
keep taking AdamW steps while each redundant group takes a penalized
gradient step toward the origin, followed by a half-space test. A group
whose trial point leaves the half-space {y : <y, x> >= eps*|x|^2} is set to
exact zero and held there.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass
from fractions import Fraction

import numpy as np

from edgecompress.config import defaults
from edgecompress.data import Dataset
from edgecompress.engine import FLOAT, OptimizerState, adamw_step
from edgecompress.errors import ConfigurationError
from edgecompress.model.ir import Model
from edgecompress.pruning.dependency import PruneGroup
from edgecompress.pruning.extract import zero_groups
from edgecompress.training import TrainConfig, TrainHistory, fit, steps_per_epoch

SALIENCY_METRICS = ("l2", "l2_normalized")


@dataclass
class DhspgConfig:
    target_group_sparsity: float = 0.4
    epochs: int = 1
    batch_size: int = 64
    lr: float = 0.004
    weight_decay: float = 0.05
    warmup_steps: int | None = None  # None: warmup_fraction of all steps
    warmup_fraction: float = 0.25
    epsilon_projection: float = 0.0
    lambda_penalty: float = 0.01
    saliency: str = "l2"
    seed: int = 0
    augment: bool = False

    def __post_init__(self):
        if not 0.0 <= self.target_group_sparsity <= 1.0:
            raise ConfigurationError("target_group_sparsity must lie in [0, 1]")
        if not 0.0 <= self.epsilon_projection < 1.0:
            raise ConfigurationError("epsilon_projection must lie in [0, 1)")
        if self.lambda_penalty < 0:
            raise ConfigurationError("lambda_penalty must be >= 0")
        if not 0.0 <= self.warmup_fraction <= 1.0:
            raise ConfigurationError("warmup_fraction must lie in [0, 1]")
        if self.warmup_steps is not None and self.warmup_steps < 0:
            raise ConfigurationError("warmup_steps must be >= 0")
        if self.saliency not in SALIENCY_METRICS:
            raise ConfigurationError(f"saliency must be one of {SALIENCY_METRICS}")

    @classmethod
    def from_defaults(cls, **overrides) -> "DhspgConfig":
        d = {k: v for k, v in defaults()["dhspg"].items()}
        t = defaults()["training"]
        d.update(batch_size=t["batch_size"], lr=t["lr"], weight_decay=t["weight_decay"])
        d.update(overrides)
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    def train_config(self) -> TrainConfig:
        t = defaults()["training"]
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            lr=self.lr,
            weight_decay=self.weight_decay,
            betas=tuple(t["betas"]),
            eps=t["eps"],
            seed=self.seed,
            augment=self.augment,
        )


def num_redundant(target: float, n_groups: int) -> int:
    # Fraction(str(.)) so that e.g. 0.3 * 10 is 3, not 3.0000000000000004
    return math.ceil(Fraction(str(target)) * n_groups)


def half_space_project(x: np.ndarray, x_trial: np.ndarray, epsilon: float = 0.0) -> np.ndarray:
    """Zero the trial point when it falls outside the half-space anchored at ``x``."""
    x64, t64 = np.asarray(x, np.float64), np.asarray(x_trial, np.float64)
    if np.dot(t64.ravel(), x64.ravel()) < epsilon * np.dot(x64.ravel(), x64.ravel()):
        return np.zeros_like(x_trial)
    return np.array(x_trial, copy=True)


# -------------------------------------------------------------- space layout
@dataclass
class _Space:
    members: list[tuple[str, int]]
    channels: np.ndarray  # channel index per group of this space
    group_ids: np.ndarray


def _spaces(groups: list[PruneGroup]) -> dict[int, _Space]:
    by_space: dict[int, list[PruneGroup]] = {}
    for g in groups:
        by_space.setdefault(g.space, []).append(g)
    out = {}
    for space, gs in by_space.items():
        members = [(name, axis) for name, axis, _ in gs[0].slices]
        out[space] = _Space(members, np.array([g.channel for g in gs]), np.array([g.group_id for g in gs]))
    return out


def _other_axes(ndim: int, axis: int) -> tuple[int, ...]:
    return tuple(i for i in range(ndim) if i != axis)


def _per_channel(arr: np.ndarray, axis: int) -> np.ndarray:
    """Sum over every axis except ``axis``, in float64."""
    return arr.astype(np.float64).sum(axis=_other_axes(arr.ndim, axis)) if arr.ndim > 1 else arr.astype(np.float64)


def _expand(v: np.ndarray, ndim: int, axis: int) -> np.ndarray:
    shape = [1] * ndim
    shape[axis] = -1
    return v.reshape(shape)


def group_saliency(params: dict[str, np.ndarray], groups: list[PruneGroup], metric: str = "l2") -> np.ndarray:
    """Saliency of every group, indexed by group_id."""
    if metric not in SALIENCY_METRICS:
        raise ConfigurationError(f"saliency must be one of {SALIENCY_METRICS}")
    sal = np.zeros(len(groups), dtype=np.float64)
    for sp in _spaces(groups).values():
        sq = 0.0
        count = 0
        for name, axis in sp.members:
            p = params[name]
            p64 = p.astype(np.float64)
            sq = sq + _per_channel(p64 * p64, axis)[sp.channels]
            count += p.size // p.shape[axis]
        norm = np.sqrt(sq)
        sal[sp.group_ids] = norm / math.sqrt(count) if metric == "l2_normalized" else norm
    return sal


def select_redundant(saliency: np.ndarray, target: float) -> np.ndarray:
    """Group ids of the lowest-saliency fraction; ties go to the lower id."""
    k = num_redundant(target, saliency.shape[0])
    order = np.lexsort((np.arange(saliency.shape[0]), saliency))
    return np.sort(order[:k])


# ------------------------------------------------------------------ trainer
class DhspgTrainer:
    def __init__(self, model: Model, groups: list[PruneGroup], cfg: DhspgConfig):
        self.model = model.copy()
        self.groups = groups
        self.cfg = cfg
        self.spaces = _spaces(groups)
        self.redundant: np.ndarray | None = None
        self.zeroed: dict[int, np.ndarray] = {}  # space -> channels already projected to zero
        self.active: dict[int, np.ndarray] = {}  # space -> channels still shrinking
        self.total_steps = 0
        self.warmup_steps = 0
        self.history: TrainHistory | None = None

    # selection ---------------------------------------------------------
    def _select(self, params: dict[str, np.ndarray]) -> None:
        sal = group_saliency(params, self.groups, self.cfg.saliency)
        self.redundant = select_redundant(sal, self.cfg.target_group_sparsity)
        chosen = set(self.redundant.tolist())
        for space, sp in self.spaces.items():
            mask = np.array([gid in chosen for gid in sp.group_ids], dtype=bool)
            self.active[space] = sp.channels[mask]
            self.zeroed[space] = np.zeros(0, dtype=np.int64)

    def _write(self, params: dict[str, np.ndarray], space: int, channels: np.ndarray, values: dict) -> None:
        for name, axis in self.spaces[space].members:
            idx = [slice(None)] * params[name].ndim
            idx[axis] = channels
            params[name][tuple(idx)] = values[name] if values is not None else 0.0

    def _enforce_zeros(self, params: dict[str, np.ndarray]) -> None:
        for space, ch in self.zeroed.items():
            if ch.size:
                self._write(params, space, ch, None)

    # one optimizer step -----------------------------------------------------
    def update(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: OptimizerState) -> None:
        step = state.step  # steps completed before this one
        if self.redundant is None and step >= self.warmup_steps:
            self._select(params)
        if self.redundant is None or not self.redundant.size:
            adamw_step(params, grads, state)
            return
        old = {}
        for space, ch in self.active.items():
            if not ch.size:
                continue
            for name, axis in self.spaces[space].members:
                g = grads.get(name)
                old[(space, name)] = (
                    np.take(params[name], ch, axis=axis).astype(np.float64),
                    np.zeros(0) if g is None else np.take(g, ch, axis=axis).astype(np.float64),
                )
        adamw_step(params, grads, state)
        remaining = max(self.total_steps - step, 1)
        lr = state.lr
        for space, ch in self.active.items():
            if not ch.size:
                continue
            members = self.spaces[space].members
            x_sq = sum(_per_channel(old[(space, n)][0] ** 2, a) for n, a in members)
            norm = np.sqrt(x_sq)
            safe = np.where(norm > 0, norm, 1.0)
            # the penalty grows as needed so every redundant group reaches zero by the last step
            lam = np.maximum(self.cfg.lambda_penalty, norm / (lr * remaining))
            trial, inner = {}, 0.0
            for name, axis in members:
                x, g = old[(space, name)]
                if g.size == 0:
                    g = np.zeros_like(x)
                coef = _expand(lam / safe, x.ndim, axis)
                t = x - lr * (g + coef * x)
                trial[name] = t
                inner = inner + _per_channel(t * x, axis)
            project = (inner < self.cfg.epsilon_projection * x_sq) | (norm == 0)
            for name, axis in members:
                trial[name] = (trial[name] * _expand(~project, trial[name].ndim, axis)).astype(FLOAT)
            self._write(params, space, ch, trial)
            if project.any():
                self.zeroed[space] = np.concatenate([self.zeroed[space], ch[project]])
                self.active[space] = ch[~project]
        self._enforce_zeros(params)

    # driver ---------------------------------------------------------------
    def run(self, ds: Dataset) -> Model:
        cfg = self.cfg
        self.total_steps = cfg.epochs * steps_per_epoch(len(ds), cfg.batch_size)
        self.warmup_steps = (
            cfg.warmup_steps if cfg.warmup_steps is not None else math.floor(cfg.warmup_fraction * self.total_steps)
        )
        self.history = fit(self.model, ds, cfg.train_config(), update=self.update)
        params = {k: t.data for k, t in self.model.params.items()}
        if self.redundant is None:
            self._select(params)
        # any redundant group the schedule left short of zero is finished here
        for space, ch in self.active.items():
            if ch.size:
                self.zeroed[space] = np.concatenate([self.zeroed[space], ch])
                self.active[space] = ch[:0]
        self._enforce_zeros(params)
        return self.model


def dhspg_train(model: Model, groups: list[PruneGroup], train_data: Dataset, cfg: DhspgConfig) -> Model:
    """Train a copy of ``model`` so that exactly ceil(target * len(groups)) groups end at zero."""
    if not groups:
        warnings.warn("dhspg_train: no prunable groups; model returned unchanged", stacklevel=2)
        return model.copy()
    if cfg.target_group_sparsity == 1.0:
        warnings.warn("dhspg_train: target 1.0 removes every prunable group", stacklevel=2)
    return DhspgTrainer(model, groups, cfg).run(train_data)


def count_zero_groups(model: Model, groups: list[PruneGroup]) -> int:
    return len(zero_groups(model, groups))
