"""AdamW with decoupled weight decay."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from edgecompress.engine.tensor import FLOAT


@dataclass
class OptimizerState:
    lr: float = 1e-3
    weight_decay: float = 0.05
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    step: int = 0
    exp_avg: dict[str, np.ndarray] = field(default_factory=dict)
    exp_avg_sq: dict[str, np.ndarray] = field(default_factory=dict)


def adamw_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray | None], state: OptimizerState) -> None:
    """Update ``params`` in place and advance ``state`` by one step.

    A parameter whose gradient is None is treated as having zero gradient.
    """
    state.step += 1
    b1, b2 = state.betas
    bias1 = 1.0 - b1**state.step
    bias2 = 1.0 - b2**state.step
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p)
        m = state.exp_avg.get(name)
        if m is None:
            m = state.exp_avg[name] = np.zeros_like(p, dtype=FLOAT)
            state.exp_avg_sq[name] = np.zeros_like(p, dtype=FLOAT)
        v = state.exp_avg_sq[name]
        if state.weight_decay:
            p *= FLOAT(1.0 - state.lr * state.weight_decay)
        m *= FLOAT(b1)
        m += FLOAT(1.0 - b1) * g
        v *= FLOAT(b2)
        v += FLOAT(1.0 - b2) * g * g
        denom = np.sqrt(v / FLOAT(bias2)) + FLOAT(state.eps)
        p -= FLOAT(state.lr / bias1) * m / denom
