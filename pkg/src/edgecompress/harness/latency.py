"""Single-image inference latency."""

from __future__ import annotations

import time

import numpy as np

from edgecompress.engine import no_grad
from edgecompress.errors import UsageError
from edgecompress.model.ir import Model, forward


def measure_latency(model: Model, input_shape=None, warmup_iters: int = 10, timed_iters: int = 100, seed: int = 0) -> dict:
    """Mean, median and 95th-percentile milliseconds per forward pass."""
    if timed_iters < 1:
        raise UsageError("timed_iters must be at least 1")
    if warmup_iters < 0:
        raise UsageError("warmup_iters must be >= 0")
    shape = tuple(input_shape) if input_shape is not None else (1, *model.input_shape)
    x = np.random.default_rng(seed).normal(size=shape).astype(np.float32)
    times = []
    with no_grad():
        for _ in range(warmup_iters):
            forward(model, x)
        for _ in range(timed_iters):
            t0 = time.perf_counter()
            forward(model, x)
            times.append((time.perf_counter() - t0) * 1e3)
    arr = np.asarray(times)
    return {
        "mean_ms": float(arr.mean()),
        "p50_ms": float(np.percentile(arr, 50)),
        "p95_ms": float(np.percentile(arr, 95)),
        "iters": int(timed_iters),
    }
