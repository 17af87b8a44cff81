"""The five profiling metrics: accuracy, size, parameters, MACs, non-zero parameters.

Two counting conventions exist. ``fp32_only`` counts only float parameters
and the MACs of layers that still run in float; int8-quantized linear layers
drop out of both counts. ``all`` counts everything.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from edgecompress.data import Dataset, batches
from edgecompress.engine import no_grad
from edgecompress.errors import InputError, InternalError
from edgecompress.model.ir import INPUT, Model, forward
from edgecompress.model.serialization import serialized_size

FP32_ONLY = "fp32_only"
ALL = "all"
CONVENTIONS = (FP32_ONLY, ALL)


def _check_convention(convention: str) -> None:
    if convention not in CONVENTIONS:
        raise InputError(f"convention must be one of {CONVENTIONS}, got {convention!r}")


def count_params(model: Model, convention: str = ALL) -> int:
    _check_convention(convention)
    total = sum(t.numel for t in model.params.values())
    if convention == ALL:
        total += sum(q.numel for q in model.quantized_params.values())
    return int(total)


def count_nonzero(model: Model, convention: str = ALL) -> int:
    """Exact count of elements different from 0.0."""
    _check_convention(convention)
    total = sum(int(np.count_nonzero(t.data)) for t in model.params.values())
    if convention == ALL:
        total += sum(int(np.count_nonzero(q.values)) for q in model.quantized_params.values())
    return total


def _is_quantized(model: Model, node) -> bool:
    ref = node.param_refs.get("weight")
    return ref is not None and ref in model.quantized_params


def count_macs(model: Model, input_shape=None, convention: str = ALL) -> int:
    """Multiply-accumulates of one forward pass.

    Conv: N*H'*W'*O*(kh*kw*C/groups). Linear: positions*F_in*F_out.
    Normalization, activations, pooling and additions count zero.
    """
    _check_convention(convention)
    if input_shape is None:
        input_shape = (1, *model.input_shape)
    shapes: dict[int, tuple[int, ...]] = {INPUT: tuple(input_shape)}
    total = 0
    for n in model.nodes:
        src = shapes[n.inputs[0]]
        a = n.attrs
        if n.kind == "Conv2d":
            batch, c, h, w = src
            k, s, p = a["kernel"], a["stride"], a["padding"]
            ho, wo = (h + 2 * p - k) // s + 1, (w + 2 * p - k) // s + 1
            out = (batch, a["out_channels"], ho, wo)
            macs = batch * ho * wo * a["out_channels"] * k * k * (c // a["groups"])
        elif n.kind == "Linear":
            positions = src[0] * src[2] * src[3] if len(src) == 4 else int(np.prod(src[:-1]))
            out = (*src[:1], a["out_features"], *src[2:]) if len(src) == 4 else (*src[:-1], a["out_features"])
            macs = positions * a["in_features"] * a["out_features"]
        elif n.kind in ("LayerNorm", "GELU", "ResidualAdd"):
            out, macs = src, 0
        elif n.kind == "GlobalAvgPool":
            out, macs = src[:2], 0
        elif n.kind == "Flatten":
            out, macs = (src[0], int(np.prod(src[1:]))), 0
        else:
            raise InternalError(f"count_macs: unknown node kind {n.kind!r}")
        shapes[n.id] = out
        if convention == FP32_ONLY and _is_quantized(model, n):
            macs = 0
        total += macs
    return int(total)


def model_size_bytes(model: Model) -> int:
    """Size of the serialized .cxm file."""
    return serialized_size(model)


def predict(model: Model, ds: Dataset, batch_size: int = 256) -> np.ndarray:
    preds = []
    with no_grad():
        for images, _ in batches(ds, batch_size, shuffle_seed=None):
            logits = forward(model, images).data
            preds.append(np.argmax(logits, axis=1))  # ties resolve to the lowest class index
    return np.concatenate(preds) if preds else np.zeros(0, dtype=np.int64)


def evaluate(model: Model, ds: Dataset, batch_size: int = 256) -> float:
    """Top-1 accuracy in percent."""
    if len(ds) == 0:
        raise InputError("cannot evaluate on an empty dataset")
    preds = predict(model, ds, batch_size)
    return 100.0 * float(np.mean(preds == ds.labels.astype(np.int64)))


@dataclass(frozen=True)
class Profile:
    accuracy_pct: float | None
    size_bytes: int
    params_m: float
    macs_m: float
    nonzero_params_m: float
    counting_convention: str = FP32_ONLY

    @property
    def size_mb(self) -> float:
        return self.size_bytes / 1e6

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "Profile":
        return cls(
            accuracy_pct=None if d["accuracy_pct"] is None else float(d["accuracy_pct"]),
            size_bytes=int(d["size_bytes"]),
            params_m=float(d["params_m"]),
            macs_m=float(d["macs_m"]),
            nonzero_params_m=float(d["nonzero_params_m"]),
            counting_convention=d.get("counting_convention", FP32_ONLY),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "Profile":
        return cls.from_dict(json.loads(text))


def profile(
    model: Model,
    dataset: Dataset | None = None,
    input_shape=None,
    convention: str = FP32_ONLY,
    batch_size: int = 256,
    accuracy: float | None = None,
) -> Profile:
    """Measure all five metrics. Accuracy is None when no dataset is given.

    A precomputed ``accuracy`` skips evaluation.
    """
    if accuracy is None and dataset is not None:
        accuracy = evaluate(model, dataset, batch_size)
    return Profile(
        accuracy_pct=accuracy,
        size_bytes=model_size_bytes(model),
        params_m=count_params(model, convention) / 1e6,
        macs_m=count_macs(model, input_shape, convention) / 1e6,
        nonzero_params_m=count_nonzero(model, convention) / 1e6,
        counting_convention=convention,
    )
