"""Magnitude and random weight masking, and the fraction sweep."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from edgecompress.data import Dataset
from edgecompress.engine import Tensor
from edgecompress.errors import InputError
from edgecompress.model.ir import Model
from edgecompress.profiler import FP32_ONLY, Profile, profile

METHODS = ("l1", "random")


@dataclass
class MaskSet:
    masks: dict[str, np.ndarray]
    method: str
    fractions: tuple[float, float]  # (linear, conv)

    def zeros(self) -> dict[str, int]:
        return {k: int(m.size - np.count_nonzero(m)) for k, m in self.masks.items()}


def num_masked(frac: float, numel: int) -> int:
    return int(Fraction(str(frac)) * numel // 1)


def _check_frac(frac: float, what: str) -> None:
    if not 0.0 <= frac <= 1.0:
        raise InputError(f"{what} fraction must lie in [0, 1], got {frac}")


def _targets(model: Model, frac_linear: float, frac_conv: float):
    """(param name, fraction) for every float weight tensor; biases and norms are exempt."""
    _check_frac(frac_linear, "linear")
    _check_frac(frac_conv, "conv")
    for n in model.nodes:
        if n.kind not in ("Linear", "Conv2d"):
            continue
        ref = n.param_refs["weight"]
        if ref in model.params:
            yield ref, frac_linear if n.kind == "Linear" else frac_conv


def l1_mask(model: Model, frac_linear: float, frac_conv: float, scope: str = "weights") -> MaskSet:
    """Mask the smallest-magnitude weights of each tensor. Equal magnitudes go by flat index."""
    if scope != "weights":
        raise InputError("only the 'weights' scope is supported")
    masks = {}
    for name, frac in _targets(model, frac_linear, frac_conv):
        w = model.params[name].data
        k = num_masked(frac, w.size)
        order = np.argsort(np.abs(w).ravel(), kind="stable")
        m = np.ones(w.size, dtype=np.uint8)
        m[order[:k]] = 0
        masks[name] = m.reshape(w.shape)
    return MaskSet(masks, "l1", (frac_linear, frac_conv))


def random_mask(model: Model, frac_linear: float, frac_conv: float, seed: int = 0) -> MaskSet:
    rng = np.random.default_rng(seed)
    masks = {}
    for name, frac in _targets(model, frac_linear, frac_conv):
        w = model.params[name].data
        k = num_masked(frac, w.size)
        m = np.ones(w.size, dtype=np.uint8)
        m[rng.permutation(w.size)[:k]] = 0
        masks[name] = m.reshape(w.shape)
    return MaskSet(masks, "random", (frac_linear, frac_conv))


def apply_masks(model: Model, masks: MaskSet) -> Model:
    out = model.copy()
    for name, m in masks.masks.items():
        if out.params[name].shape != m.shape:
            raise InputError(f"mask for {name} has shape {m.shape}, weight has {out.params[name].shape}")
        out.params[name] = Tensor(out.params[name].data * m.astype(out.params[name].data.dtype))
    return out


def make_mask(model: Model, method: str, frac_linear: float, frac_conv: float, seed: int = 0) -> MaskSet:
    if method == "l1":
        return l1_mask(model, frac_linear, frac_conv)
    if method == "random":
        return random_mask(model, frac_linear, frac_conv, seed)
    raise InputError(f"method must be one of {METHODS}, got {method!r}")


def frac_range(start: float, stop: float, step: float) -> list[float]:
    """Inclusive decimal range, exact for inputs like 0.1:0.9:0.1."""
    a, b, s = (Fraction(str(v)) for v in (start, stop, step))
    if s <= 0:
        raise InputError("step must be positive")
    out, v = [], a
    while v <= b:
        out.append(float(v))
        v += s
    return out


@dataclass
class SweepResult:
    method: str
    baseline: Profile
    rows: list[tuple[float, float, Profile]] = field(default_factory=list)

    def to_records(self) -> list[dict]:
        recs = []
        for fl, fc, p in self.rows:
            recs.append(
                {
                    "frac_linear": fl,
                    "frac_conv": fc,
                    "accuracy_pct": p.accuracy_pct,
                    "nonzero_params_m": p.nonzero_params_m,
                    "params_m": p.params_m,
                    "macs_m": p.macs_m,
                    "size_bytes": p.size_bytes,
                }
            )
        return recs

    def to_csv(self) -> str:
        buf = io.StringIO()
        recs = self.to_records()
        cols = ["frac_linear", "frac_conv", "accuracy_pct", "nonzero_params_m", "params_m", "macs_m", "size_bytes"]
        w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for r in recs:
            w.writerow({k: "" if r[k] is None else r[k] for k in cols})
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(
            {"method": self.method, "baseline": self.baseline.to_dict(), "grid": self.to_records()},
            indent=2,
            sort_keys=True,
        )


def sweep(
    model: Model,
    dataset: Dataset | None,
    fracs_linear,
    fracs_conv,
    method: str = "l1",
    seed: int = 0,
    convention: str = FP32_ONLY,
    batch_size: int = 256,
) -> SweepResult:
    """Profile a freshly masked copy of ``model`` at every (linear, conv) fraction pair."""
    if method not in METHODS:
        raise InputError(f"method must be one of {METHODS}, got {method!r}")
    result = SweepResult(method, profile(model, dataset, convention=convention, batch_size=batch_size))
    for fl in fracs_linear:
        for fc in fracs_conv:
            masked = apply_masks(model, make_mask(model, method, fl, fc, seed))
            result.rows.append((fl, fc, profile(masked, dataset, convention=convention, batch_size=batch_size)))
    return result
