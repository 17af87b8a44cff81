"""Int8 kernels: symmetric weight quantization, dynamic activation quantization,
and the integer-accumulating linear layer."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from edgecompress.errors import DimensionError, InputError

QMAX_WEIGHT = 127
# products are bounded by 255 * 127; float64 accumulation stays exact below 2**53
MAX_IN_FEATURES = 2**23


def round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


@dataclass(frozen=True)
class QuantizedTensor:
    """An int8 payload with per-tensor affine parameters: value = (q - zero_point) * scale."""

    values: np.ndarray
    scale: float
    zero_point: int = 0

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def numel(self) -> int:
        return int(self.values.size)

    def dequantize(self) -> np.ndarray:
        return ((self.values.astype(np.float64) - self.zero_point) * self.scale).astype(np.float32)


@dataclass(frozen=True)
class QuantizedLinear:
    weight: QuantizedTensor
    bias: np.ndarray | None
    name: str = ""

    @property
    def weight_q(self) -> np.ndarray:
        return self.weight.values

    @property
    def weight_scale(self) -> float:
        return self.weight.scale


def quantize_weights(w: np.ndarray) -> tuple[np.ndarray, float]:
    """Symmetric per-tensor int8: scale = max|w| / 127, q = clamp(round(w / scale))."""
    w = np.asarray(w)
    if not np.all(np.isfinite(w)):
        raise InputError("cannot quantize non-finite weights")
    w64 = w.astype(np.float64)
    peak = float(np.max(np.abs(w64))) if w64.size else 0.0
    scale = peak / QMAX_WEIGHT if peak > 0 else 1.0
    q = np.clip(round_half_away(w64 / scale), -QMAX_WEIGHT, QMAX_WEIGHT).astype(np.int8)
    return q, scale


def quantize_activations(x: np.ndarray) -> tuple[np.ndarray, float, int]:
    """Asymmetric per-tensor int8 over the live batch.

    The observed range is widened to include zero so that the zero point
    never needs clamping and every value round-trips within scale / 2.
    """
    x64 = np.asarray(x, dtype=np.float64)
    lo = min(float(x64.min()), 0.0) if x64.size else 0.0
    hi = max(float(x64.max()), 0.0) if x64.size else 0.0
    scale = (hi - lo) / 255.0 if hi > lo else 1.0
    zero_point = int(np.clip(round_half_away(np.float64(-128.0 - lo / scale)), -128, 127))
    q = np.clip(round_half_away(x64 / scale) + zero_point, -128, 127).astype(np.int8)
    return q, scale, zero_point


def dequantize_activations(q: np.ndarray, scale: float, zero_point: int) -> np.ndarray:
    return (q.astype(np.float64) - zero_point) * scale


def qlinear_forward(x: np.ndarray, layer: QuantizedLinear) -> np.ndarray:
    """y = x @ W.T + b with int8 activations and weights and exact integer accumulation."""
    x = np.asarray(x)
    f_out, f_in = layer.weight.shape
    if x.shape[-1] != f_in:
        raise DimensionError(f"feature axis: input has {x.shape[-1]} features, weight expects {f_in}")
    if f_in > MAX_IN_FEATURES:
        raise InputError(f"in_features {f_in} exceeds the exact-accumulation bound {MAX_IN_FEATURES}")
    qx, sx, zx = quantize_activations(x)
    lead = x.shape[:-1]
    # integer-valued float64 operands: every partial sum is an exact integer
    xi = qx.reshape(int(np.prod(lead)), f_in).astype(np.float64) - zx
    wi = layer.weight.values.astype(np.float64) - layer.weight.zero_point
    acc = xi @ wi.T
    y = acc * (sx * layer.weight.scale)
    if layer.bias is not None:
        y = y + layer.bias.astype(np.float64)
    return y.reshape(lead + (f_out,)).astype(np.float32)
