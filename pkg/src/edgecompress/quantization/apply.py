"""Whole-model dynamic quantization."""

from __future__ import annotations

from typing import TYPE_CHECKING

from edgecompress.errors import ConfigurationError
from edgecompress.quantization.kernels import QuantizedTensor, quantize_weights

if TYPE_CHECKING:
    from edgecompress.model.ir import Model

SUPPORTED_TARGETS = frozenset({"Linear"})


def quantize_model(model: "Model", targets=frozenset({"Linear"})) -> "Model":
    """Return a copy whose targeted layer weights are stored as int8.

    Biases, convolutions and LayerNorm stay float32. Layers that are already
    quantized are skipped, so the operation is idempotent.
    """
    targets = frozenset(targets)
    unsupported = targets - SUPPORTED_TARGETS
    if unsupported:
        raise ConfigurationError(f"only Linear layers can be dynamically quantized, got {sorted(unsupported)}")
    out = model.copy()
    for n in out.nodes:
        if n.kind not in targets:
            continue
        ref = n.param_refs["weight"]
        if ref in out.quantized_params:
            continue
        q, scale = quantize_weights(out.params.pop(ref).data)
        out.quantized_params[ref] = QuantizedTensor(q, scale, 0)
    return out
