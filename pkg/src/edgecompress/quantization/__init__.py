from edgecompress.quantization.apply import quantize_model
from edgecompress.quantization.kernels import (
    MAX_IN_FEATURES,
    QMAX_WEIGHT,
    QuantizedLinear,
    QuantizedTensor,
    dequantize_activations,
    qlinear_forward,
    quantize_activations,
    quantize_weights,
)

__all__ = [
    "MAX_IN_FEATURES",
    "QMAX_WEIGHT",
    "QuantizedLinear",
    "QuantizedTensor",
    "dequantize_activations",
    "qlinear_forward",
    "quantize_activations",
    "quantize_model",
    "quantize_weights",
]
