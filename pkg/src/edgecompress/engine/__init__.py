from edgecompress.engine.functional import (
    conv2d,
    cross_entropy,
    gelu,
    global_avg_pool,
    layer_norm,
    linear,
    softmax,
)
from edgecompress.engine.optim import OptimizerState, adamw_step
from edgecompress.engine.tensor import FLOAT, INT8, Tensor, no_grad

__all__ = [
    "FLOAT",
    "INT8",
    "OptimizerState",
    "Tensor",
    "adamw_step",
    "conv2d",
    "cross_entropy",
    "gelu",
    "global_avg_pool",
    "layer_norm",
    "linear",
    "no_grad",
    "softmax",
]
