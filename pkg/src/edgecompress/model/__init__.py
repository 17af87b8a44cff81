from edgecompress.model.convnext import PRESETS, ConvNeXtConfig, build_convnext, preset
from edgecompress.model.ir import INPUT, NODE_KINDS, LayerNode, Model, forward
from edgecompress.model.serialization import from_bytes, load, save, serialized_size, to_bytes

__all__ = [
    "INPUT",
    "NODE_KINDS",
    "PRESETS",
    "ConvNeXtConfig",
    "LayerNode",
    "Model",
    "build_convnext",
    "forward",
    "from_bytes",
    "load",
    "preset",
    "save",
    "serialized_size",
    "to_bytes",
]
