"""Graph representation of a model: typed layer nodes over a parameter store."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from edgecompress.engine import Tensor, conv2d, gelu, global_avg_pool, layer_norm, linear
from edgecompress.engine.tensor import FLOAT, permute, reshape
from edgecompress.errors import ConfigurationError, DimensionError, InternalError
from edgecompress.quantization.kernels import QuantizedLinear, QuantizedTensor, qlinear_forward

INPUT = -1

NODE_KINDS = ("Conv2d", "Linear", "LayerNorm", "GELU", "GlobalAvgPool", "ResidualAdd", "Flatten")


@dataclass
class LayerNode:
    id: int
    kind: str
    attrs: dict[str, Any] = field(default_factory=dict)
    inputs: list[int] = field(default_factory=list)
    param_refs: dict[str, str] = field(default_factory=dict)
    name: str = ""

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind,
            "name": self.name,
            "attrs": self.attrs,
            "inputs": self.inputs,
            "param_refs": self.param_refs,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LayerNode":
        return cls(
            id=int(d["id"]),
            kind=d["kind"],
            attrs=dict(d.get("attrs", {})),
            inputs=[int(i) for i in d.get("inputs", [])],
            param_refs=dict(d.get("param_refs", {})),
            name=d.get("name", ""),
        )


@dataclass
class Model:
    nodes: list[LayerNode]
    params: dict[str, Tensor]
    quantized_params: dict[str, QuantizedTensor] = field(default_factory=dict)
    metadata: dict[str, Any] = field(default_factory=dict)

    # ---------------------------------------------------------------- access
    @property
    def num_classes(self) -> int:
        return int(self.metadata["num_classes"])

    @property
    def input_shape(self) -> tuple[int, int, int]:
        return tuple(self.metadata["input_shape"])

    def node(self, node_id: int) -> LayerNode:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    def param_shape(self, name: str) -> tuple[int, ...]:
        if name in self.params:
            return self.params[name].shape
        return self.quantized_params[name].shape

    def param_names(self) -> list[str]:
        """All parameter names, float and quantized, in node order."""
        seen = []
        for n in self.nodes:
            for ref in n.param_refs.values():
                if ref not in seen:
                    seen.append(ref)
        return seen

    def consumers(self) -> dict[int, list[int]]:
        users: dict[int, list[int]] = {n.id: [] for n in self.nodes}
        for n in self.nodes:
            for i in n.inputs:
                if i != INPUT:
                    users[i].append(n.id)
        return users

    def output_node(self) -> LayerNode:
        users = self.consumers()
        terminals = [n for n in self.nodes if not users[n.id]]
        if len(terminals) != 1:
            raise ConfigurationError(f"model must have exactly one output node, found {len(terminals)}")
        return terminals[0]

    def copy(self) -> "Model":
        return Model(
            nodes=[LayerNode(n.id, n.kind, copy.deepcopy(n.attrs), list(n.inputs), dict(n.param_refs), n.name) for n in self.nodes],
            params={k: Tensor(v.data.copy()) for k, v in self.params.items()},
            quantized_params={
                k: QuantizedTensor(q.values.copy(), q.scale, q.zero_point) for k, q in self.quantized_params.items()
            },
            metadata=copy.deepcopy(self.metadata),
        )

    # ------------------------------------------------------------- validity
    def validate(self) -> None:
        """Raise ConfigurationError unless the graph and parameter store agree."""
        seen: set[int] = set()
        for n in self.nodes:
            if n.id in seen:
                raise ConfigurationError(f"duplicate node id {n.id}")
            for i in n.inputs:
                if i != INPUT and i not in seen:
                    raise ConfigurationError(f"node {n.id} reads {i}, which is not an earlier node")
            seen.add(n.id)
            for ref in n.param_refs.values():
                in_float, in_quant = ref in self.params, ref in self.quantized_params
                if in_float == in_quant:
                    raise ConfigurationError(f"parameter {ref!r} must live in exactly one store")
            _check_param_shapes(self, n)
        out = self.output_node()
        if out.kind != "Linear" or out.attrs["out_features"] != self.num_classes:
            raise ConfigurationError("the output node must be a Linear classifier with num_classes outputs")
        stray = (set(self.params) | set(self.quantized_params)) - set(self.param_names())
        if stray:
            raise ConfigurationError(f"unreferenced parameters: {sorted(stray)[:5]}")


def _check_param_shapes(model: Model, n: LayerNode) -> None:
    a = n.attrs
    shape = model.param_shape
    if n.kind == "Conv2d":
        expect = (a["out_channels"], a["in_channels"] // a["groups"], a["kernel"], a["kernel"])
        if shape(n.param_refs["weight"]) != expect:
            raise ConfigurationError(f"node {n.id}: weight {shape(n.param_refs['weight'])} != {expect}")
        if "bias" in n.param_refs and shape(n.param_refs["bias"]) != (a["out_channels"],):
            raise ConfigurationError(f"node {n.id}: bias does not match out_channels")
    elif n.kind == "Linear":
        expect = (a["out_features"], a["in_features"])
        if shape(n.param_refs["weight"]) != expect:
            raise ConfigurationError(f"node {n.id}: weight {shape(n.param_refs['weight'])} != {expect}")
        if "bias" in n.param_refs and shape(n.param_refs["bias"]) != (a["out_features"],):
            raise ConfigurationError(f"node {n.id}: bias does not match out_features")
    elif n.kind == "LayerNorm":
        for key in ("weight", "bias"):
            if shape(n.param_refs[key]) != (a["features"],):
                raise ConfigurationError(f"node {n.id}: LayerNorm {key} does not match features")


# ------------------------------------------------------------------ forward
def _to_channels_last(t: Tensor, layout: str) -> Tensor:
    return permute(t, (0, 2, 3, 1)) if layout == "nchw" else t


def _to_channels_first(t: Tensor, layout: str) -> Tensor:
    return permute(t, (0, 3, 1, 2)) if layout == "nhwc" else t


def _float_param(model: Model, n: LayerNode, key: str) -> Tensor | None:
    ref = n.param_refs.get(key)
    return None if ref is None else model.params[ref]


def forward(model: Model, x) -> Tensor:
    """Run the graph on a batch of NCHW images and return [N, num_classes] logits.

    Four-dimensional activations may be held channels-last between LayerNorm
    and Linear nodes; every such node acts on the channel axis.
    """
    x = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=FLOAT))
    if x.ndim != 4 or tuple(x.shape[1:]) != model.input_shape:
        raise DimensionError(f"input: expected [N, {', '.join(map(str, model.input_shape))}], got {list(x.shape)}")

    values: dict[int, tuple[Tensor, str]] = {INPUT: (x, "nchw")}
    remaining = {n.id: 0 for n in model.nodes}
    for n in model.nodes:
        for i in n.inputs:
            if i != INPUT:
                remaining[i] += 1

    out: tuple[Tensor, str] | None = None
    for n in model.nodes:
        args = [values[i] for i in n.inputs]
        out = _run_node(model, n, args)
        values[n.id] = out
        for i in n.inputs:
            if i != INPUT:
                remaining[i] -= 1
                if remaining[i] == 0:
                    del values[i]
    assert out is not None
    result, layout = out
    if result.ndim != 2:
        raise InternalError(f"model output must be 2-D, got layout {layout} shape {result.shape}")
    return result


def _run_node(model: Model, n: LayerNode, args: list[tuple[Tensor, str]]) -> tuple[Tensor, str]:
    kind = n.kind
    if kind == "Conv2d":
        t, layout = args[0]
        a = n.attrs
        y = conv2d(
            _to_channels_first(t, layout),
            _float_param(model, n, "weight"),
            _float_param(model, n, "bias"),
            stride=a["stride"],
            padding=a["padding"],
            groups=a["groups"],
        )
        return y, "nchw"
    if kind == "Linear":
        t, layout = args[0]
        t = _to_channels_last(t, layout) if t.ndim == 4 else t
        layout = "nhwc" if t.ndim == 4 else layout
        wref = n.param_refs["weight"]
        if wref in model.quantized_params:
            bias = _float_param(model, n, "bias")
            layer = QuantizedLinear(model.quantized_params[wref], None if bias is None else bias.data, wref)
            return Tensor(qlinear_forward(t.data, layer)), layout
        return linear(t, model.params[wref], _float_param(model, n, "bias")), layout
    if kind == "LayerNorm":
        t, layout = args[0]
        t = _to_channels_last(t, layout) if t.ndim == 4 else t
        layout = "nhwc" if t.ndim == 4 else layout
        a = n.attrs
        y = layer_norm(
            t,
            _float_param(model, n, "weight"),
            _float_param(model, n, "bias"),
            eps=a["eps"],
            implicit_zeros=a.get("implicit_zeros", 0),
        )
        return y, layout
    if kind == "GELU":
        t, layout = args[0]
        return gelu(t), layout
    if kind == "GlobalAvgPool":
        t, layout = args[0]
        return global_avg_pool(_to_channels_first(t, layout)), "flat"
    if kind == "Flatten":
        t, layout = args[0]
        t = _to_channels_first(t, layout) if t.ndim == 4 else t
        return reshape(t, (t.shape[0], -1)), "flat"
    if kind == "ResidualAdd":
        (a, la), (b, lb) = args
        if a.ndim == 4 and la != lb:
            b = _to_channels_last(b, lb) if la == "nhwc" else _to_channels_first(b, lb)
        if a.shape != b.shape:
            raise DimensionError(f"residual add: operand shapes {a.shape} and {b.shape} differ")
        return a + b, la
    raise InternalError(f"unknown node kind {kind!r}")
