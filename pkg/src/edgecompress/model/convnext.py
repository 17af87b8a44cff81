"""ConvNeXt graph builder and named configurations."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from edgecompress.engine import Tensor
from edgecompress.engine.tensor import FLOAT
from edgecompress.errors import ConfigurationError
from edgecompress.model.ir import INPUT, LayerNode, Model

INIT_STD = 0.02
LN_EPS = 1e-6


@dataclass(frozen=True)
class ConvNeXtConfig:
    depths: tuple[int, int, int, int]
    widths: tuple[int, int, int, int]
    num_classes: int = 10
    input: tuple[int, int, int] = (3, 32, 32)
    name: str = "custom"

    def validate(self) -> None:
        if len(self.depths) != 4 or len(self.widths) != 4:
            raise ConfigurationError("depths and widths need four entries each")
        if min(self.depths) < 1 or min(self.widths) < 1 or self.num_classes < 1:
            raise ConfigurationError("depths, widths and num_classes must be positive")
        c, h, w = self.input
        # patchify (/4) then three stride-2 downsamplings, each needing an even size
        for axis, size in (("height", h), ("width", w)):
            if size % 32:
                raise ConfigurationError(f"input {axis} {size} must be divisible by 32 (4x stem, three 2x downsamplings)")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ConvNeXtConfig":
        if "preset" in d:
            base = PRESETS[d["preset"]]
            d = {**base.to_dict(), **{k: v for k, v in d.items() if k != "preset"}}
        return cls(
            depths=tuple(d["depths"]),
            widths=tuple(d["widths"]),
            num_classes=int(d.get("num_classes", 10)),
            input=tuple(d.get("input", (3, 32, 32))),
            name=d.get("name", "custom"),
        )

    @classmethod
    def from_file(cls, path: str | Path) -> "ConvNeXtConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


PRESETS = {
    "micro": ConvNeXtConfig((1, 1, 3, 1), (24, 48, 96, 192), name="micro"),
    "tiny": ConvNeXtConfig((3, 3, 9, 3), (96, 192, 384, 768), name="tiny"),
    "small": ConvNeXtConfig((3, 3, 27, 3), (96, 192, 384, 768), name="small"),
    "base": ConvNeXtConfig((3, 3, 27, 3), (128, 256, 512, 1024), name="base"),
    "large": ConvNeXtConfig((3, 3, 27, 3), (192, 384, 768, 1536), name="large"),
}


def preset(name: str, **overrides) -> ConvNeXtConfig:
    try:
        base = PRESETS[name]
    except KeyError:
        raise ConfigurationError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return ConvNeXtConfig(**{**asdict(base), **overrides}) if overrides else base


def trunc_normal(rng: np.random.Generator, shape, std: float = INIT_STD) -> np.ndarray:
    """Normal(0, std) truncated to [-2 std, 2 std] by resampling."""
    out = rng.standard_normal(shape, dtype=np.float32)
    bad = np.abs(out) > 2.0
    while bad.any():
        out[bad] = rng.standard_normal(int(bad.sum()), dtype=np.float32)
        bad = np.abs(out) > 2.0
    out *= FLOAT(std)
    return out


@dataclass
class _GraphBuilder:
    rng: np.random.Generator | None
    nodes: list[LayerNode] = field(default_factory=list)
    params: dict[str, Tensor] = field(default_factory=dict)

    def _param(self, name: str, shape, kind: str) -> str:
        if kind == "weight" and self.rng is not None:
            data = trunc_normal(self.rng, shape)
        elif kind == "ones":
            data = np.ones(shape, dtype=FLOAT)
        else:
            data = np.zeros(shape, dtype=FLOAT)
        self.params[name] = Tensor(data)
        return name

    def _add(self, kind, name, inputs, attrs=None, params=None) -> int:
        nid = len(self.nodes)
        self.nodes.append(LayerNode(nid, kind, attrs or {}, list(inputs), params or {}, name))
        return nid

    def conv(self, name, src, cin, cout, kernel, stride, padding, groups=1) -> int:
        refs = {
            "weight": self._param(f"{name}.weight", (cout, cin // groups, kernel, kernel), "weight"),
            "bias": self._param(f"{name}.bias", (cout,), "zeros"),
        }
        attrs = dict(in_channels=cin, out_channels=cout, kernel=kernel, stride=stride, padding=padding, groups=groups)
        return self._add("Conv2d", name, [src], attrs, refs)

    def linear(self, name, src, fin, fout) -> int:
        refs = {
            "weight": self._param(f"{name}.weight", (fout, fin), "weight"),
            "bias": self._param(f"{name}.bias", (fout,), "zeros"),
        }
        return self._add("Linear", name, [src], dict(in_features=fin, out_features=fout), refs)

    def norm(self, name, src, features) -> int:
        refs = {
            "weight": self._param(f"{name}.weight", (features,), "ones"),
            "bias": self._param(f"{name}.bias", (features,), "zeros"),
        }
        return self._add("LayerNorm", name, [src], dict(features=features, eps=LN_EPS, implicit_zeros=0), refs)

    def op(self, kind, name, *srcs) -> int:
        return self._add(kind, name, srcs)


def build_convnext(cfg: ConvNeXtConfig, seed: int = 0, init: bool = True) -> Model:
    """Build a ConvNeXt graph.

    Layout: 4x4/4 patchify stem; four stages of blocks (7x7 depthwise conv,
    LayerNorm, 4x expand linear, GELU, project linear, residual add); a
    LayerNorm + 2x2/2 conv downsampler between stages; head of LayerNorm,
    global average pool and a linear classifier. Weights are drawn from a
    truncated normal (std 0.02), biases start at zero. With ``init=False``
    weights are left at zero, which is enough for shape-only profiling.
    """
    cfg.validate()
    g = _GraphBuilder(np.random.default_rng(seed) if init else None)
    cin = cfg.input[0]
    x = g.conv("stem", INPUT, cin, cfg.widths[0], kernel=4, stride=4, padding=0)
    for s, (depth, dim) in enumerate(zip(cfg.depths, cfg.widths)):
        if s > 0:
            x = g.norm(f"downsample.{s}.norm", x, cfg.widths[s - 1])
            x = g.conv(f"downsample.{s}.conv", x, cfg.widths[s - 1], dim, kernel=2, stride=2, padding=0)
        for b in range(depth):
            p = f"stages.{s}.{b}"
            h = g.conv(f"{p}.dwconv", x, dim, dim, kernel=7, stride=1, padding=3, groups=dim)
            h = g.norm(f"{p}.norm", h, dim)
            h = g.linear(f"{p}.pwconv1", h, dim, 4 * dim)
            h = g.op("GELU", f"{p}.act", h)
            h = g.linear(f"{p}.pwconv2", h, 4 * dim, dim)
            x = g.op("ResidualAdd", f"{p}.add", x, h)
    x = g.norm("head.norm", x, cfg.widths[-1])
    x = g.op("GlobalAvgPool", "head.pool", x)
    g.linear("head.fc", x, cfg.widths[-1], cfg.num_classes)
    model = Model(
        nodes=g.nodes,
        params=g.params,
        metadata={
            "config": cfg.name,
            "num_classes": cfg.num_classes,
            "input_shape": list(cfg.input),
            "convnext": {"depths": list(cfg.depths), "widths": list(cfg.widths)},
        },
    )
    model.validate()
    return model
