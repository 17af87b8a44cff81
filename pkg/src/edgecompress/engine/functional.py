"""Forward operators used by ConvNeXt, each with a hand-written backward."""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import erf

from edgecompress.engine.tensor import FLOAT, Tensor, make_result
from edgecompress.errors import ConfigurationError, DimensionError, InputError

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def conv_output_size(size: int, kernel: int, stride: int, padding: int, axis: str) -> int:
    span = size + 2 * padding - kernel
    if span < 0 or span % stride:
        raise DimensionError(
            f"{axis}: (size {size} + 2*{padding} - kernel {kernel}) is not a non-negative multiple of stride {stride}"
        )
    return span // stride + 1


# ---------------------------------------------------------------------- conv2d
def _depthwise_forward(xp, w, stride, ho, wo):
    n, c = xp.shape[:2]
    _, _, kh, kw = w.shape
    out = np.zeros((n, c, ho, wo), dtype=FLOAT)
    for i in range(kh):
        for j in range(kw):
            patch = xp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride]
            out += patch * w[:, 0, i, j][None, :, None, None]
    return out


def _depthwise_backward(g, xp, w, stride, ho, wo):
    kh, kw = w.shape[2:]
    gxp = np.zeros_like(xp)
    gw = np.zeros_like(w)
    for i in range(kh):
        for j in range(kw):
            sl = (slice(None), slice(None), slice(i, i + stride * ho, stride), slice(j, j + stride * wo, stride))
            gw[:, 0, i, j] = np.einsum("nchw,nchw->c", g, xp[sl])
            gxp[sl] += g * w[:, 0, i, j][None, :, None, None]
    return gxp, gw


def _im2col(xp, kh, kw, stride, ho, wo):
    # rows: (n, ho, wo); columns: (c, kh, kw) matching the weight layout
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :ho, :wo]
    n, c = xp.shape[:2]
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * kh * kw)


def _col2im(cols, xp_shape, kh, kw, stride, ho, wo):
    n, c = xp_shape[:2]
    cols = cols.reshape(n, ho, wo, c, kh, kw)
    gxp = np.zeros(xp_shape, dtype=FLOAT)
    for i in range(kh):
        for j in range(kw):
            gxp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += cols[:, :, :, :, i, j].transpose(
                0, 3, 1, 2
            )
    return gxp


def _dense_forward(xp, w, stride, ho, wo):
    o, c, kh, kw = w.shape
    n = xp.shape[0]
    cols = _im2col(xp, kh, kw, stride, ho, wo)
    out = cols @ w.reshape(o, c * kh * kw).T
    return out.reshape(n, ho, wo, o).transpose(0, 3, 1, 2), cols


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1, padding: int = 0, groups: int = 1) -> Tensor:
    """2-D cross-correlation over NCHW input with OIHW weights."""
    if x.ndim != 4:
        raise DimensionError(f"conv2d input must be 4-D NCHW, got shape {x.shape}")
    if w.ndim != 4:
        raise DimensionError(f"conv2d weight must be 4-D OIHW, got shape {w.shape}")
    n, c, h, wd = x.shape
    o, cg, kh, kw = w.shape
    if groups < 1 or c % groups or o % groups:
        raise ConfigurationError(f"channels ({c} in, {o} out) not divisible by groups={groups}")
    if cg != c // groups:
        raise DimensionError(f"channel axis: weight expects {cg * groups} input channels, input has {c}")
    if b is not None and b.shape != (o,):
        raise DimensionError(f"bias axis: expected ({o},), got {b.shape}")
    ho = conv_output_size(h, kh, stride, padding, "height")
    wo = conv_output_size(wd, kw, stride, padding, "width")

    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data
    depthwise = groups == c == o and cg == 1
    cache = []
    if depthwise:
        out = _depthwise_forward(xp, w.data, stride, ho, wo)
    elif groups == 1:
        out, cols = _dense_forward(xp, w.data, stride, ho, wo)
        cache.append(cols)
    else:
        og = o // groups
        parts = []
        for gi in range(groups):
            part, cols = _dense_forward(xp[:, gi * cg : (gi + 1) * cg], w.data[gi * og : (gi + 1) * og], stride, ho, wo)
            parts.append(part)
            cache.append(cols)
        out = np.concatenate(parts, axis=1)
    out = np.ascontiguousarray(out, dtype=FLOAT)
    if b is not None:
        out += b.data[None, :, None, None]

    def backward(g):
        g = np.ascontiguousarray(g, dtype=FLOAT)
        if depthwise:
            gxp, gw = _depthwise_backward(g, xp, w.data, stride, ho, wo)
        else:
            og = o // groups
            gxp = np.zeros(xp.shape, dtype=FLOAT)
            gw = np.zeros(w.shape, dtype=FLOAT)
            for gi in range(groups):
                gg = g[:, gi * og : (gi + 1) * og].transpose(0, 2, 3, 1).reshape(n * ho * wo, og)
                wmat = w.data[gi * og : (gi + 1) * og].reshape(og, cg * kh * kw)
                gw[gi * og : (gi + 1) * og] = (gg.T @ cache[gi]).reshape(og, cg, kh, kw)
                sub_shape = (n, cg) + xp.shape[2:]
                gxp[:, gi * cg : (gi + 1) * cg] = _col2im(gg @ wmat, sub_shape, kh, kw, stride, ho, wo)
        gx = gxp[:, :, padding : padding + h, padding : padding + wd] if padding else gxp
        gb = g.sum(axis=(0, 2, 3)) if b is not None else None
        return (np.ascontiguousarray(gx), gw, gb)

    parents = (x, w) if b is None else (x, w, b)
    return make_result(out, parents, backward)


# ---------------------------------------------------------------------- linear
def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """y = x @ W.T + b over the last axis."""
    f_out, f_in = weight.shape
    if x.shape[-1] != f_in:
        raise DimensionError(f"feature axis: input has {x.shape[-1]} features, weight expects {f_in}")
    lead = x.shape[:-1]
    rows = int(np.prod(lead))
    x2 = x.data.reshape(rows, f_in)
    out = x2 @ weight.data.T
    if bias is not None:
        if bias.shape != (f_out,):
            raise DimensionError(f"bias axis: expected ({f_out},), got {bias.shape}")
        out = out + bias.data
    out = out.reshape(lead + (f_out,))

    def backward(g):
        g2 = g.reshape(rows, f_out)
        gx = (g2 @ weight.data).reshape(x.shape)
        gw = g2.T @ x2
        gb = g2.sum(axis=0) if bias is not None else None
        return (gx, gw, gb)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return make_result(out, parents, backward)


# ------------------------------------------------------------------ layer norm
def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-6, implicit_zeros: int = 0) -> Tensor:
    """Normalize over the last axis, then apply ``gamma * x_hat + beta``.

    ``implicit_zeros`` counts extra features that are known to be exactly zero
    and have been removed from storage; they still take part in the mean and
    variance so that removing zeroed channels leaves the output unchanged.
    """
    if eps <= 0:
        raise InputError(f"eps must be positive, got {eps}")
    f = x.shape[-1]
    if gamma.shape != (f,) or beta.shape != (f,):
        raise DimensionError(f"feature axis: input has {f} features, gamma {gamma.shape}, beta {beta.shape}")
    total = f + implicit_zeros
    # statistics in float64: nearly equal features would otherwise lose most of their digits when centered
    xd = x.data.astype(np.float64)
    mean = xd.sum(axis=-1, keepdims=True) / total
    centered = xd - mean
    var = ((centered * centered).sum(axis=-1, keepdims=True) + implicit_zeros * mean * mean) / total
    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = centered * inv_std
    out = x_hat * gamma.data + beta.data

    def backward(g):
        axes = tuple(range(g.ndim - 1))
        g_gamma = (g * x_hat).sum(axis=axes)
        g_beta = g.sum(axis=axes)
        gx_hat = g * gamma.data
        # implicit entries have zero upstream gradient, so the sums run over stored features only
        gx = (inv_std / total) * (
            total * gx_hat
            - gx_hat.sum(axis=-1, keepdims=True)
            - x_hat * (gx_hat * x_hat).sum(axis=-1, keepdims=True)
        )
        return (gx.astype(FLOAT), g_gamma.astype(FLOAT), g_beta.astype(FLOAT))

    return make_result(out.astype(FLOAT), (x, gamma, beta), backward)


# ------------------------------------------------------------------ activation
def gelu(x: Tensor) -> Tensor:
    """Exact GELU, x * Phi(x)."""
    xd = x.data
    cdf = 0.5 * (1.0 + erf(xd / _SQRT2))
    out = (xd * cdf).astype(FLOAT)

    def backward(g):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * xd * xd)
        return ((g * (cdf + xd * pdf)).astype(FLOAT),)

    return make_result(out, (x,), backward)


def global_avg_pool(x: Tensor) -> Tensor:
    """Mean over the spatial axes of NCHW input."""
    if x.ndim != 4:
        raise DimensionError(f"global_avg_pool expects NCHW input, got shape {x.shape}")
    n, c, h, w = x.shape
    out = x.data.mean(axis=(2, 3))

    def backward(g):
        return (np.broadcast_to(g[:, :, None, None] / (h * w), x.shape).astype(FLOAT),)

    return make_result(out.astype(FLOAT), (x,), backward)


# ------------------------------------------------------------------------ loss
def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of ``labels`` under ``softmax(logits)``."""
    labels = np.asarray(labels).astype(np.int64).reshape(-1)
    if logits.ndim != 2:
        raise DimensionError(f"cross_entropy expects [N, K] logits, got {logits.shape}")
    n, k = logits.shape
    if labels.shape[0] != n:
        raise DimensionError(f"batch axis: {n} logits rows, {labels.shape[0]} labels")
    if n and (labels.min() < 0 or labels.max() >= k):
        raise InputError(f"labels must lie in [0, {k})")
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    picked = shifted[np.arange(n), labels]
    loss = np.asarray((log_z - picked).mean(), dtype=FLOAT)

    def backward(g):
        probs = softmax(logits.data)
        probs[np.arange(n), labels] -= 1.0
        return ((probs * (g / n)).astype(FLOAT),)

    return make_result(loss, (logits,), backward)
