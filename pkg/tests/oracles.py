"""Independent reference implementations used only by the tests (float64)."""

from __future__ import annotations

import math

import numpy as np


def naive_conv2d(x, w, b=None, stride=1, padding=0, groups=1, counter=None):
    """Six nested loops over output and kernel positions; optionally counts multiplies."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    n, c, h, wd = x.shape
    o, cg, kh, kw = w.shape
    xp = np.zeros((n, c, h + 2 * padding, wd + 2 * padding))
    xp[:, :, padding : padding + h, padding : padding + wd] = x
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (wd + 2 * padding - kw) // stride + 1
    og = o // groups
    out = np.zeros((n, o, ho, wo))
    mults = 0
    for bi in range(n):
        for oc in range(o):
            g = oc // og
            for i in range(ho):
                for j in range(wo):
                    acc = 0.0
                    for ci in range(cg):
                        for u in range(kh):
                            for v in range(kw):
                                acc += xp[bi, g * cg + ci, i * stride + u, j * stride + v] * w[oc, ci, u, v]
                                mults += 1
                    out[bi, oc, i, j] = acc + (0.0 if b is None else float(b[oc]))
    if counter is not None:
        counter["mults"] = counter.get("mults", 0) + mults
    return out


def naive_linear(x, w, b=None, counter=None):
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    lead = x.shape[:-1]
    rows = x.reshape(-1, x.shape[-1])
    out = np.zeros((rows.shape[0], w.shape[0]))
    mults = 0
    for r in range(rows.shape[0]):
        for o in range(w.shape[0]):
            acc = 0.0
            for i in range(w.shape[1]):
                acc += rows[r, i] * w[o, i]
                mults += 1
            out[r, o] = acc + (0.0 if b is None else float(b[o]))
    if counter is not None:
        counter["mults"] = counter.get("mults", 0) + mults
    return out.reshape(lead + (w.shape[0],))


def phi(v: float) -> float:
    """Standard normal CDF through the complementary error function of the math module."""
    return 0.5 * math.erfc(-v / math.sqrt(2.0))


def central_difference(fn, arrays, index, h=1e-3):
    """Numerical gradient of scalar ``fn(*arrays)`` with respect to ``arrays[index]``."""
    base = [a.copy() for a in arrays]
    target = base[index]
    grad = np.zeros(target.shape, dtype=np.float64)
    flat = target.reshape(-1)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + h
        fp = float(fn(*base))
        flat[k] = orig - h
        fm = float(fn(*base))
        flat[k] = orig
        grad.reshape(-1)[k] = (fp - fm) / (2 * h)
    return grad


def relative_error(a, b) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / scale)


def naive_graph_macs(model, x):
    """Execute a model graph with the loop kernels above and count every multiply.

    Activations stay NCHW throughout; linear layers act on the channel axis by
    moving it last and back. Returns (logits, multiplies).
    """
    counter = {"mults": 0}
    values = {-1: np.asarray(x, dtype=np.float64)}
    p = {k: v.data for k, v in model.params.items()}
    p.update({k: q.dequantize() for k, q in model.quantized_params.items()})
    for n in model.nodes:
        a = values[n.inputs[0]]
        refs = n.param_refs
        if n.kind == "Conv2d":
            at = n.attrs
            out = naive_conv2d(a, p[refs["weight"]], p.get(refs.get("bias")), at["stride"], at["padding"], at["groups"], counter)
        elif n.kind == "Linear":
            if a.ndim == 4:
                out = naive_linear(a.transpose(0, 2, 3, 1), p[refs["weight"]], p.get(refs.get("bias")), counter)
                out = out.transpose(0, 3, 1, 2)
            else:
                out = naive_linear(a, p[refs["weight"]], p.get(refs.get("bias")), counter)
        elif n.kind == "LayerNorm":
            axis = 1 if a.ndim == 4 else -1
            mu = a.mean(axis=axis, keepdims=True)
            var = ((a - mu) ** 2).mean(axis=axis, keepdims=True)
            shape = (1, -1, 1, 1) if a.ndim == 4 else (1, -1)
            out = (a - mu) / np.sqrt(var + n.attrs["eps"]) * p[refs["weight"]].reshape(shape) + p[refs["bias"]].reshape(shape)
        elif n.kind == "GELU":
            out = np.vectorize(lambda v: v * phi(v))(a) if a.size else a
        elif n.kind == "GlobalAvgPool":
            out = a.mean(axis=(2, 3))
        elif n.kind == "Flatten":
            out = a.reshape(a.shape[0], -1)
        elif n.kind == "ResidualAdd":
            out = a + values[n.inputs[1]]
        else:
            raise ValueError(n.kind)
        values[n.id] = out
    return values[model.nodes[-1].id], counter["mults"]


def closed_form_macs(depths, widths, num_classes, hw=32, in_ch=3):
    r = hw // 4
    total = r * r * widths[0] * 16 * in_ch
    for s, (d, c) in enumerate(zip(depths, widths)):
        if s:
            r //= 2
            total += r * r * c * 4 * widths[s - 1]
        total += d * r * r * (49 * c + 8 * c * c)
    return total + widths[-1] * num_classes
