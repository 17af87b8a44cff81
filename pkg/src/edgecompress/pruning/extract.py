"""Structural removal of all-zero groups."""

from __future__ import annotations

import json
from collections import defaultdict

import numpy as np

from edgecompress.engine import Tensor
from edgecompress.errors import ConsistencyError
from edgecompress.model.ir import Model
from edgecompress.pruning.dependency import DependencyGraph, PruneGroup, analyze_dependencies, is_depthwise


def _slice_values(model: Model, name: str, axis: int, index: int) -> np.ndarray:
    return np.take(model.params[name].data, index, axis=axis)


def group_is_zero(model: Model, group: PruneGroup) -> bool:
    return all(not np.any(_slice_values(model, n, a, i)) for n, a, i in group.slices)


def zero_groups(model: Model, groups: list[PruneGroup]) -> list[PruneGroup]:
    return [g for g in groups if group_is_zero(model, g)]


def zero_group(model: Model, group: PruneGroup) -> None:
    """Set every slice of ``group`` to 0.0 in place."""
    for name, axis, index in group.slices:
        data = model.params[name].data
        idx = [slice(None)] * data.ndim
        idx[axis] = index
        data[tuple(idx)] = 0.0


def _producer_params(model: Model) -> set[str]:
    # weight-like parameters whose axis 0 carries output channels
    names = set()
    for n in model.nodes:
        if n.kind in ("Conv2d", "Linear", "LayerNorm"):
            names.add(n.param_refs["weight"])
    return names


def extract_subnetwork(model: Model, groups: list[PruneGroup], depgraph: DependencyGraph | None = None) -> Model:
    """Return a smaller model with every all-zero group physically removed.

    Raises ConsistencyError when a group is only partly zero: one of its
    filters, rows or gammas is entirely zero while other slices are not.
    """
    producers = _producer_params(model)
    removed: dict[str, dict[int, set[int]]] = defaultdict(lambda: defaultdict(set))
    lost_per_space: dict[int, int] = defaultdict(int)
    live: list[PruneGroup] = []
    for g in groups:
        if group_is_zero(model, g):
            for name, axis, index in g.slices:
                removed[name][axis].add(index)
            lost_per_space[g.space] += 1
        else:
            live.append(g)

    out = model.copy()
    for name, by_axis in removed.items():
        data = out.params[name].data
        for axis, idx in by_axis.items():
            data = np.delete(data, sorted(idx), axis=axis)
        out.params[name] = Tensor(np.ascontiguousarray(data))

    # Consistency is judged on what survives: elements shared with removed groups no longer count.
    gone = {name: np.array(sorted(by_axis.get(0, ())), dtype=np.int64) for name, by_axis in removed.items()}
    for g in live:
        for name, axis, index in g.slices:
            if axis != 0 or name not in producers:
                continue
            new_index = index - int(np.searchsorted(gone.get(name, np.zeros(0, np.int64)), index))
            rest = np.take(out.params[name].data, new_index, axis=0)
            if rest.size and not np.any(rest):
                raise ConsistencyError(
                    f"group {g.group_id} is partially zero: {name}[{index}] is zero but the group is not"
                )
    if not lost_per_space:
        return out

    depgraph = depgraph or analyze_dependencies(model)
    for n in out.nodes:
        a = n.attrs
        if n.kind == "Conv2d":
            w = out.params[n.param_refs["weight"]].shape
            if is_depthwise(model.node(n.id)):
                a["in_channels"] = a["out_channels"] = w[0]
                a["groups"] = max(w[0], 1)
                if w[0] == 0:
                    # an emptied depthwise conv is stored as a dense conv with no channels
                    ref = n.param_refs["weight"]
                    out.params[ref] = Tensor(out.params[ref].data.reshape(0, 0, *w[2:]))
            else:
                a["out_channels"] = w[0]
                a["in_channels"] = w[1] * a["groups"]
        elif n.kind == "Linear":
            a["out_features"], a["in_features"] = out.params[n.param_refs["weight"]].shape
        elif n.kind == "LayerNorm":
            # removed channels were exact zeros; the statistics still count them
            a["features"] = out.params[n.param_refs["weight"]].shape[0]
            a["implicit_zeros"] = a.get("implicit_zeros", 0) + lost_per_space.get(depgraph.space_of[n.id], 0)
    out.validate()
    return out


def architecture_summary(before: Model, after: Model) -> list[dict]:
    """Per-node channel widths before and after extraction."""
    rows = []
    for b in before.nodes:
        a = after.node(b.id)
        for key in ("in_channels", "out_channels", "in_features", "out_features", "features"):
            if key in b.attrs:
                rows.append({"node": b.name, "kind": b.kind, "attr": key, "before": b.attrs[key], "after": a.attrs[key]})
    return rows


def summary_json(rows: list[dict]) -> str:
    return json.dumps(rows, indent=2)


def summary_table(rows: list[dict]) -> str:
    headers = ("node", "kind", "attr", "before", "after")
    widths = [max(len(h), *(len(str(r[h])) for r in rows)) if rows else len(h) for h in headers]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for r in rows:
        lines.append("  ".join(str(r[h]).ljust(w) for h, w in zip(headers, widths)))
    return "\n".join(lines)
