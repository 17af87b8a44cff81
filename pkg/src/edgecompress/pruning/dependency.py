"""Channel-dependency analysis and zero-invariant group partition.

Every node output carries a channel space. Nodes that must keep the same
channel set (residual adds, depthwise convs, normalization and elementwise
ops) share a space; layers that mix channels start a new one. A space is
pruned one channel at a time, and a PruneGroup lists every parameter slice
that carries that channel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from edgecompress.model.ir import INPUT, LayerNode, Model

PASS_THROUGH = ("LayerNorm", "GELU", "GlobalAvgPool")


def is_depthwise(node: LayerNode) -> bool:
    a = node.attrs
    return node.kind == "Conv2d" and a["groups"] > 1 and a["groups"] == a["in_channels"] == a["out_channels"]


@dataclass
class NodeGroup:
    """One channel space: the nodes whose output channels are tied together."""

    space: int
    size: int
    nodes: list[int] = field(default_factory=list)
    consumers: list[int] = field(default_factory=list)
    members: list[tuple[str, int]] = field(default_factory=list)  # (param, axis) carrying the channel
    output_adjacent: bool = False
    contains_unknown: bool = False
    is_input: bool = False

    @property
    def prunable(self) -> bool:
        return not (self.output_adjacent or self.contains_unknown or self.is_input) and self.size > 0


@dataclass
class DependencyGraph:
    node_groups: list[NodeGroup]
    space_of: dict[int, int]  # node id (or INPUT) -> space of its output

    def group(self, space: int) -> NodeGroup:
        for g in self.node_groups:
            if g.space == space:
                return g
        raise KeyError(space)

    def group_of_node(self, node_id: int) -> NodeGroup:
        return self.group(self.space_of[node_id])


@dataclass(frozen=True)
class PruneGroup:
    group_id: int
    space: int
    channel: int
    space_size: int
    slices: tuple[tuple[str, int, int], ...]  # (param name, axis, index)


class _UnionFind:
    def __init__(self):
        self.parent: dict[int, int] = {}

    def make(self, x: int) -> None:
        self.parent[x] = x

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # keep the older space as representative so numbering is stable
            self.parent[max(ra, rb)] = min(ra, rb)


def _channels(model: Model, n: LayerNode, sizes: dict[int, int]) -> int:
    a = n.attrs
    if n.kind == "Conv2d":
        return a["out_channels"]
    if n.kind == "Linear":
        return a["out_features"]
    return sizes[n.inputs[0]]


def analyze_dependencies(model: Model) -> DependencyGraph:
    uf = _UnionFind()
    raw: dict[int, int] = {}  # node id -> provisional space
    sizes: dict[int, int] = {INPUT: model.input_shape[0]}
    unknown: set[int] = set()
    spatial: dict[int, bool] = {INPUT: True}  # whether the value still has spatial axes
    counter = 0

    def fresh() -> int:
        nonlocal counter
        uf.make(counter)
        counter += 1
        return counter - 1

    raw[INPUT] = fresh()
    for n in model.nodes:
        src = n.inputs[0]
        sizes[n.id] = _channels(model, n, sizes)
        spatial[n.id] = spatial[src] and n.kind not in ("GlobalAvgPool", "Flatten")
        if n.kind == "Conv2d" and is_depthwise(n):
            raw[n.id] = raw[src]
        elif n.kind in ("Conv2d", "Linear"):
            raw[n.id] = fresh()
            if n.kind == "Conv2d" and n.attrs["groups"] != 1:
                unknown.update((raw[n.id], raw[src]))
        elif n.kind in PASS_THROUGH:
            raw[n.id] = raw[src]
        elif n.kind == "ResidualAdd":
            for other in n.inputs[1:]:
                uf.union(raw[src], raw[other])
            raw[n.id] = raw[src]
        elif n.kind == "Flatten" and not spatial[src]:
            raw[n.id] = raw[src]
        else:
            # flattening spatial maps or an unrecognized op: channels stop being traceable
            raw[n.id] = fresh()
            unknown.update((raw[n.id], raw[src]))

    # renumber root spaces densely in creation order
    roots = sorted({uf.find(s) for s in raw.values()})
    dense = {r: i for i, r in enumerate(roots)}
    space_of = {k: dense[uf.find(v)] for k, v in raw.items()}
    unknown_dense = {dense[uf.find(s)] for s in unknown}
    groups = {
        i: NodeGroup(space=i, size=0, contains_unknown=i in unknown_dense) for i in range(len(roots))
    }
    groups[space_of[INPUT]].is_input = True
    groups[space_of[INPUT]].size = sizes[INPUT]

    for n in model.nodes:
        g = groups[space_of[n.id]]
        g.nodes.append(n.id)
        g.size = sizes[n.id]
        inp = groups[space_of[n.inputs[0]]]
        refs = n.param_refs
        quantized = any(r in model.quantized_params for r in refs.values())
        if quantized:
            g.contains_unknown = True
            inp.contains_unknown = True
        if n.kind == "Conv2d":
            g.members.append((refs["weight"], 0))
            if "bias" in refs:
                g.members.append((refs["bias"], 0))
            if not is_depthwise(n):
                inp.consumers.append(n.id)
                if n.attrs["groups"] == 1:
                    inp.members.append((refs["weight"], 1))
        elif n.kind == "Linear":
            g.members.append((refs["weight"], 0))
            if "bias" in refs:
                g.members.append((refs["bias"], 0))
            inp.consumers.append(n.id)
            inp.members.append((refs["weight"], 1))
        elif n.kind == "LayerNorm":
            g.members.extend([(refs["weight"], 0), (refs["bias"], 0)])
    groups[space_of[model.output_node().id]].output_adjacent = True
    return DependencyGraph([groups[i] for i in range(len(roots))], space_of)


def partition_pzigs(depgraph: DependencyGraph, model: Model | None = None) -> list[PruneGroup]:
    """One PruneGroup per channel of every prunable space, in space order."""
    out: list[PruneGroup] = []
    for g in depgraph.node_groups:
        if not g.prunable:
            continue
        for c in range(g.size):
            slices = tuple((name, axis, c) for name, axis in g.members)
            out.append(PruneGroup(len(out), g.space, c, g.size, slices))
    return out


def producer_members(depgraph: DependencyGraph, model: Model, space: int) -> list[tuple[str, int]]:
    """Weight-like axis-0 slices of a space: conv filters, linear rows and LayerNorm gammas."""
    biases = {n.param_refs[k] for n in model.nodes for k in ("bias",) if k in n.param_refs}
    return [(name, axis) for name, axis in depgraph.group(space).members if axis == 0 and name not in biases]
