from edgecompress.pruning.dependency import (
    DependencyGraph,
    NodeGroup,
    PruneGroup,
    analyze_dependencies,
    partition_pzigs,
)
from edgecompress.pruning.dhspg import DhspgConfig, DhspgTrainer, dhspg_train, half_space_project
from edgecompress.pruning.extract import (
    architecture_summary,
    extract_subnetwork,
    group_is_zero,
    summary_json,
    summary_table,
    zero_group,
    zero_groups,
)
from edgecompress.pruning.unstructured import MaskSet, apply_masks, l1_mask, random_mask, sweep

__all__ = [
    "DependencyGraph",
    "DhspgConfig",
    "DhspgTrainer",
    "MaskSet",
    "NodeGroup",
    "PruneGroup",
    "analyze_dependencies",
    "apply_masks",
    "architecture_summary",
    "dhspg_train",
    "extract_subnetwork",
    "group_is_zero",
    "half_space_project",
    "l1_mask",
    "partition_pzigs",
    "random_mask",
    "summary_json",
    "summary_table",
    "sweep",
    "zero_group",
    "zero_groups",
]
