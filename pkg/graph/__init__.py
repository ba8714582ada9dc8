"""Structural graph, hop shells and their on-disk formats."""

from graph.shells import HopShells, build_hop_shells, restore_pruned
from graph.store import (
    UNLABELED,
    GraphStore,
    apply_topology_delta,
    build_graph,
    jaccard_pairs,
    structural_similarity,
    with_pairs,
)

__all__ = [
    "UNLABELED",
    "GraphStore",
    "HopShells",
    "apply_topology_delta",
    "build_graph",
    "build_hop_shells",
    "jaccard_pairs",
    "restore_pruned",
    "structural_similarity",
    "with_pairs",
]
