"""Shared fixtures: small hand-built graphs, random graphs and a compact config."""

from __future__ import annotations

import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from diffusion.config import ScheduleConfig  # noqa: E402
from graph.store import GraphStore, build_graph  # noqa: E402


def random_graph(
    seed: int,
    n: int = 12,
    p: float = 0.25,
    d: int = 4,
    classes: int = 3,
    labeled_fraction: float = 0.75,
) -> GraphStore:
    """Erdos-Renyi topology, Gaussian features, every node labeled, a seeded labeled pool."""
    rng = np.random.default_rng(seed)
    upper = np.triu(rng.random((n, n)) < p, k=1)
    edges = np.argwhere(upper)
    features = rng.normal(size=(n, d))
    labels = {v: int(rng.integers(0, classes)) for v in range(n)}
    # every class present so the classifier width is fixed
    for c in range(min(classes, n)):
        labels[c] = c
    pool = rng.choice(n, size=max(2, int(labeled_fraction * n)), replace=False)
    return build_graph(edges, features, labels, labeled_set=pool.tolist())


@pytest.fixture
def path4() -> GraphStore:
    features = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [2.0, -1.0]])
    return build_graph([(0, 1), (1, 2), (2, 3)], features, {0: 0, 1: 1, 2: 0, 3: 1})


@pytest.fixture
def small_cfg() -> ScheduleConfig:
    return ScheduleConfig(K=2, hidden_dim=3, shell_cap=32, knn_k=5, max_added_per_node_R=5)


@pytest.fixture
def make_graph():
    return random_graph
