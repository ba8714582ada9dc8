"""
Synthetic stochastic-block-model graphs with planted noisy edges.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Union

import networkx as nx
import numpy as np

from diffusion.config import ScheduleConfig
from errors import InvalidArgumentError, MalformedInputError
from graph.store import GraphStore, build_graph

logger = logging.getLogger(__name__)

# Training schedule for the default block model: 200 nodes learn within the
# epoch budget, and the validation set holds 20 of the 50 labeled nodes.
SBM_SCHEDULE = {
    "lr0": 0.5,
    "epochs": 200,
    "patience": 50,
    "hidden_dim": 16,
    "val_fraction": 0.4,
}


def sbm_schedule(**overrides) -> ScheduleConfig:
    return ScheduleConfig(**{**SBM_SCHEDULE, **overrides})


@dataclass(frozen=True)
class SbmSpec:
    blocks: int = 2
    nodes_per_block: int = 100
    p_in: float = 0.1
    p_out: float = 0.01
    noise_fraction: float = 0.3
    feature_dim: int = 16
    feature_noise_sigma: float = 0.5
    seed: int = 0
    labeled_fraction: float = 0.25

    def __post_init__(self):
        if self.blocks < 1 or self.nodes_per_block < 1:
            raise InvalidArgumentError(
                f"an SBM needs nodes (blocks={self.blocks}, nodes_per_block={self.nodes_per_block})"
            )
        for name in ("p_in", "p_out"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise InvalidArgumentError(f"{name} must lie in [0, 1], got {getattr(self, name)}")
        if self.noise_fraction < 0:
            raise InvalidArgumentError("noise_fraction must be >= 0")
        if self.feature_dim < 1:
            raise InvalidArgumentError("feature_dim must be >= 1")
        if self.feature_noise_sigma < 0:
            raise InvalidArgumentError("feature_noise_sigma must be >= 0")
        if not 0 < self.labeled_fraction <= 1:
            raise InvalidArgumentError("labeled_fraction must lie in (0, 1]")
        if self.seed < 0:
            raise InvalidArgumentError("seed must be >= 0")

    @property
    def node_count(self) -> int:
        return self.blocks * self.nodes_per_block

    def with_seed(self, seed: int) -> "SbmSpec":
        return SbmSpec(**{**asdict(self), "seed": seed})

    @classmethod
    def from_dict(cls, data: dict) -> "SbmSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise MalformedInputError(f"unknown SBM spec key(s) {sorted(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise MalformedInputError(f"bad SBM spec value: {exc}") from None

    @classmethod
    def from_json(cls, path: Union[str, Path]) -> "SbmSpec":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise MalformedInputError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(data, dict):
            raise MalformedInputError(f"{path}: SBM spec must be a JSON object")
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)


def _plant_noise(
    rng: np.random.Generator, blocks: np.ndarray, clean: set[tuple[int, int]], count: int
) -> set[tuple[int, int]]:
    n = blocks.shape[0]
    sizes = np.bincount(blocks)
    inter_pairs = (n * n - int(np.sum(sizes * sizes))) // 2
    clean_inter = sum(1 for v, u in clean if blocks[v] != blocks[u])
    if count > inter_pairs - clean_inter:
        raise InvalidArgumentError(
            f"cannot plant {count} noisy edges; only {inter_pairs - clean_inter} inter-block pairs are free"
        )
    noisy: set[tuple[int, int]] = set()
    while len(noisy) < count:
        draw = rng.integers(0, n, size=(2 * (count - len(noisy)) + 8, 2))
        for v, u in draw:
            if blocks[v] == blocks[u]:
                continue
            pair = (int(min(v, u)), int(max(v, u)))
            if pair in clean or pair in noisy:
                continue
            noisy.add(pair)
            if len(noisy) == count:
                break
    return noisy


def gen_sbm(spec: SbmSpec) -> tuple[GraphStore, set[tuple[int, int]]]:
    """
    Block-structured graph plus the set of planted noisy edges.

    Features are per-block mean vectors plus Gaussian noise; labels are block
    ids; the labeled pool is a per-block stratified sample.  Deterministic
    for a fixed spec.
    """
    if spec.p_in <= spec.p_out:
        logger.warning("[SBM] p_in=%.3g <= p_out=%.3g: no planted structure", spec.p_in, spec.p_out)
    sizes = [spec.nodes_per_block] * spec.blocks
    probs = np.full((spec.blocks, spec.blocks), spec.p_out)
    np.fill_diagonal(probs, spec.p_in)
    G = nx.stochastic_block_model(sizes, probs.tolist(), seed=spec.seed)

    blocks = np.repeat(np.arange(spec.blocks), spec.nodes_per_block)
    clean = {(min(v, u), max(v, u)) for v, u in G.edges()}
    rng = np.random.default_rng(spec.seed)
    noisy = _plant_noise(rng, blocks, clean, int(round(spec.noise_fraction * len(clean))))

    means = rng.normal(0.0, 1.0, size=(spec.blocks, spec.feature_dim))
    features = means[blocks] + rng.normal(0.0, spec.feature_noise_sigma, size=(blocks.shape[0], spec.feature_dim))

    labeled = []
    per_block = max(1, math.ceil(spec.labeled_fraction * spec.nodes_per_block))
    for b in range(spec.blocks):
        members = np.flatnonzero(blocks == b)
        labeled.extend(rng.choice(members, size=per_block, replace=False).tolist())

    edges = sorted(clean | noisy)
    g = build_graph(edges, features, dict(enumerate(blocks.tolist())), labeled_set=labeled)
    logger.info(
        "[SBM] %d nodes, %d clean + %d noisy edges, %d labeled (seed %d)",
        g.node_count, len(clean), len(noisy), len(labeled), spec.seed,
    )
    return g, noisy
