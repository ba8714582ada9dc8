"""
Topology reconstruction: score non-adjacent node pairs and add edges.

    sim  = w1 * cos(x_v, x_u) + w2 * jaccard(N(v), N(u)) - w3 * ||x_v - x_u||^2
    prob = sigmoid((sim - beta) / tau)

An edge is added when ``prob > theta`` (or, with ``tr_sampling``, when a
Bernoulli(prob) draw succeeds).  Candidates come from a kNN search over
the raw features.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import expit

from diffusion.config import ScheduleConfig
from diffusion.params import SimilarityWeights
from errors import InvalidArgumentError, NumericError
from graph.store import GraphStore, jaccard_pairs
from refinement.knn import get_knn_backend
from refinement.vectors import cosine, cosine_rows

logger = logging.getLogger(__name__)

__all__ = [
    "AdditionResult",
    "CandidatePair",
    "CandidateSet",
    "SimilarityWeights",
    "contextual_alignment",
    "knn_candidates",
    "score_and_add",
    "score_candidates",
    "tr_loss",
    "tr_loss_grad",
]


@dataclass(frozen=True)
class CandidatePair:
    v: int
    u: int
    alignment: float
    jaccard: float
    euclid_sq: float
    sim: float
    add_prob: float


@dataclass
class CandidateSet:
    """Column-wise candidate pairs; score fields are NaN until scored."""

    vs: np.ndarray
    us: np.ndarray
    alignment: np.ndarray = field(default=None)
    jaccard: np.ndarray = field(default=None)
    euclid_sq: np.ndarray = field(default=None)
    sim: np.ndarray = field(default=None)
    prob: np.ndarray = field(default=None)

    def __post_init__(self):
        self.vs = np.asarray(self.vs, dtype=np.int64)
        self.us = np.asarray(self.us, dtype=np.int64)
        for name in ("alignment", "jaccard", "euclid_sq", "sim", "prob"):
            if getattr(self, name) is None:
                setattr(self, name, np.full(self.vs.shape[0], np.nan))

    def __len__(self) -> int:
        return int(self.vs.shape[0])

    @property
    def scored(self) -> bool:
        return len(self) == 0 or not np.isnan(self.prob).any()

    def pairs(self) -> list[CandidatePair]:
        return [
            CandidatePair(int(v), int(u), float(a), float(j), float(e), float(s), float(p))
            for v, u, a, j, e, s, p in zip(
                self.vs, self.us, self.alignment, self.jaccard, self.euclid_sq, self.sim, self.prob
            )
        ]

    @classmethod
    def empty(cls) -> "CandidateSet":
        return cls(np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64))


def contextual_alignment(x_v: np.ndarray, x_u: np.ndarray) -> float:
    """Cosine similarity of two feature vectors (0 for a zero vector)."""
    return cosine(x_v, x_u)


# ---------------------------------------------------------------------------
# Candidates
# ---------------------------------------------------------------------------

def _cap_per_node(vs: np.ndarray, us: np.ndarray, order: np.ndarray, cap: int, n: int) -> np.ndarray:
    """Walk pairs in *order*, keeping each while both endpoints are under *cap*."""
    used = np.zeros(n, dtype=np.int64)
    keep = np.zeros(vs.shape[0], dtype=bool)
    for i in order:
        v, u = vs[i], us[i]
        if used[v] < cap and used[u] < cap:
            keep[i] = True
            used[v] += 1
            used[u] += 1
    return keep


def knn_candidates(
    g: GraphStore,
    knn_k: int,
    R: int,
    backend: str = "exact",
    seed: int = 0,
    neighbors: Optional[tuple[np.ndarray, np.ndarray]] = None,
) -> CandidateSet:
    """
    Unscored candidate pairs: each node's knn_k nearest nodes by feature
    distance, minus itself and its current neighbors.  Pairs are stored once
    with v < u; no node takes part in more than R of them (closest first).
    *neighbors* reuses an earlier ``(indices, distances)`` kNN query.
    """
    if knn_k < 1:
        raise InvalidArgumentError(f"knn_k must be >= 1, got {knn_k}")
    if R < 1:
        raise InvalidArgumentError(f"per-node cap R must be >= 1, got {R}")
    n = g.node_count
    if n < 2:
        return CandidateSet.empty()

    if neighbors is None:
        neighbors = get_knn_backend(backend, seed).query(g.features, knn_k)
    idx, dist = neighbors
    src = np.repeat(np.arange(n, dtype=np.int64), idx.shape[1])
    dst = idx.ravel()
    d = dist.ravel()
    valid = dst >= 0
    src, dst, d = src[valid], dst[valid], d[valid]
    fresh = ~g.has_edges(src, dst)
    src, dst, d = src[fresh], dst[fresh], d[fresh]
    if src.size == 0:
        return CandidateSet.empty()

    a, b = np.minimum(src, dst), np.maximum(src, dst)
    order = np.lexsort((d, b, a))
    a, b, d = a[order], b[order], d[order]
    first = np.ones(a.shape[0], dtype=bool)
    first[1:] = (a[1:] != a[:-1]) | (b[1:] != b[:-1])
    a, b, d = a[first], b[first], d[first]

    keep = _cap_per_node(a, b, np.lexsort((b, a, d)), R, n)
    logger.debug("[TR] %d candidate pair(s), %d dropped by the per-node cap", int(keep.sum()), int((~keep).sum()))
    return CandidateSet(a[keep], b[keep])


# ---------------------------------------------------------------------------
# Scoring and addition
# ---------------------------------------------------------------------------

def score_candidates(
    g: GraphStore, candidates: CandidateSet, weights: SimilarityWeights, cfg: ScheduleConfig
) -> CandidateSet:
    """A copy of *candidates* with every score field filled in."""
    vs, us = candidates.vs, candidates.us
    xv, xu = g.features[vs], g.features[us]
    diff = xv - xu
    out = CandidateSet(
        vs=vs,
        us=us,
        alignment=cosine_rows(xv, xu),
        jaccard=jaccard_pairs(g, vs, us),
        euclid_sq=np.einsum("ij,ij->i", diff, diff) if len(candidates) else np.zeros(0),
    )
    return rescore(out, weights, cfg)


def rescore(candidates: CandidateSet, weights: SimilarityWeights, cfg: ScheduleConfig) -> CandidateSet:
    """Recompute sim and prob for new weights, keeping the pair features."""
    w = weights.as_array()
    sim = w[0] * candidates.alignment + w[1] * candidates.jaccard - w[2] * candidates.euclid_sq
    if not np.all(np.isfinite(sim)):
        bad = int(np.flatnonzero(~np.isfinite(sim))[0])
        raise NumericError(
            "non-finite similarity", {"v": int(candidates.vs[bad]), "u": int(candidates.us[bad])}
        )
    return CandidateSet(
        vs=candidates.vs,
        us=candidates.us,
        alignment=candidates.alignment,
        jaccard=candidates.jaccard,
        euclid_sq=candidates.euclid_sq,
        sim=sim,
        prob=expit((sim - cfg.tr_beta) / cfg.tr_tau),
    )


@dataclass
class AdditionResult:
    added: np.ndarray              # (m, 2), v < u, sorted
    sims: np.ndarray
    probs: np.ndarray
    candidates: CandidateSet       # every scored candidate

    def __len__(self) -> int:
        return int(self.added.shape[0])


def score_and_add(
    g: GraphStore,
    candidates: CandidateSet,
    weights: SimilarityWeights,
    cfg: ScheduleConfig,
    rng_seed: Optional[int] = None,
) -> AdditionResult:
    """
    Score *candidates* and pick the edges to add.

    Pairs already present in *g*, self-pairs and mirrored duplicates are
    discarded first.  Accepted pairs are capped at R per node, highest
    probability first.
    """
    vs = np.minimum(candidates.vs, candidates.us)
    us = np.maximum(candidates.vs, candidates.us)
    ok = (vs != us) & ~g.has_edges(vs, us)
    if len(candidates):
        pair_order = np.lexsort((us, vs))
        dup = np.zeros(vs.shape[0], dtype=bool)
        sv, su = vs[pair_order], us[pair_order]
        dup[pair_order[1:]] = (sv[1:] == sv[:-1]) & (su[1:] == su[:-1])
        ok &= ~dup
    base = CandidateSet(vs[ok], us[ok])
    if candidates.scored and len(candidates):
        for name in ("alignment", "jaccard", "euclid_sq"):
            setattr(base, name, getattr(candidates, name)[ok])
        scored = rescore(base, weights, cfg)
    else:
        scored = score_candidates(g, base, weights, cfg)

    if cfg.tr_sampling:
        rng = np.random.default_rng(cfg.seed if rng_seed is None else rng_seed)
        accept = rng.random(len(scored)) < scored.prob
    else:
        accept = scored.prob > cfg.tr_theta

    pick = np.flatnonzero(accept)
    order = np.lexsort((scored.us[pick], scored.vs[pick], -scored.prob[pick]))
    keep = _cap_per_node(scored.vs[pick], scored.us[pick], order, cfg.max_added_per_node_R, g.node_count)
    pick = pick[keep]
    pick = pick[np.lexsort((scored.us[pick], scored.vs[pick]))]

    added = np.column_stack([scored.vs[pick], scored.us[pick]]).astype(np.int64).reshape(-1, 2)
    return AdditionResult(added=added, sims=scored.sim[pick], probs=scored.prob[pick], candidates=scored)


# ---------------------------------------------------------------------------
# Margin loss
# ---------------------------------------------------------------------------

def tr_loss(
    candidates: CandidateSet, cfg: ScheduleConfig, weights: Optional[SimilarityWeights] = None
) -> float:
    """
    sum max(0, beta - sim) * prob over scored candidates.

    With *weights*, sim is re-evaluated for those weights while prob keeps
    its scored value (prob is a detached weight inside the loss).
    """
    if len(candidates) == 0:
        return 0.0
    sim = candidates.sim
    if weights is not None:
        w = weights.as_array()
        sim = w[0] * candidates.alignment + w[1] * candidates.jaccard - w[2] * candidates.euclid_sq
    return float(np.sum(np.maximum(0.0, cfg.tr_beta - sim) * candidates.prob))


def tr_loss_grad(candidates: CandidateSet, cfg: ScheduleConfig) -> np.ndarray:
    """d tr_loss / d omega = sum 1[beta - sim > 0] * prob * (-align, -jaccard, +euclid_sq)."""
    if len(candidates) == 0:
        return np.zeros(3)
    active = (cfg.tr_beta - candidates.sim) > 0
    wgt = candidates.prob * active
    return np.array([
        -np.sum(wgt * candidates.alignment),
        -np.sum(wgt * candidates.jaccard),
        np.sum(wgt * candidates.euclid_sq),
    ])
