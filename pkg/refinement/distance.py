"""
Distance recomputation and percentile pruning of hop shells.

Every shell entry (v, u) at hop k gets the semantic distance

    d = ||x_v - x_u||^2 + lambda_k * (beta1 * k^2 + beta2 * (1 - cos(x_v, x_u)))

on raw features.  Each (v, k) keeps the entries at or below the
nearest-rank p-th percentile of its own distances; the rest are flagged
inactive.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from diffusion.config import ScheduleConfig
from diffusion.params import DiffusionParams
from errors import InvalidArgumentError, NumericError, ShapeError
from graph.shells import HopShells
from graph.store import GraphStore
from refinement.vectors import cosine, cosine_rows

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DistanceRecord:
    v: int
    u: int
    k: int
    euclid_sq: float
    penalty: float
    lambda_k: float
    total: float


def lambda_schedule(k: int, cfg: ScheduleConfig) -> float:
    """lambda_k = lambda0 * exp(-rho * k) + lambda_min."""
    if k < 1:
        raise InvalidArgumentError(f"hop must be >= 1, got {k}")
    return cfg.lambda0 * math.exp(-cfg.rho * k) + cfg.lambda_min


def semantic_distance(
    x_v: np.ndarray, x_u: np.ndarray, k: int, cfg: ScheduleConfig, v: int = -1, u: int = -1
) -> DistanceRecord:
    x_v = np.asarray(x_v, dtype=np.float64)
    x_u = np.asarray(x_u, dtype=np.float64)
    if x_v.shape != x_u.shape:
        raise ShapeError(f"feature shapes differ: {x_v.shape} vs {x_u.shape}")
    diff = x_v - x_u
    euclid_sq = float(diff @ diff)
    penalty = cfg.beta1 * k * k + cfg.beta2 * (1.0 - cosine(x_v, x_u))
    lam = lambda_schedule(k, cfg)
    return DistanceRecord(
        v=v, u=u, k=k, euclid_sq=euclid_sq, penalty=penalty, lambda_k=lam,
        total=euclid_sq + lam * penalty,
    )


def retained_count(n: int, p: float) -> int:
    """ceil(p * n), robust to p * n landing a rounding error above an integer."""
    return max(1, math.ceil(round(p * n, 9)))


def percentile_threshold(distances: Sequence[float], p: float) -> float:
    """Nearest-rank percentile: the ceil(p * n)-th smallest value."""
    values = np.asarray(distances, dtype=np.float64)
    if values.size == 0:
        raise InvalidArgumentError("percentile of an empty distance list")
    if not 0 < p < 1:
        raise InvalidArgumentError(f"percentile p must lie in (0, 1), got {p}")
    return float(np.sort(values)[retained_count(values.size, p) - 1])


# ---------------------------------------------------------------------------
# Vectorised shell distances
# ---------------------------------------------------------------------------

def entry_distances(
    g: GraphStore, centers: np.ndarray, members: np.ndarray, k: int, cfg: ScheduleConfig
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(euclid_sq, penalty, total)`` for aligned (center, member) entries."""
    xv, xu = g.features[centers], g.features[members]
    diff = xv - xu
    euclid_sq = np.einsum("ij,ij->i", diff, diff)
    penalty = cfg.beta1 * k * k + cfg.beta2 * (1.0 - cosine_rows(xv, xu))
    total = euclid_sq + lambda_schedule(k, cfg) * penalty
    if not np.all(np.isfinite(total)):
        bad = int(np.flatnonzero(~np.isfinite(total))[0])
        raise NumericError("non-finite distance", {"node": int(centers[bad]), "hop": k})
    return euclid_sq, penalty, total


def shell_distances(g: GraphStore, shells: HopShells, k: int, cfg: ScheduleConfig) -> np.ndarray:
    """Total distance of every built entry of hop *k*, in chunks of centers."""
    h = k - 1
    indptr = shells.indptr[h]
    centers = shells.centers(k)
    members = shells.members[h]
    out = np.zeros(members.shape[0])
    step = cfg.distance_batch_size
    for start in range(0, shells.node_count, step):
        lo, hi = indptr[start], indptr[min(shells.node_count, start + step)]
        if hi > lo:
            out[lo:hi] = entry_distances(g, centers[lo:hi], members[lo:hi], k, cfg)[2]
    return out


def distance_records(
    g: GraphStore, shells: HopShells, v: int, k: int, cfg: ScheduleConfig
) -> list[DistanceRecord]:
    """Records for the active entries of one shell."""
    return [
        semantic_distance(g.features[v], g.features[u], k, cfg, v=v, u=int(u))
        for u in shells.active_members(v, k)
    ]


def projected_distances(
    g: GraphStore,
    centers: np.ndarray,
    members: np.ndarray,
    W: np.ndarray,
    k: int,
    cfg: ScheduleConfig,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Hop-projected distance ||(x_v - x_u) W||^2 + lambda_k * delta.

    Returns ``(distance, diff, projected_diff)`` so callers can form the
    gradient with respect to W.
    """
    xv, xu = g.features[centers], g.features[members]
    diff = xv - xu
    proj = diff @ W
    penalty = cfg.beta1 * k * k + cfg.beta2 * (1.0 - cosine_rows(xv, xu))
    dist = np.einsum("ij,ij->i", proj, proj) + lambda_schedule(k, cfg) * penalty
    return dist, diff, proj


# ---------------------------------------------------------------------------
# Pruning
# ---------------------------------------------------------------------------

@dataclass
class PruneFragment:
    """Outcome of one pruning pass, not yet committed to the shells."""

    pruned: list[tuple[int, int, int]] = field(default_factory=list)
    distances: list[float] = field(default_factory=list)
    alphas: list[float] = field(default_factory=list)
    thresholds: list[np.ndarray] = field(default_factory=list)   # per hop, per node; NaN if empty
    radius: list[np.ndarray] = field(default_factory=list)       # per hop, per node
    visit_keys: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    rescued: int = 0

    def __len__(self) -> int:
        return len(self.pruned)


def _group_percentile(totals: np.ndarray, centers: np.ndarray, indptr: np.ndarray, p: float) -> np.ndarray:
    n = indptr.shape[0] - 1
    counts = np.diff(indptr)
    alpha = np.full(n, np.nan)
    if totals.size == 0:
        return alpha
    order = np.lexsort((totals, centers))
    ranked = totals[order]
    nonempty = np.flatnonzero(counts > 0)
    ranks = np.array([retained_count(int(c), p) for c in counts[nonempty]], dtype=np.int64)
    alpha[nonempty] = ranked[indptr[nonempty] + ranks - 1]
    return alpha


def prune_shells(
    g: GraphStore,
    shells: HopShells,
    cfg: ScheduleConfig,
    params: Optional[DiffusionParams] = None,
) -> PruneFragment:
    """
    Decide which active shell entries to deactivate.

    Thresholds use every built entry of a shell, active or not, so a pass
    over unchanged shells prunes nothing new.  This is not a percentile of
    the active distances alone: under that reading every pass would drop
    about (1 - p) of the survivors again, and shells would shrink each
    epoch.  Shells rebuilt after topology changes get fresh thresholds.

    An active entry survives iff its distance is <= the threshold; a shell
    is never emptied (its nearest active entry is kept if the threshold
    would drop them all).
    With *params*, the largest hop-projected distance among survivors is
    recorded as the shell's radius for the distance loss.
    """
    frag = PruneFragment()
    n = shells.node_count
    keys = []

    for k in range(1, shells.K + 1):
        h = k - 1
        indptr = shells.indptr[h]
        centers = shells.centers(k)
        members = shells.members[h]
        active = shells.active[h]

        totals = shell_distances(g, shells, k, cfg)
        alpha = _group_percentile(totals, centers, indptr, cfg.percentile_p)
        frag.thresholds.append(alpha)

        drop = active & (totals > alpha[centers])
        survivors = np.bincount(centers[active & ~drop], minlength=n)
        emptied = np.flatnonzero((survivors == 0) & (np.bincount(centers[active], minlength=n) > 0))
        for v in emptied:
            lo, hi = indptr[v], indptr[v + 1]
            local = np.flatnonzero(active[lo:hi])
            best = lo + local[np.argmin(totals[lo:hi][local])]
            drop[best] = False
            frag.rescued += 1

        for pos in np.flatnonzero(drop):
            v = int(centers[pos])
            frag.pruned.append((v, k, int(members[pos])))
            frag.distances.append(float(totals[pos]))
            frag.alphas.append(float(alpha[v]))

        visited = np.flatnonzero(active)
        keys.append((h * n + centers[visited]) * n + members[visited])

        radius = np.full(n, np.nan)
        kept = np.flatnonzero(active & ~drop)
        if params is not None and kept.size:
            dist, _, _ = projected_distances(
                g, centers[kept], members[kept], params.hop_transforms[h], k, cfg
            )
            np.fmax.at(radius, centers[kept], dist)
        frag.radius.append(radius)

    frag.visit_keys = np.sort(np.concatenate(keys)) if keys else np.zeros(0, dtype=np.int64)
    if frag.rescued:
        logger.debug("[DR] kept %d shell(s) alive past their threshold", frag.rescued)
    logger.debug("[DR] %d entries flagged for pruning", len(frag.pruned))
    return frag
