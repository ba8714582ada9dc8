"""
Forward pass of the multi-hop heat-attention diffusion.

For every hop k the engine projects the raw features with W^(k), scores
each active shell entry with a temperature-scaled LeakyReLU attention,
aggregates the projected neighbors, layer-normalises the result and mixes
the K hop vectors with the global hop weights gamma = softmax(phi).

The single-node functions (:func:`attention_weights`, :func:`hop_aggregate`)
work one shell at a time; :func:`forward` evaluates the
whole graph at once with edge-list scatter operations and keeps the
intermediates the backward pass needs.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from diffusion.config import ScheduleConfig
from diffusion.params import DiffusionParams
from errors import InvalidArgumentError, NumericError, ShapeError
from graph.shells import HopShells
from graph.store import GraphStore

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Scalar building blocks
# ---------------------------------------------------------------------------

def temperature(k: int, cfg: ScheduleConfig) -> float:
    """tau_k = tau0 * exp(-eta * k)."""
    if not 1 <= k <= cfg.K:
        raise InvalidArgumentError(f"hop {k} outside [1, {cfg.K}]")
    return cfg.tau0 * math.exp(-cfg.eta_decay * k)


def leaky_relu(x: np.ndarray, slope: float) -> np.ndarray:
    return np.where(x > 0, x, slope * x)


def layer_norm(h: np.ndarray, eps: float) -> np.ndarray:
    """(h - mean) / (std + eps) over the last axis, population variance."""
    h = np.asarray(h, dtype=np.float64)
    if h.shape[-1] == 0:
        raise InvalidArgumentError("layer_norm needs a non-empty vector")
    mu = h.mean(axis=-1, keepdims=True)
    sigma = h.std(axis=-1, keepdims=True)
    return (h - mu) / (sigma + eps)


def segment_softmax(scores: np.ndarray, groups: np.ndarray, group_count: int) -> np.ndarray:
    """Softmax of *scores* within each group id, max-subtracted."""
    if scores.size == 0:
        return np.zeros(0, dtype=np.float64)
    peak = np.full(group_count, -np.inf)
    np.maximum.at(peak, groups, scores)
    ex = np.exp(scores - peak[groups])
    denom = np.bincount(groups, weights=ex, minlength=group_count)
    return ex / denom[groups]


def uniform_attention(groups: np.ndarray, group_count: int) -> np.ndarray:
    """Mean-aggregation weights: 1 / |active shell| for every entry."""
    counts = np.bincount(groups, minlength=group_count).astype(np.float64)
    return 1.0 / counts[groups] if groups.size else np.zeros(0, dtype=np.float64)


# ---------------------------------------------------------------------------
# Single-node operations
# ---------------------------------------------------------------------------

def _shell_scores(
    g: GraphStore, shells: HopShells, params: DiffusionParams, v: int, k: int, cfg: ScheduleConfig
) -> tuple[np.ndarray, np.ndarray]:
    g._check_node(v)
    members = shells.active_members(v, k)
    if members.size == 0:
        return members, np.zeros(0)
    W = params.hop_transforms[k - 1]
    h = params.hidden_dim
    a = params.attention_vector
    pv = g.features[v] @ W
    pu = g.features[members] @ W
    e = pv @ a[:h] + pu @ a[h:]
    scores = leaky_relu(e, cfg.leaky_slope) / temperature(k, cfg)
    if not np.all(np.isfinite(scores)):
        raise NumericError("non-finite attention score", {"node": v, "hop": k})
    return members, scores


def attention_weights(
    g: GraphStore, shells: HopShells, params: DiffusionParams, v: int, k: int, cfg: ScheduleConfig
) -> dict[int, float]:
    """alpha_vu^(k) for every active u in shell k of v; empty dict for an empty shell."""
    members, scores = _shell_scores(g, shells, params, v, k, cfg)
    if members.size == 0:
        return {}
    ex = np.exp(scores - scores.max())
    alpha = ex / ex.sum()
    return {int(u): float(w) for u, w in zip(members, alpha)}


def hop_aggregate(
    g: GraphStore, shells: HopShells, params: DiffusionParams, v: int, k: int, cfg: ScheduleConfig
) -> np.ndarray:
    """sum_u alpha_vu^(k) W^(k) x_u; the zero vector for an empty shell."""
    weights = attention_weights(g, shells, params, v, k, cfg)
    out = np.zeros(params.hidden_dim)
    W = params.hop_transforms[k - 1]
    for u in sorted(weights):
        out += weights[u] * (g.features[u] @ W)
    if not np.all(np.isfinite(out)):
        raise NumericError("non-finite hop aggregate", {"node": v, "hop": k})
    return out


def combine_hops(normalized_hops: Sequence[np.ndarray], params: DiffusionParams) -> np.ndarray:
    """z = sum_k gamma_k * h~^(k)."""
    if len(normalized_hops) != params.K:
        raise ShapeError(f"expected {params.K} hop vectors, got {len(normalized_hops)}")
    gamma = params.hop_weights()
    stacked = np.stack([np.asarray(h, dtype=np.float64) for h in normalized_hops])
    return np.tensordot(gamma, stacked, axes=1)


# ---------------------------------------------------------------------------
# Whole-graph forward
# ---------------------------------------------------------------------------

@dataclass
class HopCache:
    """Intermediates of one hop, kept for the backward pass."""

    k: int
    centers: np.ndarray       # active entry owners
    members: np.ndarray       # active entry neighbors
    projected: np.ndarray     # P = X W^(k), (n, h)
    pre_scores: np.ndarray    # e = a1.P[c] + a2.P[u] (empty when uniform)
    alpha: np.ndarray         # attention weight per entry
    hidden: np.ndarray        # H, (n, h)
    normalized: np.ndarray    # layer_norm(H), (n, h)
    sigma: np.ndarray         # per-row population std of H, (n,)
    tau: float


@dataclass
class ForwardPass:
    hops: list[HopCache]
    gamma: np.ndarray
    embeddings: np.ndarray    # Z, (n, h)
    logits: np.ndarray        # (n, C)
    uniform: bool


def _first_bad_row(matrix: np.ndarray) -> int:
    bad = ~np.all(np.isfinite(matrix.reshape(matrix.shape[0], -1)), axis=1)
    return int(np.flatnonzero(bad)[0]) if bad.any() else -1


def forward(
    g: GraphStore,
    shells: HopShells,
    params: DiffusionParams,
    cfg: ScheduleConfig,
    uniform: Optional[bool] = None,
) -> ForwardPass:
    """
    Embeddings Z and class logits for every node.

    ``uniform`` replaces the heat attention with mean aggregation; it
    defaults to the configured mode (baseline and GDRA aggregate uniformly).
    """
    if uniform is None:
        uniform = not cfg.mode.uses_attention
    if params.K != shells.K:
        raise ShapeError(f"params carry {params.K} hops, shells {shells.K}")
    if params.feature_dim != g.feature_dim:
        raise ShapeError(f"params expect {params.feature_dim} features, graph has {g.feature_dim}")

    n, h = g.node_count, params.hidden_dim
    X = g.features
    a1, a2 = params.attention_vector[:h], params.attention_vector[h:]
    hops: list[HopCache] = []

    for k in range(1, params.K + 1):
        W = params.hop_transforms[k - 1]
        P = X @ W
        c, u = shells.active_entries(k)
        tau = temperature(k, cfg)

        if uniform:
            e = np.zeros(0)
            alpha = uniform_attention(c, n)
        else:
            e = (P @ a1)[c] + (P @ a2)[u]
            r = leaky_relu(e, cfg.leaky_slope) / tau
            if not np.all(np.isfinite(r)):
                bad = int(np.flatnonzero(~np.isfinite(r))[0])
                raise NumericError("non-finite attention score", {"node": int(c[bad]), "hop": k})
            alpha = segment_softmax(r, c, n)

        agg = sp.csr_matrix((alpha, (c, u)), shape=(n, n))
        H = agg @ P
        bad = _first_bad_row(H)
        if bad >= 0:
            raise NumericError("non-finite hop aggregate", {"node": bad, "hop": k})

        sigma = H.std(axis=1)
        Ht = layer_norm(H, cfg.layer_norm_eps)
        hops.append(HopCache(
            k=k, centers=c, members=u, projected=P, pre_scores=e, alpha=alpha,
            hidden=H, normalized=Ht, sigma=sigma, tau=tau,
        ))

    gamma = params.hop_weights()
    Z = np.zeros((n, h))
    for gk, hop in zip(gamma, hops):
        Z += gk * hop.normalized
    logits = Z @ params.classifier + params.classifier_bias
    bad = _first_bad_row(logits)
    if bad >= 0:
        raise NumericError("non-finite logits", {"node": bad})

    return ForwardPass(hops=hops, gamma=gamma, embeddings=Z, logits=logits, uniform=uniform)
