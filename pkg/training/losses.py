"""
Loss terms and the learning-rate schedule.

    total = classification + l1 * dr + l2 * tr + l3 * regularization

Classification is unweighted; the three auxiliary weights sum to one.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import logsumexp, softmax

from diffusion.config import ScheduleConfig
from diffusion.params import DiffusionParams
from errors import InvalidArgumentError
from graph.shells import HopShells
from graph.store import GraphStore
from refinement.distance import projected_distances


def classification_loss(logits: np.ndarray, labels: np.ndarray, nodes: np.ndarray) -> float:
    """Mean softmax cross-entropy over *nodes*."""
    nodes = np.asarray(nodes, dtype=np.int64)
    if nodes.size == 0:
        raise InvalidArgumentError("classification loss needs at least one labeled node")
    rows = logits[nodes]
    y = labels[nodes]
    return float(np.mean(logsumexp(rows, axis=1) - rows[np.arange(nodes.size), y]))


def classification_grad(logits: np.ndarray, labels: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    """d loss / d logits; rows outside *nodes* are zero."""
    nodes = np.asarray(nodes, dtype=np.int64)
    if nodes.size == 0:
        raise InvalidArgumentError("classification loss needs at least one labeled node")
    grad = np.zeros_like(logits)
    probs = softmax(logits[nodes], axis=1)
    probs[np.arange(nodes.size), labels[nodes]] -= 1.0
    grad[nodes] = probs / nodes.size
    return grad


def regularization(params: DiffusionParams) -> float:
    return float(np.sum(params.hop_transforms ** 2) + np.sum(params.hop_logits ** 2))


def dr_loss(
    g: GraphStore, shells: HopShells, params: DiffusionParams, cfg: ScheduleConfig
) -> tuple[float, np.ndarray]:
    """
    Hinge of each active entry's hop-projected distance above its shell's
    recorded radius, and its gradient with respect to the hop transforms.
    Shells without a recorded radius contribute nothing.
    """
    loss = 0.0
    grad = np.zeros_like(params.hop_transforms)
    for k in range(1, shells.K + 1):
        h = k - 1
        centers, members = shells.active_entries(k)
        radius = shells.radius[h][centers]
        known = np.isfinite(radius)
        if not known.any():
            continue
        centers, members, radius = centers[known], members[known], radius[known]
        dist, diff, proj = projected_distances(
            g, centers, members, params.hop_transforms[h], k, cfg
        )
        excess = dist - radius
        over = excess > 0
        if not over.any():
            continue
        loss += float(excess[over].sum())
        grad[h] = 2.0 * diff[over].T @ proj[over]
    return loss, grad


def learning_rate(t: int, cfg: ScheduleConfig) -> float:
    """eta_t = eta0 / sqrt(t) * exp(-mu * t)."""
    if t < 1:
        raise InvalidArgumentError(f"step must be >= 1, got {t}")
    return cfg.lr0 / math.sqrt(t) * math.exp(-cfg.lr_mu * t)
