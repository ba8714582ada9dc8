"""
Analytic reverse-mode gradients of the composite loss.

The chain runs classifier -> hop mixing (softmax over phi) -> layer norm
-> attention aggregation (segment softmax, LeakyReLU) -> W^(k).  The
distance hinge adds a path into W^(k), the reconstruction margin a path
into omega, and the regulariser into W^(k) and phi.  Pruning decisions and
candidate sets are constants within an epoch.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np
import scipy.sparse as sp

from diffusion.config import ScheduleConfig
from diffusion.engine import ForwardPass, HopCache, forward
from diffusion.params import TENSOR_NAMES, DiffusionParams
from errors import NumericError
from graph.shells import HopShells
from graph.store import GraphStore
from refinement.topology import CandidateSet, tr_loss, tr_loss_grad
from training.losses import classification_grad, classification_loss, dr_loss, regularization

logger = logging.getLogger(__name__)

GRAD_NAMES = TENSOR_NAMES + ("omega",)


@dataclass
class LossBreakdown:
    classification: float
    dr: float
    tr: float
    regularization: float
    total: float
    grad_norm: float = 0.0


@dataclass
class Gradients:
    hop_transforms: np.ndarray
    attention_vector: np.ndarray
    hop_logits: np.ndarray
    classifier: np.ndarray
    classifier_bias: np.ndarray
    omega: np.ndarray

    def tensors(self) -> Iterator[tuple[str, np.ndarray]]:
        for name in GRAD_NAMES:
            yield name, getattr(self, name)

    def global_norm(self) -> float:
        return float(np.sqrt(sum(np.sum(t ** 2) for _, t in self.tensors())))

    def scaled(self, factor: float) -> "Gradients":
        return Gradients(**{name: t * factor for name, t in self.tensors()})

    def clip(self, max_norm: float) -> tuple["Gradients", float]:
        """Rescale to global norm <= *max_norm*; returns the pre-clip norm too."""
        norm = self.global_norm()
        if norm > max_norm:
            return self.scaled(max_norm / norm), norm
        return self, norm

    def check_finite(self) -> None:
        for name, t in self.tensors():
            if not np.all(np.isfinite(t)):
                raise NumericError("non-finite gradient", {"parameter": name})


# ---------------------------------------------------------------------------
# Diffusion backward
# ---------------------------------------------------------------------------

def _layer_norm_backward(d_out: np.ndarray, hop: HopCache, eps: float) -> np.ndarray:
    H = hop.hidden
    h = H.shape[1]
    D = H - H.mean(axis=1, keepdims=True)
    sigma = hop.sigma[:, None]
    s = sigma + eps
    dD = d_out / s
    coupling = np.sum(d_out * D, axis=1, keepdims=True) / (s * s)
    safe = np.where(sigma > 0, sigma, 1.0)
    dD -= np.where(sigma > 0, coupling * D / (h * safe), 0.0)
    return dD - dD.mean(axis=1, keepdims=True)


def _hop_backward(
    X: np.ndarray,
    params: DiffusionParams,
    hop: HopCache,
    dH: np.ndarray,
    cfg: ScheduleConfig,
    uniform: bool,
    d_attention: np.ndarray,
) -> np.ndarray:
    """Gradient wrt W^(k); accumulates the attention-vector gradient in place."""
    n, h = hop.projected.shape
    c, u, alpha, P = hop.centers, hop.members, hop.alpha, hop.projected
    agg = sp.csr_matrix((alpha, (c, u)), shape=(n, n))
    dP = agg.T @ dH

    if not uniform and c.size:
        a1, a2 = params.attention_vector[:h], params.attention_vector[h:]
        d_alpha = np.einsum("ij,ij->i", dH[c], P[u])
        group_dot = np.bincount(c, weights=alpha * d_alpha, minlength=n)
        d_r = alpha * (d_alpha - group_dot[c])
        slope = np.where(hop.pre_scores > 0, 1.0, cfg.leaky_slope)
        d_e = d_r * slope / hop.tau
        ds1 = np.bincount(c, weights=d_e, minlength=n)
        ds2 = np.bincount(u, weights=d_e, minlength=n)
        d_attention[:h] += P.T @ ds1
        d_attention[h:] += P.T @ ds2
        dP += np.outer(ds1, a1) + np.outer(ds2, a2)

    return X.T @ dP


def backward(
    g: GraphStore,
    shells: HopShells,
    params: DiffusionParams,
    cfg: ScheduleConfig,
    nodes: np.ndarray,
    candidates: Optional[CandidateSet] = None,
    fp: Optional[ForwardPass] = None,
    use_dr: Optional[bool] = None,
) -> tuple[Gradients, LossBreakdown, ForwardPass]:
    """
    Loss breakdown and gradients for every parameter tensor.

    *nodes* are the training nodes.  *candidates* are the scored
    reconstruction candidates entering the margin term (omitted: no term).
    ``use_dr`` defaults to the configured mode.
    """
    if fp is None:
        fp = forward(g, shells, params, cfg)
    if use_dr is None:
        use_dr = cfg.mode.uses_dr
    l1, l2, l3 = cfg.loss_weights

    # classification
    cls = classification_loss(fp.logits, g.labels, nodes)
    d_logits = classification_grad(fp.logits, g.labels, nodes)
    d_classifier = fp.embeddings.T @ d_logits
    d_bias = d_logits.sum(axis=0)
    dZ = d_logits @ params.classifier.T

    # hop mixing
    gamma = fp.gamma
    d_gamma = np.array([np.sum(dZ * hop.normalized) for hop in fp.hops])
    d_phi = gamma * (d_gamma - gamma @ d_gamma)

    d_W = np.zeros_like(params.hop_transforms)
    d_attention = np.zeros_like(params.attention_vector)
    for gk, hop in zip(gamma, fp.hops):
        dH = _layer_norm_backward(gk * dZ, hop, cfg.layer_norm_eps)
        d_W[hop.k - 1] = _hop_backward(g.features, params, hop, dH, cfg, fp.uniform, d_attention)

    # distance hinge
    dr = 0.0
    if use_dr and l1 > 0:
        dr, d_W_dr = dr_loss(g, shells, params, cfg)
        d_W += l1 * d_W_dr

    # reconstruction margin
    tr = 0.0
    d_omega = np.zeros(3)
    if candidates is not None and len(candidates):
        tr = tr_loss(candidates, cfg)
        d_omega = l2 * tr_loss_grad(candidates, cfg)

    # regulariser
    reg = regularization(params)
    d_W += l3 * 2.0 * params.hop_transforms
    d_phi = d_phi + l3 * 2.0 * params.hop_logits

    grads = Gradients(
        hop_transforms=d_W,
        attention_vector=d_attention,
        hop_logits=d_phi,
        classifier=d_classifier,
        classifier_bias=d_bias,
        omega=d_omega,
    )
    grads.check_finite()
    total = cls + l1 * dr + l2 * tr + l3 * reg
    breakdown = LossBreakdown(
        classification=cls, dr=dr, tr=tr, regularization=reg, total=total,
        grad_norm=grads.global_norm(),
    )
    return grads, breakdown, fp


def total_loss(
    g: GraphStore,
    shells: HopShells,
    params: DiffusionParams,
    cfg: ScheduleConfig,
    nodes: np.ndarray,
    candidates: Optional[CandidateSet] = None,
    use_dr: Optional[bool] = None,
    weights=None,
) -> float:
    """The scalar objective alone, for finite-difference checks."""
    if use_dr is None:
        use_dr = cfg.mode.uses_dr
    l1, l2, l3 = cfg.loss_weights
    fp = forward(g, shells, params, cfg)
    total = classification_loss(fp.logits, g.labels, nodes) + l3 * regularization(params)
    if use_dr and l1 > 0:
        total += l1 * dr_loss(g, shells, params, cfg)[0]
    if candidates is not None and len(candidates):
        total += l2 * tr_loss(candidates, cfg, weights)
    return total
