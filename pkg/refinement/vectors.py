"""Cosine helpers shared by distance recomputation and reconstruction."""

from __future__ import annotations

import logging

import numpy as np

from errors import ShapeError

logger = logging.getLogger(__name__)


def cosine(x: np.ndarray, y: np.ndarray) -> float:
    """Cosine similarity; 0 when either vector is zero."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ShapeError(f"vector shapes differ: {x.shape} vs {y.shape}")
    nx, ny = np.linalg.norm(x), np.linalg.norm(y)
    if nx == 0.0 or ny == 0.0:
        logger.debug("[Vectors] zero vector in cosine, using 0")
        return 0.0
    return float(np.clip(x @ y / (nx * ny), -1.0, 1.0))


def cosine_rows(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Row-wise :func:`cosine` of two aligned matrices."""
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.shape != B.shape:
        raise ShapeError(f"matrix shapes differ: {A.shape} vs {B.shape}")
    if A.shape[0] == 0:
        return np.zeros(0)
    norms = np.linalg.norm(A, axis=1) * np.linalg.norm(B, axis=1)
    dots = np.einsum("ij,ij->i", A, B)
    out = np.zeros(A.shape[0])
    nonzero = norms > 0
    if not nonzero.all():
        logger.debug("[Vectors] %d zero-vector pair(s) in cosine, using 0", int((~nonzero).sum()))
    np.divide(dots, norms, out=out, where=nonzero)
    return np.clip(out, -1.0, 1.0)
