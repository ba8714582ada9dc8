"""
Approximate kNN through NN-descent.

pynndescent is optional; without it the backend falls back to a
scikit-learn tree search, which is exact and therefore meets any recall
contract.
"""

from __future__ import annotations

import logging

import numpy as np
from sklearn.neighbors import NearestNeighbors

from errors import InvalidArgumentError
from refinement.knn.base import KnnBackend

logger = logging.getLogger(__name__)

try:
    import pynndescent
    _ANN_AVAILABLE = True
except ImportError:
    pynndescent = None
    _ANN_AVAILABLE = False


class ApproximateKnn(KnnBackend):
    name = "approximate"

    def __init__(self, seed: int = 0):
        self.seed = seed

    def query(self, features: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
        if k < 1:
            raise InvalidArgumentError(f"k must be >= 1, got {k}")
        X = np.asarray(features, dtype=np.float64)
        n = X.shape[0]
        m = min(k, n - 1)
        if m <= 0:
            return np.zeros((n, 0), dtype=np.int64), np.zeros((n, 0))

        if _ANN_AVAILABLE and n > 4 * (m + 1):
            index = pynndescent.NNDescent(
                X, n_neighbors=m + 1, random_state=self.seed, n_jobs=1
            )
            found, dists = index.neighbor_graph
        else:
            if not _ANN_AVAILABLE:
                logger.debug("[kNN] pynndescent not installed, using a tree search")
            tree = NearestNeighbors(n_neighbors=m + 1, algorithm="auto")
            tree.fit(X)
            dists, found = tree.kneighbors(X)

        return _drop_self(np.asarray(found, dtype=np.int64), np.asarray(dists, dtype=np.float64), m)


def _drop_self(found: np.ndarray, dists: np.ndarray, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Remove each row's own index and keep the first *m* others (squared distances)."""
    n = found.shape[0]
    idx = np.full((n, m), -1, dtype=np.int64)
    out = np.full((n, m), np.inf)
    for v in range(n):
        keep = (found[v] != v) & (found[v] >= 0)
        row, d = found[v][keep][:m], dists[v][keep][:m]
        idx[v, :row.shape[0]] = row
        out[v, :row.shape[0]] = d ** 2
    return idx, out
