"""Brute-force exact kNN."""

from __future__ import annotations

import numpy as np

from errors import InvalidArgumentError
from refinement.knn.base import KnnBackend

# Upper bound on the elements of one (rows, n, d) difference block.
_BLOCK_ELEMENTS = 1 << 22


class ExactKnn(KnnBackend):
    """Every pairwise squared distance; ties break toward the lower index."""

    name = "exact"

    def query(self, features: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
        if k < 1:
            raise InvalidArgumentError(f"k must be >= 1, got {k}")
        X = np.asarray(features, dtype=np.float64)
        n, d = X.shape
        m = min(k, n - 1)
        idx = np.zeros((n, max(m, 0)), dtype=np.int64)
        dist = np.zeros((n, max(m, 0)), dtype=np.float64)
        if m <= 0:
            return idx, dist

        rows = max(1, _BLOCK_ELEMENTS // max(1, n * d))
        for start in range(0, n, rows):
            stop = min(n, start + rows)
            diff = X[start:stop, None, :] - X[None, :, :]
            block = np.einsum("ijk,ijk->ij", diff, diff)
            block[np.arange(stop - start), np.arange(start, stop)] = np.inf
            order = np.argsort(block, axis=1, kind="stable")[:, :m]
            idx[start:stop] = order
            dist[start:stop] = np.take_along_axis(block, order, axis=1)
        return idx, dist
