from __future__ import annotations

import numpy as np

from errors import InvalidArgumentError
from .base import KnnBackend

_instances: dict[tuple[str, int], KnnBackend] = {}


def get_knn_backend(name: str = "exact", seed: int = 0) -> KnnBackend:
    key = (name, seed)
    if key in _instances:
        return _instances[key]

    if name == "exact":
        from .exact import ExactKnn
        backend: KnnBackend = ExactKnn()
    elif name == "approximate":
        from .approximate import ApproximateKnn
        backend = ApproximateKnn(seed=seed)
    else:
        raise InvalidArgumentError(f"unknown kNN backend {name!r}")

    _instances[key] = backend
    return backend


def recall_at_k(found: np.ndarray, exact: np.ndarray) -> float:
    """Mean fraction of each row's exact neighbors that *found* recovers."""
    if exact.size == 0:
        return 1.0
    hits = sum(
        np.intersect1d(f[f >= 0], e, assume_unique=False).shape[0]
        for f, e in zip(found, exact)
    )
    return hits / exact.size


__all__ = ["KnnBackend", "get_knn_backend", "recall_at_k"]
