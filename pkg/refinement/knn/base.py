from __future__ import annotations

import numpy as np


class KnnBackend:
    """
    Base class for nearest-neighbor search over node features.

    ``query`` returns, for every row of *features*, the indices and squared
    Euclidean distances of its ``min(k, n - 1)`` nearest other rows, closest
    first.  A row never lists itself; a backend that finds fewer
    neighbors pads the row with index -1 and distance inf.
    """

    name = "base"

    def query(self, features: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError
