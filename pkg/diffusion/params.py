"""
Learnable parameters of the diffusion model and the similarity scorer.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterator

import numpy as np
from scipy.special import softmax

from errors import InvalidArgumentError, NumericError, ShapeError

logger = logging.getLogger(__name__)

# Fixed tensor order; the checkpoint codec and the optimiser both walk it.
TENSOR_NAMES = (
    "hop_transforms",
    "attention_vector",
    "hop_logits",
    "classifier",
    "classifier_bias",
)


@dataclass
class DiffusionParams:
    hop_transforms: np.ndarray     # (K, feature_dim, hidden_dim)
    attention_vector: np.ndarray   # (2 * hidden_dim,)
    hop_logits: np.ndarray         # (K,)
    classifier: np.ndarray         # (hidden_dim, class_count)
    classifier_bias: np.ndarray    # (class_count,)

    @property
    def K(self) -> int:
        return int(self.hop_transforms.shape[0])

    @property
    def feature_dim(self) -> int:
        return int(self.hop_transforms.shape[1])

    @property
    def hidden_dim(self) -> int:
        return int(self.hop_transforms.shape[2])

    @property
    def class_count(self) -> int:
        return int(self.classifier.shape[1])

    def hop_weights(self) -> np.ndarray:
        """gamma = softmax(phi); global across nodes."""
        return softmax(self.hop_logits)

    def tensors(self) -> Iterator[tuple[str, np.ndarray]]:
        for name in TENSOR_NAMES:
            yield name, getattr(self, name)

    def copy(self) -> "DiffusionParams":
        return DiffusionParams(**{name: t.copy() for name, t in self.tensors()})

    def validate(self) -> None:
        if self.hop_transforms.ndim != 3:
            raise ShapeError("hop_transforms must be (K, feature_dim, hidden_dim)")
        if self.classifier.ndim != 2:
            raise ShapeError("classifier must be (hidden_dim, class_count)")
        K, h, C = self.K, self.hidden_dim, self.class_count
        expected = {
            "attention_vector": (2 * h,),
            "hop_logits": (K,),
            "classifier": (h, C),
            "classifier_bias": (C,),
        }
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise ShapeError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")
        for name, tensor in self.tensors():
            if not np.all(np.isfinite(tensor)):
                raise NumericError("non-finite parameter", {"tensor": name})


@dataclass
class SimilarityWeights:
    """Non-negative weights of the alignment, Jaccard and distance terms."""

    omega1: float = 1.0
    omega2: float = 1.0
    omega3: float = 1.0

    def __post_init__(self):
        if min(self.omega1, self.omega2, self.omega3) < 0:
            raise InvalidArgumentError("similarity weights must be non-negative")

    def as_array(self) -> np.ndarray:
        return np.array([self.omega1, self.omega2, self.omega3], dtype=np.float64)

    @classmethod
    def from_array(cls, values: np.ndarray) -> "SimilarityWeights":
        """Build from raw values, projecting negatives onto zero."""
        w = np.maximum(np.asarray(values, dtype=np.float64), 0.0)
        if w.shape != (3,):
            raise ShapeError(f"expected three similarity weights, got shape {w.shape}")
        return cls(float(w[0]), float(w[1]), float(w[2]))


# ---------------------------------------------------------------------------
# Initialisation
# ---------------------------------------------------------------------------

def _glorot(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, fan_out: int) -> np.ndarray:
    s = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-s, s, size=shape)


def init_params(
    K: int, feature_dim: int, hidden_dim: int, class_count: int, seed: int = 0
) -> DiffusionParams:
    """Glorot-uniform weights, zero hop logits (uniform gamma) and zero bias."""
    if min(K, feature_dim, hidden_dim, class_count) < 1:
        raise InvalidArgumentError(
            f"all dimensions must be >= 1 (K={K}, d={feature_dim}, h={hidden_dim}, C={class_count})"
        )
    rng = np.random.default_rng(seed)
    params = DiffusionParams(
        hop_transforms=_glorot(rng, (K, feature_dim, hidden_dim), feature_dim, hidden_dim),
        attention_vector=_glorot(rng, (2 * hidden_dim,), 2 * hidden_dim, 1),
        hop_logits=np.zeros(K),
        classifier=_glorot(rng, (hidden_dim, class_count), hidden_dim, class_count),
        classifier_bias=np.zeros(class_count),
    )
    logger.debug("[Params] init K=%d d=%d h=%d C=%d seed=%d", K, feature_dim, hidden_dim, class_count, seed)
    return params
