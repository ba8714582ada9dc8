"""Multi-hop heat-attention diffusion: configuration, parameters and forward pass."""

from diffusion.config import Mode, ScheduleConfig
from diffusion.engine import (
    ForwardPass,
    attention_weights,
    combine_hops,
    forward,
    hop_aggregate,
    layer_norm,
    temperature,
)
from diffusion.params import DiffusionParams, SimilarityWeights, init_params

__all__ = [
    "DiffusionParams",
    "ForwardPass",
    "Mode",
    "ScheduleConfig",
    "SimilarityWeights",
    "attention_weights",
    "combine_hops",
    "forward",
    "hop_aggregate",
    "init_params",
    "layer_norm",
    "temperature",
]
