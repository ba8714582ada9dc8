"""
Run configuration.

``ScheduleConfig`` carries every fixed hyperparameter of a run: the
diffusion temperatures, the distance and reconstruction constants, the
loss weights and the optimisation schedule.  It is read from and written to
a flat JSON document whose key names are stable across releases.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields, replace
from enum import Enum
from pathlib import Path
from typing import Any, Union

from errors import InvalidArgumentError, MalformedInputError


class Mode(str, Enum):
    BASELINE = "baseline"
    GDRA = "gdra"
    GKHDA = "gkhda"
    GKHDDRA = "gkhddra"

    @property
    def uses_attention(self) -> bool:
        return self in (Mode.GKHDA, Mode.GKHDDRA)

    @property
    def uses_dr(self) -> bool:
        return self in (Mode.GDRA, Mode.GKHDDRA)

    @property
    def uses_tr(self) -> bool:
        return self is Mode.GKHDDRA

    @classmethod
    def parse(cls, value: Union[str, "Mode"]) -> "Mode":
        if isinstance(value, Mode):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            names = ", ".join(m.value for m in cls)
            raise InvalidArgumentError(f"unknown mode {value!r} (expected one of {names})") from None


KNN_BACKENDS = ("exact", "approximate")

# Python field name -> JSON key, where they differ.
_JSON_RENAMES = {
    "max_added_per_node_R": "cap_R",
    "clip_tau": "clip",
}
_FIELD_FOR_KEY = {v: k for k, v in _JSON_RENAMES.items()}


@dataclass(frozen=True)
class ScheduleConfig:
    # diffusion
    tau0: float = 1.0
    eta_decay: float = 0.1
    leaky_slope: float = 0.2
    layer_norm_eps: float = 1e-5
    K: int = 3
    hidden_dim: int = 64
    attention_head_dim: int = 8  # recorded, single-head attention only
    shell_cap: int = 32

    # distance recomputation
    lambda0: float = 0.1
    rho: float = 0.05
    lambda_min: float = 0.01
    beta1: float = 1.0
    beta2: float = 1.0
    percentile_p: float = 0.75
    distance_batch_size: int = 1024

    # topology reconstruction
    omega_init: tuple[float, float, float] = (1.0, 1.0, 1.0)
    tr_beta: float = 0.5
    tr_tau: float = 1.0
    tr_theta: float = 0.6
    knn_k: int = 50
    max_added_per_node_R: int = 50
    tr_sampling: bool = False
    knn_backend: str = "exact"

    # optimisation
    loss_weights: tuple[float, float, float] = (0.4, 0.4, 0.2)
    lr0: float = 0.005
    lr_mu: float = 0.001
    clip_tau: float = 1.0
    weight_decay: float = 0.0005
    epochs: int = 1000
    patience: int = 100
    batch_size: str = "full"
    val_fraction: float = 0.2

    # run
    seed: int = 0
    mode: Mode = Mode.GKHDDRA
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode.parse(self.mode))
        object.__setattr__(self, "loss_weights", tuple(float(w) for w in self.loss_weights))
        object.__setattr__(self, "omega_init", tuple(float(w) for w in self.omega_init))
        self._validate()

    # ------------------------------------------------------------------
    # Validation
    # ------------------------------------------------------------------

    def _validate(self) -> None:
        def need(ok: bool, message: str) -> None:
            if not ok:
                raise InvalidArgumentError(message)

        for name in (
            "tau0", "eta_decay", "leaky_slope", "layer_norm_eps", "lambda0", "rho",
            "lambda_min", "beta1", "beta2", "percentile_p", "tr_beta", "tr_tau",
            "tr_theta", "lr0", "lr_mu", "clip_tau", "weight_decay", "val_fraction",
        ):
            need(math.isfinite(getattr(self, name)), f"{name} must be finite")

        need(self.tau0 > 0, f"tau0 must be > 0, got {self.tau0}")
        need(self.eta_decay >= 0, f"eta_decay must be >= 0, got {self.eta_decay}")
        need(self.leaky_slope >= 0, f"leaky_slope must be >= 0, got {self.leaky_slope}")
        need(self.layer_norm_eps > 0, f"layer_norm_eps must be > 0, got {self.layer_norm_eps}")
        need(self.K >= 1, f"K must be >= 1, got {self.K}")
        need(self.hidden_dim >= 1, f"hidden_dim must be >= 1, got {self.hidden_dim}")
        need(self.attention_head_dim >= 1, "attention_head_dim must be >= 1")
        need(self.shell_cap >= 1, f"shell_cap must be >= 1, got {self.shell_cap}")

        need(self.lambda0 >= 0 and self.lambda_min >= 0, "lambda0 and lambda_min must be >= 0")
        need(self.lambda0 + self.lambda_min > 0, "lambda0 + lambda_min must be > 0")
        need(self.rho >= 0, f"rho must be >= 0, got {self.rho}")
        need(self.beta1 >= 0 and self.beta2 >= 0, "beta1 and beta2 must be >= 0")
        need(0 < self.percentile_p < 1, f"percentile_p must lie in (0, 1), got {self.percentile_p}")
        need(self.distance_batch_size >= 1, "distance_batch_size must be >= 1")

        need(len(self.omega_init) == 3, "omega_init needs three weights")
        need(all(w >= 0 and math.isfinite(w) for w in self.omega_init), "omega_init must be >= 0")
        need(self.tr_tau > 0, f"tr_tau must be > 0, got {self.tr_tau}")
        need(0 < self.tr_theta < 1, f"tr_theta must lie in (0, 1), got {self.tr_theta}")
        need(self.knn_k >= 1, f"knn_k must be >= 1, got {self.knn_k}")
        need(self.max_added_per_node_R >= 1, "cap_R must be >= 1")
        need(self.knn_backend in KNN_BACKENDS, f"knn_backend must be one of {KNN_BACKENDS}")

        need(len(self.loss_weights) == 3, "loss_weights needs three entries")
        need(all(w >= 0 for w in self.loss_weights), "loss_weights must be >= 0")
        need(abs(sum(self.loss_weights) - 1.0) <= 1e-9, "loss_weights must sum to 1")
        need(self.lr0 >= 0, f"lr0 must be >= 0, got {self.lr0}")
        need(self.lr_mu >= 0, f"lr_mu must be >= 0, got {self.lr_mu}")
        need(self.clip_tau > 0, f"clip must be > 0, got {self.clip_tau}")
        need(self.weight_decay >= 0, "weight_decay must be >= 0")
        need(self.epochs >= 1, f"epochs must be >= 1, got {self.epochs}")
        need(self.patience >= 1, f"patience must be >= 1, got {self.patience}")
        need(self.batch_size == "full", "only full-graph batches are supported")
        need(0 <= self.val_fraction < 1, "val_fraction must lie in [0, 1)")
        need(self.seed >= 0, f"seed must be >= 0, got {self.seed}")
        need(self.workers >= 1, f"workers must be >= 1, got {self.workers}")

    # ------------------------------------------------------------------
    # JSON
    # ------------------------------------------------------------------

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ScheduleConfig":
        known = {f.name for f in fields(cls)}
        kwargs = {}
        for key, value in data.items():
            name = _FIELD_FOR_KEY.get(key, key)
            if name not in known or key in _JSON_RENAMES:
                raise MalformedInputError(f"unknown config key {key!r}")
            kwargs[name] = value
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise MalformedInputError(f"bad config value: {exc}") from None

    @classmethod
    def from_json(cls, path: Union[str, Path]) -> "ScheduleConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise MalformedInputError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(data, dict):
            raise MalformedInputError(f"{path}: config must be a JSON object")
        return cls.from_dict(data)

    def to_dict(self) -> dict[str, Any]:
        out = {}
        for name, value in asdict(self).items():
            if isinstance(value, Mode):
                value = value.value
            elif isinstance(value, tuple):
                value = list(value)
            out[_JSON_RENAMES.get(name, name)] = value
        return out

    def save_json(self, path: Union[str, Path]) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    def with_overrides(self, **changes: Any) -> "ScheduleConfig":
        return replace(self, **changes)
