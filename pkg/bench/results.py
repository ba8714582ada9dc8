"""
Experiment result bundle: per-seed rows, their aggregate and timings.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Union

import numpy as np
import pandas as pd


def aggregate_rows(rows: Iterable[dict], metrics: Iterable[str]) -> dict[str, dict[str, float]]:
    """Mean and population variance of each metric over the rows that carry it."""
    rows = list(rows)
    out = {}
    for name in metrics:
        values = np.array([r[name] for r in rows if name in r and r[name] is not None], dtype=np.float64)
        values = values[np.isfinite(values)]
        if values.size == 0:
            out[name] = {"mean": float("nan"), "var": float("nan"), "n": 0}
        else:
            out[name] = {"mean": float(values.mean()), "var": float(values.var()), "n": int(values.size)}
    return out


def to_jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


@dataclass
class ExperimentResult:
    name: str
    config: dict[str, Any]
    per_seed: list[dict[str, Any]]
    aggregate: dict[str, Any] = field(default_factory=dict)
    timings: dict[str, Any] = field(default_factory=dict)
    extra: dict[str, Any] = field(default_factory=dict)

    def reaggregate(self, metrics: Iterable[str]) -> dict[str, dict[str, float]]:
        return aggregate_rows(self.per_seed, metrics)

    def to_dict(self) -> dict[str, Any]:
        return to_jsonable({
            "name": self.name,
            "config": self.config,
            "per_seed": self.per_seed,
            "aggregate": self.aggregate,
            "timings": self.timings,
            "extra": self.extra,
        })

    def write_json(self, path: Union[str, Path]) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")

    def per_seed_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.per_seed)

    def write_csv(self, path: Union[str, Path]) -> None:
        self.per_seed_frame().to_csv(path, index=False, float_format="%.12g")
