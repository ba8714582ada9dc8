"""
Per-epoch refinement report and its JSON-lines form.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, TextIO, Union

import numpy as np

from refinement.distance import PruneFragment
from refinement.topology import AdditionResult


@dataclass(frozen=True)
class PruneEvent:
    v: int
    k: int
    u: int
    d: float
    alpha: float


@dataclass(frozen=True)
class AddEvent:
    v: int
    u: int
    sim: float
    prob: float


@dataclass
class RefinementReport:
    epoch: int
    pruned: list[PruneEvent] = field(default_factory=list)
    added: list[AddEvent] = field(default_factory=list)
    d_eff_before: float = 0.0
    d_eff_after: float = 0.0
    d_original: float = 0.0
    mean_threshold: list[float] = field(default_factory=list)   # per hop, over non-empty shells
    visit_total: int = 0

    @property
    def empty(self) -> bool:
        return not self.pruned and not self.added

    def add_prune(self, frag: PruneFragment) -> None:
        for (v, k, u), d, a in zip(frag.pruned, frag.distances, frag.alphas):
            self.pruned.append(PruneEvent(v, k, u, d, a))
        self.mean_threshold = [
            float(np.nanmean(t)) if np.isfinite(t).any() else float("nan") for t in frag.thresholds
        ]

    def add_additions(self, result: AdditionResult) -> None:
        for (v, u), s, p in zip(result.added, result.sims, result.probs):
            self.added.append(AddEvent(int(v), int(u), float(s), float(p)))

    def lines(self) -> Iterable[str]:
        for e in self.pruned:
            yield json.dumps({
                "epoch": self.epoch, "v": e.v, "k": e.k, "u": e.u,
                "d": e.d, "alpha": e.alpha, "action": "prune",
            })
        for e in self.added:
            yield json.dumps({
                "epoch": self.epoch, "v": e.v, "u": e.u,
                "sim": e.sim, "prob": e.prob, "action": "add",
            })

    def write_jsonl(self, out: TextIO) -> None:
        for line in self.lines():
            out.write(line + "\n")


def write_reports(path: Union[str, Path], reports: Iterable[RefinementReport]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for report in reports:
            report.write_jsonl(fh)


# ---------------------------------------------------------------------------
# Visit counters N_k(v, u)
# ---------------------------------------------------------------------------

@dataclass
class VisitCounter:
    """Sparse counts keyed by ``(k_index * n + v) * n + u``."""

    node_count: int
    keys: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    counts: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def add(self, new_keys: np.ndarray) -> None:
        if new_keys.size == 0:
            return
        merged = np.concatenate([self.keys, np.asarray(new_keys, dtype=np.int64)])
        weights = np.concatenate([self.counts, np.ones(new_keys.shape[0], dtype=np.int64)])
        self.keys, inverse = np.unique(merged, return_inverse=True)
        self.counts = np.bincount(inverse.ravel(), weights=weights).astype(np.int64)

    def get(self, v: int, k: int, u: int) -> int:
        n = self.node_count
        key = ((k - 1) * n + v) * n + u
        pos = int(np.searchsorted(self.keys, key))
        if pos < self.keys.shape[0] and self.keys[pos] == key:
            return int(self.counts[pos])
        return 0

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def copy(self) -> "VisitCounter":
        return VisitCounter(self.node_count, self.keys.copy(), self.counts.copy())


def summarize(reports: Iterable[RefinementReport], epoch: Optional[int] = None) -> dict:
    reports = [r for r in reports if epoch is None or r.epoch == epoch]
    return {
        "epochs": len(reports),
        "pruned": sum(len(r.pruned) for r in reports),
        "added": sum(len(r.added) for r in reports),
    }
