"""
Link prediction from trained node embeddings.

Held-out edges are removed before training; an equal number of non-edges
is sampled uniformly as negatives.  Pairs are scored either by the sigmoid
of the embedding dot product or by the reconstruction similarity.
"""

from __future__ import annotations

import logging
import time
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit
from sklearn.metrics import average_precision_score, roc_auc_score

from bench.results import ExperimentResult, aggregate_rows
from bench.runner import run_seeds
from diffusion.config import Mode, ScheduleConfig
from diffusion.params import SimilarityWeights
from errors import InvalidArgumentError
from graph.store import GraphStore, with_pairs
from refinement.topology import CandidateSet, score_candidates
from training.trainer import fit

logger = logging.getLogger(__name__)

SCORERS = ("dot", "similarity")


def split_edges(
    g: GraphStore, holdout_fraction: float, seed: int
) -> tuple[GraphStore, np.ndarray, np.ndarray]:
    """``(train_graph, positives, negatives)``; both pair arrays are (m, 2) with v < u."""
    if not 0 < holdout_fraction < 1:
        raise InvalidArgumentError(f"holdout fraction must lie in (0, 1), got {holdout_fraction}")
    pairs = g.edge_pairs()
    m = max(1, int(round(holdout_fraction * pairs.shape[0])))
    if pairs.shape[0] == 0 or m >= pairs.shape[0]:
        raise InvalidArgumentError("the holdout would remove every edge of the graph")

    rng = np.random.default_rng(seed)
    chosen = np.zeros(pairs.shape[0], dtype=bool)
    chosen[rng.choice(pairs.shape[0], size=m, replace=False)] = True
    positives = pairs[chosen]
    train = with_pairs(g, pairs[~chosen])
    negatives = sample_non_edges(g, m, rng)
    return train, positives, negatives


def sample_non_edges(g: GraphStore, count: int, rng: np.random.Generator) -> np.ndarray:
    n = g.node_count
    free = n * (n - 1) // 2 - g.edge_count
    if count > free:
        raise InvalidArgumentError(f"only {free} non-edges available, {count} requested")
    picked: set[tuple[int, int]] = set()
    while len(picked) < count:
        draw = rng.integers(0, n, size=(2 * (count - len(picked)) + 8, 2))
        for v, u in draw:
            if v == u:
                continue
            pair = (int(min(v, u)), int(max(v, u)))
            if pair in picked or g.has_edge(*pair):
                continue
            picked.add(pair)
            if len(picked) == count:
                break
    return np.array(sorted(picked), dtype=np.int64).reshape(-1, 2)


def dot_scores(embeddings: np.ndarray, pairs: np.ndarray) -> np.ndarray:
    return expit(np.einsum("ij,ij->i", embeddings[pairs[:, 0]], embeddings[pairs[:, 1]]))


def similarity_scores(
    g: GraphStore, pairs: np.ndarray, weights: SimilarityWeights, cfg: ScheduleConfig
) -> np.ndarray:
    scored = score_candidates(g, CandidateSet(pairs[:, 0], pairs[:, 1]), weights, cfg)
    return scored.sim


def auc_ap(pos_scores: np.ndarray, neg_scores: np.ndarray) -> tuple[float, float]:
    y_true = np.concatenate([np.ones(pos_scores.shape[0]), np.zeros(neg_scores.shape[0])])
    y_score = np.concatenate([pos_scores, neg_scores])
    return float(roc_auc_score(y_true, y_score)), float(average_precision_score(y_true, y_score))


def evaluate_embeddings(
    embeddings: np.ndarray, positives: np.ndarray, negatives: np.ndarray
) -> tuple[float, float]:
    return auc_ap(dot_scores(embeddings, positives), dot_scores(embeddings, negatives))


def random_embedding_auc(g: GraphStore, holdout_fraction: float, seed: int, dim: int = 16) -> float:
    """Chance-level reference: AUC of Gaussian random embeddings."""
    _, pos, neg = split_edges(g, holdout_fraction, seed)
    Z = np.random.default_rng([seed, 1]).normal(size=(g.node_count, dim))
    return evaluate_embeddings(Z, pos, neg)[0]


def link_prediction_eval(
    g: GraphStore,
    cfg: ScheduleConfig,
    holdout_fraction: float,
    seeds: Sequence[int],
    mode: Optional[Mode] = None,
    scorer: str = "dot",
    progress: bool = False,
) -> ExperimentResult:
    """Train on the graph minus a holdout, per seed, and score the holdout."""
    if scorer not in SCORERS:
        raise InvalidArgumentError(f"scorer must be one of {SCORERS}, got {scorer!r}")
    run_cfg = cfg.with_overrides(mode=Mode.parse(mode)) if mode is not None else cfg

    def _one(seed: int) -> dict:
        started = time.perf_counter()
        train, pos, neg = split_edges(g, holdout_fraction, seed)
        result = fit(train, run_cfg.with_overrides(seed=seed))
        if scorer == "dot":
            auc, ap = evaluate_embeddings(result.embeddings, pos, neg)
        else:
            auc, ap = auc_ap(
                similarity_scores(result.graph, pos, result.weights, run_cfg),
                similarity_scores(result.graph, neg, result.weights, run_cfg),
            )
        return {
            "seed": seed, "auc": auc, "ap": ap, "epochs": result.epochs_run,
            "seconds": time.perf_counter() - started,
        }

    rows = run_seeds(_one, seeds, workers=run_cfg.workers, progress=progress, desc="linkpred")
    logger.info("[LinkPred] mode=%s scorer=%s over %d seed(s)", run_cfg.mode.value, scorer, len(rows))
    return ExperimentResult(
        name=f"linkpred-{run_cfg.mode.value}",
        config={**run_cfg.to_dict(), "holdout": holdout_fraction, "scorer": scorer},
        per_seed=rows,
        aggregate=aggregate_rows(rows, ("auc", "ap")),
        timings=aggregate_rows(rows, ("seconds", "epochs")),
    )
