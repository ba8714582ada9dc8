"""
Training loop.

One epoch, in order:

  1. forward + composite loss + analytic backward on the current topology
  2. weight decay, global-norm clipping, gradient step with the decayed rate
  3. distance pruning of the hop shells (with the updated parameters)
  4. kNN candidates + similarity scoring on the pre-commit graph
  5. a single atomic commit of prunes and added edges
  6. validation / test accuracy on the committed topology

Shells are rebuilt only when edges were added; earlier prunes are restored
on the rebuilt shells.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from diffusion.config import Mode, ScheduleConfig
from diffusion.engine import forward
from diffusion.params import DiffusionParams, SimilarityWeights, init_params
from errors import InvalidArgumentError
from graph.shells import HopShells, build_hop_shells, restore_pruned
from graph.store import GraphStore, apply_topology_delta
from refinement.distance import prune_shells
from refinement.knn import get_knn_backend
from refinement.report import RefinementReport, VisitCounter
from refinement.topology import CandidateSet, knn_candidates, score_and_add
from training.backward import Gradients, LossBreakdown, backward
from training.losses import classification_loss, learning_rate

logger = logging.getLogger(__name__)

HISTORY_COLUMNS = [
    "epoch", "loss_total", "loss_cls", "loss_dr", "loss_tr", "loss_reg",
    "grad_norm", "val_acc", "test_acc", "d_eff", "edges_added", "edges_pruned",
]


# ---------------------------------------------------------------------------
# Data split
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DataSplit:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray


def make_split(g: GraphStore, val_fraction: float, seed: int) -> DataSplit:
    """
    Validation = a seeded share of the labeled pool, training = the rest of
    it, test = every labeled node outside the pool.
    """
    pool = g.labeled_set
    if pool.size == 0:
        raise InvalidArgumentError("the graph has no labeled nodes to train on")
    rng = np.random.default_rng([seed, 0x5EED])
    shuffled = rng.permutation(pool)
    n_val = int(round(val_fraction * pool.size))
    n_val = min(n_val, pool.size - 1)
    known = np.flatnonzero(g.labels >= 0)
    return DataSplit(
        train=np.sort(shuffled[n_val:]),
        val=np.sort(shuffled[:n_val]),
        test=np.setdiff1d(known, pool),
    )


def accuracy(logits: np.ndarray, labels: np.ndarray, nodes: np.ndarray) -> float:
    if nodes.size == 0:
        return float("nan")
    return float(np.mean(np.argmax(logits[nodes], axis=1) == labels[nodes]))


# ---------------------------------------------------------------------------
# State
# ---------------------------------------------------------------------------

@dataclass
class TrainState:
    params: DiffusionParams
    weights: SimilarityWeights
    visits: VisitCounter
    patience_left: int
    rng_seed: int
    epoch: int = 0
    best_val_metric: float = -np.inf
    best_val_loss: float = np.inf
    best_epoch: int = 0
    best_params: Optional[DiffusionParams] = None
    best_weights: Optional[SimilarityWeights] = None
    # scored candidates of the previous epoch; they feed this epoch's margin term
    candidates: Optional[CandidateSet] = None
    knn_cache: Optional[tuple[np.ndarray, np.ndarray]] = field(default=None, repr=False)


def init_state(g: GraphStore, cfg: ScheduleConfig, params: Optional[DiffusionParams] = None) -> TrainState:
    if g.class_count < 1:
        raise InvalidArgumentError("the graph carries no class labels")
    if params is None:
        params = init_params(cfg.K, g.feature_dim, cfg.hidden_dim, g.class_count, cfg.seed)
    return TrainState(
        params=params,
        weights=SimilarityWeights(*cfg.omega_init),
        visits=VisitCounter(g.node_count),
        patience_left=cfg.patience,
        rng_seed=cfg.seed,
    )


@dataclass
class EpochOutcome:
    state: TrainState
    graph: GraphStore
    shells: HopShells
    loss: LossBreakdown
    report: RefinementReport
    val_acc: float
    test_acc: float


# ---------------------------------------------------------------------------
# One epoch
# ---------------------------------------------------------------------------

def _step(params: DiffusionParams, weights: SimilarityWeights, grads: Gradients, lr: float):
    new_params = DiffusionParams(
        **{name: t - lr * getattr(grads, name) for name, t in params.tensors()}
    )
    new_weights = SimilarityWeights.from_array(weights.as_array() - lr * grads.omega)
    return new_params, new_weights


def _with_weight_decay(grads: Gradients, params: DiffusionParams, decay: float) -> Gradients:
    if decay == 0:
        return grads
    return replace(
        grads,
        hop_transforms=grads.hop_transforms + decay * params.hop_transforms,
        attention_vector=grads.attention_vector + decay * params.attention_vector,
        classifier=grads.classifier + decay * params.classifier,
    )


def train_epoch(
    state: TrainState,
    g: GraphStore,
    shells: HopShells,
    cfg: ScheduleConfig,
    split: DataSplit,
) -> EpochOutcome:
    """
    Run one epoch and return the new state and topology.  Inputs are not
    mutated, so a failure anywhere leaves the previous epoch intact.
    """
    mode = cfg.mode
    t = state.epoch + 1

    grads, loss, _ = backward(
        g, shells, state.params, cfg, split.train,
        candidates=state.candidates if mode.uses_tr else None,
    )
    grads = _with_weight_decay(grads, state.params, cfg.weight_decay)
    grads, pre_norm = grads.clip(cfg.clip_tau)
    loss.grad_norm = pre_norm
    lr = learning_rate(t, cfg)
    params, weights = _step(state.params, state.weights, grads, lr)

    report = RefinementReport(
        epoch=t,
        d_original=shells.original_degree(),
        d_eff_before=shells.effective_degree(),
    )
    visits = state.visits

    frag = None
    if mode.uses_dr:
        frag = prune_shells(g, shells, cfg, params)
        report.add_prune(frag)
        visits = visits.copy()
        visits.add(frag.visit_keys)
        report.visit_total = visits.total

    added = np.zeros((0, 2), dtype=np.int64)
    candidates = None
    knn_cache = state.knn_cache
    if mode.uses_tr:
        if knn_cache is None:
            knn_cache = get_knn_backend(cfg.knn_backend, cfg.seed).query(g.features, cfg.knn_k)
        pool = knn_candidates(
            g, cfg.knn_k, cfg.max_added_per_node_R, neighbors=knn_cache
        )
        result = score_and_add(g, pool, weights, cfg, rng_seed=cfg.seed + t)
        report.add_additions(result)
        added = result.added
        candidates = result.candidates

    new_g, new_shells = apply_topology_delta(
        g, added, shells,
        pruned=frag.pruned if frag else None,
        radius=frag.radius if frag else None,
    )
    if added.shape[0]:
        rebuilt = build_hop_shells(new_g, cfg.K, cfg.shell_cap, cfg.seed)
        restore_pruned(rebuilt, new_shells.pruned_log)
        rebuilt.pruned_log = new_shells.pruned_log
        rebuilt.radius = new_shells.radius
        new_shells = rebuilt
    report.d_eff_after = new_shells.effective_degree()

    if mode.uses_dr and loss.dr > 0:
        logger.debug("[Trainer] epoch %d distance hinge %.6g after drift", t, loss.dr)
    if report.pruned or report.added:
        logger.debug(
            "[Trainer] epoch %d pruned %d, added %d, d_eff %.3f -> %.3f",
            t, len(report.pruned), len(report.added), report.d_eff_before, report.d_eff_after,
        )

    fp = forward(new_g, new_shells, params, cfg)
    val_acc = accuracy(fp.logits, new_g.labels, split.val)
    test_acc = accuracy(fp.logits, new_g.labels, split.test)
    select = split.val if split.val.size else split.train
    metric = accuracy(fp.logits, new_g.labels, select)
    select_loss = classification_loss(fp.logits, new_g.labels, select)

    new_state = replace(
        state,
        params=params,
        weights=weights,
        visits=visits,
        epoch=t,
        candidates=candidates,
        knn_cache=knn_cache,
    )
    # accuracy ties go to the lower selection loss
    improved = metric > state.best_val_metric or (
        metric == state.best_val_metric and select_loss < state.best_val_loss
    )
    if improved:
        new_state.best_val_metric = metric
        new_state.best_val_loss = select_loss
        new_state.best_epoch = t
        new_state.best_params = params.copy()
        new_state.best_weights = SimilarityWeights.from_array(weights.as_array())
        new_state.patience_left = cfg.patience
    else:
        new_state.patience_left = state.patience_left - 1

    return EpochOutcome(
        state=new_state, graph=new_g, shells=new_shells, loss=loss,
        report=report, val_acc=val_acc, test_acc=test_acc,
    )


# ---------------------------------------------------------------------------
# Full fit
# ---------------------------------------------------------------------------

@dataclass
class FitResult:
    state: TrainState
    graph: GraphStore
    shells: HopShells
    split: DataSplit
    history: list[dict]
    reports: list[RefinementReport]
    epoch_seconds: list[float]
    val_acc: float
    test_acc: float
    embeddings: np.ndarray
    stopped_early: bool
    # topology the best parameters were selected on
    best_graph: GraphStore
    best_shells: HopShells

    @property
    def epochs_run(self) -> int:
        return len(self.history)

    @property
    def params(self) -> DiffusionParams:
        return self.state.best_params or self.state.params

    @property
    def weights(self) -> SimilarityWeights:
        return self.state.best_weights or self.state.weights

    def history_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.history, columns=HISTORY_COLUMNS)

    def write_history(self, path: Union[str, Path]) -> None:
        self.history_frame().to_csv(path, index=False, float_format="%.12g")


def fit(
    g: GraphStore,
    cfg: ScheduleConfig,
    mode: Optional[Union[str, Mode]] = None,
    params: Optional[DiffusionParams] = None,
    on_epoch: Optional[Callable[[EpochOutcome], None]] = None,
    progress: bool = False,
) -> FitResult:
    """
    Train up to ``cfg.epochs`` epochs with early stopping on validation
    accuracy.  Returns the best parameters (by validation accuracy) and
    their metrics on the topology of the epoch that selected them; ties in
    validation accuracy are broken by the lower validation loss.
    """
    if mode is not None:
        cfg = cfg.with_overrides(mode=Mode.parse(mode))
    split = make_split(g, cfg.val_fraction, cfg.seed)
    shells = build_hop_shells(g, cfg.K, cfg.shell_cap, cfg.seed)
    state = init_state(g, cfg, params)

    history: list[dict] = []
    reports: list[RefinementReport] = []
    seconds: list[float] = []
    stopped = False
    best_graph, best_shells = g, shells
    logger.info(
        "[Trainer] mode=%s nodes=%d edges=%d train=%d val=%d test=%d",
        cfg.mode.value, g.node_count, g.edge_count, split.train.size, split.val.size, split.test.size,
    )

    epochs = tqdm(range(cfg.epochs), desc=f"fit {cfg.mode.value}", disable=not progress, leave=False)
    for _ in epochs:
        started = time.perf_counter()
        out = train_epoch(state, g, shells, cfg, split)
        seconds.append(time.perf_counter() - started)
        state, g, shells = out.state, out.graph, out.shells
        reports.append(out.report)
        if state.best_epoch == state.epoch:
            best_graph, best_shells = g, shells
        history.append({
            "epoch": state.epoch,
            "loss_total": out.loss.total,
            "loss_cls": out.loss.classification,
            "loss_dr": out.loss.dr,
            "loss_tr": out.loss.tr,
            "loss_reg": out.loss.regularization,
            "grad_norm": out.loss.grad_norm,
            "val_acc": out.val_acc,
            "test_acc": out.test_acc,
            "d_eff": out.report.d_eff_after,
            "edges_added": len(out.report.added),
            "edges_pruned": len(out.report.pruned),
        })
        if on_epoch is not None:
            on_epoch(out)
        if state.patience_left <= 0:
            logger.info("[Trainer] early stop at epoch %d (best %d)", state.epoch, state.best_epoch)
            stopped = True
            break

    best = state.best_params or state.params
    fp = forward(best_graph, best_shells, best, cfg)
    val_acc = accuracy(fp.logits, best_graph.labels, split.val)
    test_acc = accuracy(fp.logits, best_graph.labels, split.test)
    logger.info("[Trainer] done after %d epoch(s): val=%.4f test=%.4f", len(history), val_acc, test_acc)
    return FitResult(
        state=state, graph=g, shells=shells, split=split, history=history,
        reports=reports, epoch_seconds=seconds, val_acc=val_acc, test_acc=test_acc,
        embeddings=fp.embeddings, stopped_early=stopped,
        best_graph=best_graph, best_shells=best_shells,
    )
