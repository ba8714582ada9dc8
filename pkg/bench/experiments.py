"""
Experiment drivers: stability under edge flips, mode ablation, noise
attenuation of the pruning step, effective degree and timing, scaling with
graph size, and the gradient-norm convergence trend.
"""

from __future__ import annotations

import logging
import math
import time
from typing import Iterable, Optional, Sequence, Union

import numpy as np
from scipy.stats import linregress

from bench.results import ExperimentResult, aggregate_rows
from bench.runner import run_seeds
from bench.sbm import SbmSpec, gen_sbm
from diffusion.config import Mode, ScheduleConfig
from diffusion.engine import forward
from diffusion.params import DiffusionParams, init_params
from errors import InvalidArgumentError
from graph.shells import build_hop_shells
from graph.store import GraphStore, with_pairs
from refinement.distance import prune_shells
from training.trainer import FitResult, fit

logger = logging.getLogger(__name__)

ALL_MODES = (Mode.BASELINE, Mode.GDRA, Mode.GKHDA, Mode.GKHDDRA)


# ---------------------------------------------------------------------------
# Stability
# ---------------------------------------------------------------------------

def flip_edges(g: GraphStore, delta: int, rng: np.random.Generator) -> GraphStore:
    """Toggle *delta* distinct uniformly random node pairs (add if absent, remove if present)."""
    n = g.node_count
    pairs_total = n * (n - 1) // 2
    if delta < 0 or delta > pairs_total:
        raise InvalidArgumentError(f"cannot flip {delta} edges; the graph has {pairs_total} node pairs")
    if delta == 0:
        return g
    flips: set[tuple[int, int]] = set()
    while len(flips) < delta:
        v, u = rng.integers(0, n, size=2)
        if v != u:
            flips.add((int(min(v, u)), int(max(v, u))))
    current = {(int(v), int(u)) for v, u in g.edge_pairs()}
    pairs = sorted(current ^ flips)
    return with_pairs(g, np.array(pairs, dtype=np.int64).reshape(-1, 2))


def stability_experiment(
    g: GraphStore,
    cfg: ScheduleConfig,
    deltas: Sequence[int],
    seeds: Sequence[int],
    params: Optional[DiffusionParams] = None,
) -> ExperimentResult:
    """
    ||Z1 - Z2||_F / (delta * sqrt(|V|)) for graphs that differ in *delta*
    flipped pairs, with one fixed parameter set (random when not given).
    """
    if params is None:
        params = init_params(cfg.K, g.feature_dim, cfg.hidden_dim, max(1, g.class_count), cfg.seed)
    n = g.node_count
    shells = build_hop_shells(g, cfg.K, cfg.shell_cap, cfg.seed)
    Z1 = forward(g, shells, params, cfg).embeddings

    def _one(seed: int) -> list[dict]:
        rows = []
        for delta in deltas:
            rng = np.random.default_rng([seed, delta])
            g2 = flip_edges(g, delta, rng)
            Z2 = forward(g2, build_hop_shells(g2, cfg.K, cfg.shell_cap, cfg.seed), params, cfg).embeddings
            diff = float(np.linalg.norm(Z1 - Z2))
            ratio = diff / (delta * math.sqrt(n)) if delta > 0 else 0.0
            rows.append({"seed": seed, "delta": int(delta), "diff_norm": diff, "ratio": ratio})
        return rows

    rows = [r for chunk in run_seeds(_one, seeds, workers=cfg.workers, desc="stability") for r in chunk]

    positive = sorted({d for d in deltas if d > 0})
    by_delta = {
        d: float(np.mean([r["ratio"] for r in rows if r["delta"] == d])) for d in sorted(set(deltas))
    }
    spreads, doublings = [], []
    for seed in seeds:
        mine = {r["delta"]: r["ratio"] for r in rows if r["seed"] == seed}
        vals = [mine[d] for d in positive if mine[d] > 0]
        if vals:
            spreads.append(max(vals) / min(vals))
        for d in positive:
            if 2 * d in mine and mine[d] > 0:
                doublings.append(mine[2 * d] / mine[d])

    return ExperimentResult(
        name="stability",
        config={**cfg.to_dict(), "deltas": list(deltas), "seeds": list(seeds)},
        per_seed=rows,
        aggregate=aggregate_rows(rows, ("ratio", "diff_norm")),
        extra={
            "ratio_by_delta": by_delta,
            "max_ratio": max((r["ratio"] for r in rows), default=0.0),
            "max_spread": max(spreads, default=float("nan")),
            "max_doubling": max(doublings, default=float("nan")),
        },
    )


# ---------------------------------------------------------------------------
# Ablation
# ---------------------------------------------------------------------------

def ablation_experiment(
    spec: SbmSpec,
    cfg: ScheduleConfig,
    seeds: Sequence[int],
    modes: Iterable[Union[str, Mode]] = ALL_MODES,
    progress: bool = False,
) -> ExperimentResult:
    """Test accuracy, its variance and timing per mode, every mode on the same graph per seed."""
    seeds = list(seeds)
    if len(seeds) < 2:
        raise InvalidArgumentError("an ablation needs at least two seeds")
    modes = [Mode.parse(m) for m in modes]

    def _one(seed: int) -> list[dict]:
        g, _ = gen_sbm(spec.with_seed(seed))
        rows = []
        for mode in modes:
            started = time.perf_counter()
            result = fit(g, cfg.with_overrides(seed=seed, mode=mode))
            rows.append({
                "seed": seed, "mode": mode.value, "test_acc": result.test_acc,
                "val_acc": result.val_acc, "epochs": result.epochs_run,
                "seconds": time.perf_counter() - started,
                "edges_start": g.edge_count, "edges_end": result.graph.edge_count,
            })
        return rows

    rows = [r for chunk in run_seeds(_one, seeds, cfg.workers, progress, "ablation") for r in chunk]

    per_mode = {}
    for mode in modes:
        mine = [r for r in rows if r["mode"] == mode.value]
        per_mode[mode.value] = aggregate_rows(mine, ("test_acc", "val_acc", "seconds", "epochs"))

    derived = {}
    base = per_mode.get(Mode.BASELINE.value)
    if base is not None:
        base_var = base["test_acc"]["var"]
        base_time = base["seconds"]["mean"]
        for name, agg in per_mode.items():
            derived[name] = {
                "acc_gain": agg["test_acc"]["mean"] - base["test_acc"]["mean"],
                "variance_reduction_pct": (
                    100.0 * (base_var - agg["test_acc"]["var"]) / base_var if base_var > 0 else float("nan")
                ),
                "time_overhead_pct": (
                    100.0 * (agg["seconds"]["mean"] - base_time) / base_time if base_time > 0 else float("nan")
                ),
            }

    logger.info("[Ablation] %d seed(s) x %d mode(s)", len(seeds), len(modes))
    return ExperimentResult(
        name="ablation",
        config={**cfg.to_dict(), "spec": spec.to_dict(), "seeds": seeds},
        per_seed=rows,
        aggregate=per_mode,
        timings={name: agg["seconds"] for name, agg in per_mode.items()},
        extra={"relative_to_baseline": derived},
    )


# ---------------------------------------------------------------------------
# Noise attenuation
# ---------------------------------------------------------------------------

def noise_attenuation_experiment(
    spec: SbmSpec, cfg: ScheduleConfig, seeds: Sequence[int]
) -> ExperimentResult:
    """
    Share of pruned 1-hop entries that are planted noisy edges, against the
    share of noisy edges among all 1-hop entries before pruning.  Noisy
    labels are only read here, after the prune.
    """

    def _one(seed: int) -> dict:
        g, noisy = gen_sbm(spec.with_seed(seed))
        shells = build_hop_shells(g, cfg.K, cfg.shell_cap, cfg.seed)
        centers, members = shells.active_entries(1)
        entries = list(zip(np.minimum(centers, members).tolist(), np.maximum(centers, members).tolist()))
        base = float(np.mean([p in noisy for p in entries])) if entries else float("nan")

        frag = prune_shells(g, shells, cfg)
        hop1 = [(min(v, u), max(v, u)) for v, k, u in frag.pruned if k == 1]
        pruned_rate = float(np.mean([p in noisy for p in hop1])) if hop1 else float("nan")
        return {
            "seed": seed, "entries": len(entries), "pruned": len(hop1),
            "base_rate": base, "pruned_noisy_rate": pruned_rate,
            "attenuation": pruned_rate / base if base > 0 else float("nan"),
        }

    rows = run_seeds(_one, seeds, workers=cfg.workers, desc="noise")
    agg = aggregate_rows(rows, ("base_rate", "pruned_noisy_rate", "attenuation"))
    ratio = agg["pruned_noisy_rate"]["mean"] / agg["base_rate"]["mean"] if agg["base_rate"]["mean"] > 0 else float("nan")
    return ExperimentResult(
        name="noise-attenuation",
        config={**cfg.to_dict(), "spec": spec.to_dict(), "seeds": list(seeds)},
        per_seed=rows,
        aggregate=agg,
        extra={"rate_ratio": ratio},
    )


# ---------------------------------------------------------------------------
# Effective degree, timing and scaling
# ---------------------------------------------------------------------------

def degree_and_timing_report(run: FitResult, reference: Optional[FitResult] = None) -> ExperimentResult:
    """
    Per-epoch effective degree against the built degree, plus epoch time.
    *reference* is a run without pruning; its mean epoch time gives the speedup.
    """
    rows = []
    for report, seconds in zip(run.reports, run.epoch_seconds):
        rows.append({
            "epoch": report.epoch,
            "d_eff": report.d_eff_after,
            "d_original": report.d_original,
            "ratio": report.d_eff_after / report.d_original if report.d_original > 0 else float("nan"),
            "seconds": seconds,
        })
    mean_seconds = float(np.mean(run.epoch_seconds)) if run.epoch_seconds else float("nan")
    extra = {
        "first_ratio": rows[0]["ratio"] if rows else float("nan"),
        "mean_epoch_seconds": mean_seconds,
        "epochs_to_stop": run.epochs_run,
    }
    if reference is not None and reference.epoch_seconds and mean_seconds > 0:
        extra["speedup"] = float(np.mean(reference.epoch_seconds)) / mean_seconds
    return ExperimentResult(
        name="degree-timing",
        config={},
        per_seed=rows,
        aggregate=aggregate_rows(rows, ("d_eff", "ratio", "seconds")),
        extra=extra,
    )


def _fit_line(x: Sequence[float], y: Sequence[float]) -> dict[str, float]:
    if len(set(x)) < 2:
        return {"slope": float("nan"), "intercept": float("nan"), "r2": float("nan")}
    fit_ = linregress(np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64))
    return {"slope": float(fit_.slope), "intercept": float(fit_.intercept), "r2": float(fit_.rvalue ** 2)}


def sbm_for_degree(n: int, avg_degree: float, blocks: int = 4, seed: int = 0, **overrides) -> SbmSpec:
    """An SBM spec of about *n* nodes whose expected degree is *avg_degree* (p_out = p_in / 10)."""
    per_block = max(1, n // blocks)
    span = (per_block - 1) + (blocks - 1) * per_block / 10.0
    p_in = min(1.0, avg_degree / span) if span > 0 else 0.0
    kwargs = dict(
        blocks=blocks, nodes_per_block=per_block, p_in=p_in, p_out=p_in / 10.0,
        noise_fraction=0.0, seed=seed,
    )
    kwargs.update(overrides)
    return SbmSpec(**kwargs)


def scaling_sweep(
    sizes: Sequence[int],
    avg_degree: float,
    cfg: ScheduleConfig,
    seeds: Sequence[int],
    epochs: int = 3,
) -> ExperimentResult:
    """Median epoch wall-clock for each graph size, with linear fits against |V| and |E|."""
    run_cfg = cfg.with_overrides(epochs=epochs, patience=epochs + 1)
    rows = []
    for n in sizes:
        for seed in seeds:
            g, _ = gen_sbm(sbm_for_degree(n, avg_degree, seed=seed))
            result = fit(g, run_cfg.with_overrides(seed=seed))
            secs = result.epoch_seconds[1:] or result.epoch_seconds
            rows.append({
                "n": g.node_count, "edges": g.edge_count, "seed": seed,
                "epoch_seconds": float(np.median(secs)),
            })
            logger.info("[Scale] n=%d edges=%d: %.4fs/epoch", g.node_count, g.edge_count, rows[-1]["epoch_seconds"])

    ns = [r["n"] for r in rows]
    es = [r["edges"] for r in rows]
    ts = [r["epoch_seconds"] for r in rows]
    return ExperimentResult(
        name="scaling",
        config={**run_cfg.to_dict(), "sizes": list(sizes), "avg_degree": avg_degree},
        per_seed=rows,
        aggregate=aggregate_rows(rows, ("epoch_seconds",)),
        extra={"fit_nodes": _fit_line(ns, ts), "fit_edges": _fit_line(es, ts)},
    )


# ---------------------------------------------------------------------------
# Convergence trend
# ---------------------------------------------------------------------------

def convergence_trend(grad_norms: Sequence[float]) -> dict[str, float]:
    """
    Least-squares fit of the running minimum of grad_norm^2 after T epochs
    against 1/sqrt(T).  A positive slope with a good fit reads as the
    expected O(1/sqrt(T)) decay.
    """
    g2 = np.asarray(grad_norms, dtype=np.float64) ** 2
    if g2.size < 2:
        raise InvalidArgumentError("a convergence trend needs at least two epochs")
    running = np.minimum.accumulate(g2)
    x = 1.0 / np.sqrt(np.arange(1, g2.size + 1))
    out = _fit_line(x.tolist(), running.tolist())
    out["points"] = int(g2.size)
    return out
