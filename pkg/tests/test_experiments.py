import math

import numpy as np
import pytest

from bench.experiments import (
    ablation_experiment,
    convergence_trend,
    degree_and_timing_report,
    flip_edges,
    noise_attenuation_experiment,
    sbm_for_degree,
    scaling_sweep,
    stability_experiment,
)
from bench.linkpred import link_prediction_eval, random_embedding_auc
from bench.sbm import SbmSpec, gen_sbm, sbm_schedule
from conftest import random_graph
from diffusion.config import Mode, ScheduleConfig
from errors import InvalidArgumentError
from training.trainer import fit


def _pairs(g):
    return {(int(v), int(u)) for v, u in g.edge_pairs()}


def test_flip_edges_toggles_exactly_delta_pairs():
    g = random_graph(0, n=20, p=0.3)
    assert flip_edges(g, 0, np.random.default_rng(0)) is g
    flipped = flip_edges(g, 7, np.random.default_rng(1))
    assert len(_pairs(g) ^ _pairs(flipped)) == 7
    np.testing.assert_array_equal(flipped.features, g.features)
    with pytest.raises(InvalidArgumentError):
        flip_edges(g, 20 * 19 // 2 + 1, np.random.default_rng(0))


def test_stability_rows_and_zero_delta():
    g = random_graph(1, n=30, p=0.2)
    cfg = ScheduleConfig(K=2, hidden_dim=4)
    result = stability_experiment(g, cfg, deltas=[0, 1, 2], seeds=[0, 1])
    assert len(result.per_seed) == 6
    zero = [r for r in result.per_seed if r["delta"] == 0]
    assert all(r["diff_norm"] == 0.0 and r["ratio"] == 0.0 for r in zero)
    assert result.extra["ratio_by_delta"][0] == 0.0
    assert result.extra["max_ratio"] >= 0


def test_convergence_trend_recovers_inverse_sqrt_decay():
    t = np.arange(1, 51)
    norms = np.sqrt(0.5 + 2.0 / np.sqrt(t))
    trend = convergence_trend(norms)
    assert trend["slope"] == pytest.approx(2.0)
    assert trend["intercept"] == pytest.approx(0.5)
    assert trend["r2"] == pytest.approx(1.0)
    assert trend["points"] == 50
    with pytest.raises(InvalidArgumentError):
        convergence_trend([1.0])


def test_degree_report_against_reference_run():
    g = random_graph(2, n=30, p=0.25)
    cfg = ScheduleConfig(K=2, hidden_dim=4, epochs=3)
    pruned = fit(g, cfg, mode=Mode.GDRA)
    plain = fit(g, cfg, mode=Mode.BASELINE)
    report = degree_and_timing_report(pruned, reference=plain)
    assert [r["epoch"] for r in report.per_seed] == [1, 2, 3]
    assert 0 < report.extra["first_ratio"] < 1
    assert report.extra["epochs_to_stop"] == 3
    assert report.extra["speedup"] > 0
    assert "speedup" not in degree_and_timing_report(pruned).extra


def test_sbm_for_degree_hits_target_degree():
    spec = sbm_for_degree(800, 8.0, seed=3)
    g, noisy = gen_sbm(spec)
    assert g.node_count == 800 and not noisy
    assert 2 * g.edge_count / g.node_count == pytest.approx(8.0, rel=0.1)


def test_ablation_needs_two_seeds():
    with pytest.raises(InvalidArgumentError):
        ablation_experiment(SbmSpec(), ScheduleConfig(), seeds=[0])


# ---------------------------------------------------------------------------
# End-to-end behaviour on the standard block model
# ---------------------------------------------------------------------------

@pytest.mark.slow
def test_pruning_prefers_noisy_edges():
    result = noise_attenuation_experiment(SbmSpec(), ScheduleConfig(), seeds=range(10))
    assert result.extra["rate_ratio"] >= 2.0


@pytest.mark.slow
def test_embedding_shift_is_bounded_per_flip():
    g, _ = gen_sbm(SbmSpec(nodes_per_block=250))
    result = stability_experiment(g, ScheduleConfig(), deltas=[1, 2, 4, 8], seeds=range(10))
    by_delta = result.extra["ratio_by_delta"]
    positive = [by_delta[d] for d in (1, 2, 4, 8)]
    assert min(positive) > 0
    assert max(positive) / min(positive) <= 3.0
    assert result.extra["max_doubling"] <= 1.5


@pytest.mark.slow
def test_full_mode_beats_baseline_with_lower_variance():
    result = ablation_experiment(SbmSpec(), sbm_schedule(), seeds=range(10), modes=[Mode.BASELINE, Mode.GKHDDRA])
    base = result.aggregate["baseline"]["test_acc"]
    full = result.aggregate["gkhddra"]["test_acc"]
    assert base["n"] == full["n"] == 10
    assert full["mean"] >= base["mean"]
    assert full["var"] <= base["var"]
    assert result.extra["relative_to_baseline"]["gkhddra"]["acc_gain"] >= 0


@pytest.mark.slow
def test_epoch_time_grows_linearly_with_nodes():
    result = scaling_sweep([1000, 2000, 4000, 8000], 8.0, ScheduleConfig(), seeds=[0], epochs=3)
    assert result.extra["fit_nodes"]["r2"] >= 0.95
    assert result.extra["fit_nodes"]["slope"] > 0


@pytest.mark.slow
def test_gradient_norm_follows_inverse_sqrt_trend():
    g, _ = gen_sbm(SbmSpec())
    run = fit(g, sbm_schedule(mode=Mode.GKHDDRA))
    trend = convergence_trend([row["grad_norm"] for row in run.history])
    assert trend["slope"] > 0
    assert trend["r2"] >= 0.5


@pytest.mark.slow
def test_trained_embeddings_beat_baseline_link_scores():
    g, _ = gen_sbm(SbmSpec())
    cfg = sbm_schedule()
    seeds = range(10)
    full = link_prediction_eval(g, cfg, 0.1, seeds=seeds, mode=Mode.GKHDDRA)
    base = link_prediction_eval(g, cfg, 0.1, seeds=seeds, mode=Mode.BASELINE)
    assert full.aggregate["auc"]["mean"] >= base.aggregate["auc"]["mean"]
    assert math.isfinite(full.aggregate["ap"]["mean"])
    chance = np.mean([random_embedding_auc(g, 0.1, seed) for seed in seeds])
    assert abs(chance - 0.5) <= 0.05
