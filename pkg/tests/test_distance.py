import math

import numpy as np
import pytest

import oracles
from bench.sbm import SbmSpec, gen_sbm
from diffusion.config import ScheduleConfig
from diffusion.params import init_params
from errors import InvalidArgumentError, ShapeError
from graph.shells import build_hop_shells
from graph.store import apply_topology_delta, build_graph
from refinement.distance import (
    distance_records,
    lambda_schedule,
    percentile_threshold,
    projected_distances,
    prune_shells,
    retained_count,
    semantic_distance,
    shell_distances,
)
from training.losses import dr_loss


def _star(leaf_features, center=(0.0, 0.0)):
    features = np.vstack([np.asarray(center, dtype=np.float64), np.asarray(leaf_features, dtype=np.float64)])
    edges = [(0, u) for u in range(1, features.shape[0])]
    return build_graph(edges, features, {0: 0})


# ---------------------------------------------------------------------------
# Closed forms
# ---------------------------------------------------------------------------

def test_lambda_schedule_examples():
    cfg = ScheduleConfig()
    assert lambda_schedule(2, cfg) == pytest.approx(0.1004837, abs=1e-6)
    flat = ScheduleConfig(rho=0.0)
    assert lambda_schedule(1, flat) == lambda_schedule(7, flat) == pytest.approx(0.11)
    values = [lambda_schedule(k, cfg) for k in (1, 10, 100)]
    assert all(a > b > cfg.lambda_min for a, b in zip(values, values[1:]))
    # the decaying term vanishes against the floor for large k
    assert lambda_schedule(1000, cfg) >= cfg.lambda_min
    with pytest.raises(InvalidArgumentError):
        lambda_schedule(0, cfg)


def test_semantic_distance_examples():
    cfg = ScheduleConfig()
    x = np.array([0.3, -1.2, 2.0])
    rec = semantic_distance(x, x, 1, cfg)
    assert rec.euclid_sq == 0.0
    assert rec.penalty == pytest.approx(1.0)
    assert rec.total == pytest.approx(0.105123, abs=1e-6)

    pure = ScheduleConfig(beta1=0.0, beta2=0.0)
    rec = semantic_distance(np.array([1.0, 2.0]), np.array([4.0, 6.0]), 3, pure)
    assert rec.total == 25.0

    rec = semantic_distance(np.array([1.0, 0.0]), np.array([0.0, 1.0]), 2, cfg)
    assert rec.euclid_sq == pytest.approx(2.0)
    assert rec.penalty == pytest.approx(5.0)
    assert rec.total == rec.euclid_sq + rec.lambda_k * rec.penalty


def test_semantic_distance_zero_vector_and_shape():
    cfg = ScheduleConfig()
    rec = semantic_distance(np.zeros(3), np.ones(3), 1, cfg)
    assert rec.penalty == pytest.approx(cfg.beta1 + cfg.beta2)
    with pytest.raises(ShapeError):
        semantic_distance(np.zeros(3), np.ones(2), 1, cfg)


def test_scaling_features_scales_euclid_only():
    cfg = ScheduleConfig()
    rng = np.random.default_rng(5)
    x, y = rng.normal(size=4), rng.normal(size=4)
    base = semantic_distance(x, y, 2, cfg)
    scaled = semantic_distance(3.0 * x, 3.0 * y, 2, cfg)
    assert scaled.euclid_sq == pytest.approx(9.0 * base.euclid_sq, rel=1e-12)
    assert scaled.penalty == pytest.approx(base.penalty, rel=1e-12)


# ---------------------------------------------------------------------------
# Percentile
# ---------------------------------------------------------------------------

def test_percentile_examples():
    assert percentile_threshold([4, 1, 3, 2], 0.75) == 3
    values = np.random.default_rng(0).random(40)
    assert percentile_threshold(values, 0.999) == values.max()
    assert percentile_threshold([5, 5, 5], 0.5) == 5
    with pytest.raises(InvalidArgumentError):
        percentile_threshold([], 0.5)
    with pytest.raises(InvalidArgumentError):
        percentile_threshold([1.0], 1.0)


def test_retention_counts_on_random_shells():
    rng = np.random.default_rng(2024)
    for p in (0.25, 0.5, 0.75):
        for _ in range(1000):
            n = int(rng.integers(1, 65))
            distances = rng.random(n)
            kept = int(np.sum(distances <= percentile_threshold(distances, p)))
            assert kept == math.ceil(p * n)
            assert kept >= 1
    assert retained_count(20, 0.15) == 3


# ---------------------------------------------------------------------------
# Pruning
# ---------------------------------------------------------------------------

def test_prune_drops_only_the_farthest_of_four():
    g = _star([[1.0, 0.0], [2.0, 0.0], [3.0, 0.0], [4.0, 0.0]])
    shells = build_hop_shells(g, K=1)
    frag = prune_shells(g, shells, ScheduleConfig(K=1, percentile_p=0.75))
    assert frag.pruned == [(0, 1, 4)]
    assert frag.thresholds[0][0] == pytest.approx(frag.distances[0] - 7.0)


def test_singleton_shells_survive_and_high_p_prunes_nothing(make_graph):
    g = make_graph(1, n=30, p=0.15)
    shells = build_hop_shells(g, K=2)
    frag = prune_shells(g, shells, ScheduleConfig(K=2, percentile_p=0.999))
    assert frag.pruned == []

    star = _star([[1.0, 1.0], [2.0, 0.5]])
    frag = prune_shells(star, build_hop_shells(star, K=1), ScheduleConfig(K=1, percentile_p=0.25))
    # each leaf sees only the center
    assert all(v == 0 for v, _, _ in frag.pruned)


@pytest.mark.parametrize("p", [0.25, 0.5, 0.75])
def test_star_retention_is_exact(p):
    rng = np.random.default_rng(int(p * 100))
    for leaves in (1, 2, 5, 17, 32):
        g = _star(rng.normal(size=(leaves, 3)), center=rng.normal(size=3))
        shells = build_hop_shells(g, K=1, cap=64)
        frag = prune_shells(g, shells, ScheduleConfig(K=1, percentile_p=p))
        _, after = apply_topology_delta(g, [], shells, pruned=frag.pruned)
        assert after.active_members(0, 1).shape[0] == math.ceil(p * leaves)


def test_retained_sets_nest_in_p(make_graph):
    g = make_graph(9, n=40, p=0.2)
    shells = build_hop_shells(g, K=2)
    retained = {}
    for p in (0.25, 0.5, 0.75):
        frag = prune_shells(g, shells, ScheduleConfig(K=2, percentile_p=p))
        _, after = apply_topology_delta(g, [], shells, pruned=frag.pruned)
        retained[p] = {(v, k, int(u)) for v in range(g.node_count) for k in (1, 2) for u in after.active_members(v, k)}
    assert retained[0.25] <= retained[0.5] <= retained[0.75]


def test_second_pass_is_idempotent(make_graph):
    g = make_graph(4, n=40, p=0.2)
    cfg = ScheduleConfig(K=2)
    shells = build_hop_shells(g, K=2)
    first = prune_shells(g, shells, cfg)
    _, committed = apply_topology_delta(g, [], shells, pruned=first.pruned)
    assert committed.effective_degree() <= shells.effective_degree()
    assert prune_shells(g, committed, cfg).pruned == []


def test_distances_match_scalar_oracle(make_graph):
    cfg = ScheduleConfig(K=3, distance_batch_size=7)
    for seed in range(20):
        g = make_graph(100 + seed, n=20, p=0.2, d=3)
        shells = build_hop_shells(g, K=3)
        X = g.features.tolist()
        for k in (1, 2, 3):
            totals = shell_distances(g, shells, k, cfg)
            centers = shells.centers(k)
            for pos, (v, u) in enumerate(zip(centers, shells.members[k - 1])):
                assert totals[pos] == pytest.approx(oracles.semantic_distance(X[v], X[u], k, cfg)[2], abs=1e-8)


def test_distance_records_cover_active_entries(path4):
    cfg = ScheduleConfig(K=2)
    shells = build_hop_shells(path4, K=2)
    records = distance_records(path4, shells, 1, 1, cfg)
    assert [r.u for r in records] == [0, 2]
    assert all(r.total == r.euclid_sq + r.lambda_k * r.penalty for r in records)


def test_radius_makes_fresh_hinge_zero(make_graph):
    g = make_graph(6, n=30, p=0.2)
    cfg = ScheduleConfig(K=2, hidden_dim=4)
    shells = build_hop_shells(g, K=2)
    params = init_params(2, g.feature_dim, 4, g.class_count, seed=6)
    frag = prune_shells(g, shells, cfg, params)
    _, committed = apply_topology_delta(g, [], shells, pruned=frag.pruned, radius=frag.radius)

    for k in (1, 2):
        c, u = committed.active_entries(k)
        dist, _, _ = projected_distances(g, c, u, params.hop_transforms[k - 1], k, cfg)
        expected = np.full(g.node_count, np.nan)
        np.fmax.at(expected, c, dist)
        np.testing.assert_allclose(committed.radius[k - 1], expected, equal_nan=True)

    loss, grad = dr_loss(g, committed, params, cfg)
    assert loss == 0.0
    assert not grad.any()
    drifted = init_params(2, g.feature_dim, 4, g.class_count, seed=7)
    assert dr_loss(g, committed, drifted, cfg)[0] > 0


def test_effective_degree_ratio_on_standard_sbm():
    g, _ = gen_sbm(SbmSpec())
    cfg = ScheduleConfig(percentile_p=0.75)
    shells = build_hop_shells(g, cfg.K, cfg.shell_cap, cfg.seed)
    frag = prune_shells(g, shells, cfg)
    _, after = apply_topology_delta(g, [], shells, pruned=frag.pruned)
    ratio = after.effective_degree() / shells.original_degree()
    assert 0.70 <= ratio <= 0.80
