import math

import numpy as np
import pytest

import oracles
from diffusion.config import Mode, ScheduleConfig
from diffusion.engine import (
    attention_weights,
    combine_hops,
    forward,
    hop_aggregate,
    layer_norm,
    temperature,
)
from diffusion.params import init_params
from errors import NumericError, ShapeError
from graph.shells import build_hop_shells
from graph.store import build_graph


def _setup(g, cfg, seed=0, classes=None):
    shells = build_hop_shells(g, cfg.K, cfg.shell_cap, cfg.seed)
    params = init_params(cfg.K, g.feature_dim, cfg.hidden_dim, classes or max(1, g.class_count), seed)
    return shells, params


# ---------------------------------------------------------------------------
# temperature / layer_norm / combine_hops
# ---------------------------------------------------------------------------

def test_temperature_examples():
    cfg = ScheduleConfig()
    assert temperature(3, cfg) == pytest.approx(0.740818, abs=1e-6)
    assert temperature(1, cfg) == pytest.approx(0.904837, abs=1e-6)
    flat = ScheduleConfig(eta_decay=0.0, tau0=2.0)
    assert [temperature(k, flat) for k in (1, 2, 3)] == [2.0, 2.0, 2.0]


def test_temperature_strictly_decreasing():
    cfg = ScheduleConfig(K=6, eta_decay=0.3)
    taus = [temperature(k, cfg) for k in range(1, 7)]
    assert all(a > b for a, b in zip(taus, taus[1:]))


def test_layer_norm_examples():
    np.testing.assert_array_equal(layer_norm(np.full(5, 3.7), 1e-5), np.zeros(5))
    np.testing.assert_allclose(layer_norm(np.array([1.0, -1.0]), 1e-5), [1.0, -1.0], atol=1e-4)
    h = np.random.default_rng(0).normal(size=16)
    np.testing.assert_allclose(layer_norm(h + 12.5, 1e-5), layer_norm(h, 1e-5), atol=1e-6)
    out = layer_norm(h * 50, 1e-5)
    assert abs(out.mean()) < 1e-6
    assert abs(out.std() - 1) < 1e-3


def test_combine_hops_examples():
    params = init_params(3, 2, 4, 2)
    hops = [np.full(4, 1.0), np.full(4, 2.0), np.full(4, 6.0)]
    np.testing.assert_allclose(combine_hops(hops, params), np.full(4, 3.0))

    params2 = init_params(2, 2, 4, 2)
    params2.hop_logits = np.array([10.0, -10.0])
    gamma = params2.hop_weights()
    assert gamma[0] == pytest.approx(1 / (1 + math.exp(-20)), abs=1e-15)
    np.testing.assert_allclose(combine_hops([np.ones(4), -np.ones(4)], params2), np.ones(4), atol=1e-8)

    same = np.arange(4.0)
    params.hop_logits = np.array([0.3, -2.0, 1.1])
    np.testing.assert_allclose(combine_hops([same] * 3, params), same)
    with pytest.raises(ShapeError):
        combine_hops([same, same], params)


def test_hop_weights_on_simplex():
    params = init_params(4, 2, 3, 2)
    params.hop_logits = np.random.default_rng(1).normal(scale=5, size=4)
    gamma = params.hop_weights()
    assert abs(gamma.sum() - 1) <= 1e-9
    assert np.all(gamma > 0)


# ---------------------------------------------------------------------------
# attention
# ---------------------------------------------------------------------------

def test_identical_neighbors_get_equal_attention():
    features = np.array([[1.0, 0.0], [0.5, 0.5], [0.5, 0.5]])
    g = build_graph([(0, 1), (0, 2)], features, {0: 0, 1: 1})
    cfg = ScheduleConfig(K=1, hidden_dim=3)
    shells, params = _setup(g, cfg)
    alpha = attention_weights(g, shells, params, 0, 1, cfg)
    assert alpha == pytest.approx({1: 0.5, 2: 0.5})


def test_single_neighbor_and_empty_shell(path4):
    cfg = ScheduleConfig(K=3, hidden_dim=3)
    shells, params = _setup(path4, cfg)
    assert attention_weights(path4, shells, params, 0, 1, cfg) == {1: 1.0}
    assert attention_weights(path4, shells, params, 3, 3, cfg) == {0: 1.0}
    assert attention_weights(path4, shells, params, 1, 3, cfg) == {}
    np.testing.assert_array_equal(hop_aggregate(path4, shells, params, 1, 3, cfg), np.zeros(3))
    np.testing.assert_allclose(
        hop_aggregate(path4, shells, params, 0, 1, cfg),
        path4.features[1] @ params.hop_transforms[0],
    )


def test_attention_matches_scalar_oracle():
    rng = np.random.default_rng(7)
    features = rng.normal(size=(4, 3))
    g = build_graph([(0, 1), (0, 2), (0, 3)], features, {0: 0, 1: 1})
    cfg = ScheduleConfig(K=1, hidden_dim=4)
    shells, params = _setup(g, cfg, seed=7)
    got = attention_weights(g, shells, params, 0, 1, cfg)
    want = oracles.attention(
        features.tolist(), [1, 2, 3], 0, params.hop_transforms[0].tolist(),
        params.attention_vector.tolist(), 1, cfg.tau0, cfg.eta_decay, cfg.leaky_slope,
    )
    assert set(got) == set(want)
    for u in want:
        assert got[u] == pytest.approx(want[u], abs=1e-9)
    assert sum(got.values()) == pytest.approx(1.0, abs=1e-6)
    assert all(w > 0 for w in got.values())


def test_shared_feature_aggregate_is_that_point():
    features = np.array([[1.0, 2.0], [0.3, -0.7], [0.3, -0.7], [0.3, -0.7]])
    g = build_graph([(0, 1), (0, 2), (0, 3)], features, {0: 0, 1: 1})
    cfg = ScheduleConfig(K=1, hidden_dim=5)
    shells, params = _setup(g, cfg, seed=2)
    np.testing.assert_allclose(
        hop_aggregate(g, shells, params, 0, 1, cfg), features[1] @ params.hop_transforms[0], atol=1e-12
    )


def test_lower_temperature_sharpens_attention():
    rng = np.random.default_rng(3)
    features = rng.normal(size=(6, 3))
    g = build_graph([(0, u) for u in range(1, 6)], features, {0: 0, 1: 1})
    hot = ScheduleConfig(K=1, hidden_dim=4, tau0=2.0)
    cold = ScheduleConfig(K=1, hidden_dim=4, tau0=0.5)
    shells, params = _setup(g, hot, seed=3)
    peak_hot = max(attention_weights(g, shells, params, 0, 1, hot).values())
    peak_cold = max(attention_weights(g, shells, params, 0, 1, cold).values())
    assert peak_cold > peak_hot


# ---------------------------------------------------------------------------
# forward
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("seed", range(20))
def test_forward_matches_scalar_oracle(make_graph, seed):
    g = make_graph(seed, n=10 + seed, p=0.2, d=3)
    cfg = ScheduleConfig(K=3, hidden_dim=4, shell_cap=1000, mode=Mode.GKHDDRA)
    shells, params = _setup(g, cfg, seed=seed)
    params.hop_logits = np.random.default_rng(seed).normal(size=3)
    fp = forward(g, shells, params, cfg)
    oracle_shells = oracles.bfs_shells(g.node_count, g.edge_pairs(), 3)
    Z, logits = oracles.forward(g.features.tolist(), oracle_shells, params, cfg)
    np.testing.assert_allclose(fp.embeddings, Z, atol=1e-8)
    np.testing.assert_allclose(fp.logits, logits, atol=1e-8)

    for hop in fp.hops:
        sums = np.bincount(hop.centers, weights=hop.alpha, minlength=g.node_count)
        nonempty = np.bincount(hop.centers, minlength=g.node_count) > 0
        np.testing.assert_allclose(sums[nonempty], 1.0, atol=1e-6)


def test_uniform_forward_matches_mean_oracle(make_graph):
    g = make_graph(4, n=14, p=0.2)
    cfg = ScheduleConfig(K=2, hidden_dim=3, shell_cap=1000, mode=Mode.BASELINE)
    shells, params = _setup(g, cfg)
    fp = forward(g, shells, params, cfg)
    assert fp.uniform
    oracle_shells = oracles.bfs_shells(g.node_count, g.edge_pairs(), 2)
    Z, _ = oracles.forward(g.features.tolist(), oracle_shells, params, cfg, uniform=True)
    np.testing.assert_allclose(fp.embeddings, Z, atol=1e-8)


def test_edgeless_graph_gives_bias_logits():
    g = build_graph([], np.random.default_rng(0).normal(size=(5, 3)), {0: 0, 1: 2})
    cfg = ScheduleConfig(K=2, hidden_dim=4)
    shells, params = _setup(g, cfg)
    params.classifier_bias = np.array([0.1, -0.2, 0.3])
    fp = forward(g, shells, params, cfg)
    np.testing.assert_array_equal(fp.embeddings, np.zeros((5, 4)))
    np.testing.assert_array_equal(fp.logits, np.tile(params.classifier_bias, (5, 1)))


def test_forward_is_permutation_equivariant(make_graph):
    g = make_graph(8, n=16, p=0.25)
    cfg = ScheduleConfig(K=2, hidden_dim=4, shell_cap=1000)
    shells, params = _setup(g, cfg)
    Z = forward(g, shells, params, cfg).embeddings

    perm = np.random.default_rng(8).permutation(g.node_count)
    inverse = np.argsort(perm)
    edges = inverse[g.edge_pairs()]
    labels = {int(inverse[v]): int(c) for v, c in enumerate(g.labels) if c >= 0}
    gp = build_graph(edges, g.features[perm], labels)
    Zp = forward(gp, build_hop_shells(gp, 2, 1000), params, cfg).embeddings
    np.testing.assert_allclose(Zp, Z[perm], atol=1e-9)


def test_forward_reports_non_finite_features(path4):
    cfg = ScheduleConfig(K=1, hidden_dim=3)
    shells, params = _setup(path4, cfg)
    bad = build_graph(path4.edge_pairs(), np.where(np.eye(4, 2) > 0, np.inf, path4.features), {0: 0, 1: 1})
    with pytest.raises(NumericError) as err:
        forward(bad, shells, params, cfg)
    assert "hop" in err.value.context


def test_forward_shape_checks(path4):
    cfg = ScheduleConfig(K=2, hidden_dim=3)
    shells, _ = _setup(path4, cfg)
    with pytest.raises(ShapeError):
        forward(path4, shells, init_params(3, 2, 3, 2), cfg)
    with pytest.raises(ShapeError):
        forward(path4, shells, init_params(2, 5, 3, 2), cfg)


def test_temperature_constant_is_exp():
    cfg = ScheduleConfig(tau0=1.5, eta_decay=0.25, K=4)
    assert temperature(4, cfg) == pytest.approx(1.5 * math.exp(-1.0))
