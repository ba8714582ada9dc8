"""Analytic gradients against central finite differences."""

import numpy as np
import pytest

from conftest import random_graph
from diffusion.config import Mode, ScheduleConfig
from diffusion.params import SimilarityWeights, init_params
from errors import NumericError
from graph.shells import build_hop_shells
from graph.store import apply_topology_delta, build_graph
from refinement.distance import prune_shells
from refinement.topology import knn_candidates, score_candidates
from training.backward import Gradients, backward, total_loss

STEP = 1e-5


def _instance(seed: int, mode: Mode):
    g = random_graph(seed, n=12, p=0.3, d=3, classes=3)
    cfg = ScheduleConfig(K=2, hidden_dim=3, mode=mode, knn_k=5)
    shells = build_hop_shells(g, cfg.K, cfg.shell_cap, cfg.seed)
    params = init_params(cfg.K, g.feature_dim, cfg.hidden_dim, g.class_count, seed)
    params.hop_logits = np.random.default_rng(seed).normal(size=cfg.K)
    # radius taken from unrelated parameters keeps every hinge away from its kink
    reference = init_params(cfg.K, g.feature_dim, cfg.hidden_dim, g.class_count, seed + 100)
    frag = prune_shells(g, shells, cfg, reference)
    _, shells = apply_topology_delta(g, [], shells, pruned=frag.pruned, radius=frag.radius)
    weights = SimilarityWeights(0.9, 0.8, 0.3)
    cands = score_candidates(g, knn_candidates(g, cfg.knn_k, 50), weights, cfg)
    nodes = g.labeled_set
    return g, cfg, shells, params, weights, cands, nodes


def _check_all_tensors(seed: int, mode: Mode):
    g, cfg, shells, params, weights, cands, nodes = _instance(seed, mode)
    use_dr = mode.uses_dr
    grads, breakdown, _ = backward(g, shells, params, cfg, nodes, candidates=cands, use_dr=use_dr)
    l1, l2, l3 = cfg.loss_weights
    assert breakdown.total == pytest.approx(
        breakdown.classification + l1 * breakdown.dr + l2 * breakdown.tr + l3 * breakdown.regularization
    )
    assert breakdown.total == pytest.approx(
        total_loss(g, shells, params, cfg, nodes, cands, use_dr=use_dr, weights=weights), abs=1e-12
    )

    def loss_at(p, w=weights):
        return total_loss(g, shells, p, cfg, nodes, cands, use_dr=use_dr, weights=w)

    for name, tensor in params.tensors():
        analytic = getattr(grads, name)
        numeric = np.zeros_like(tensor)
        for idx in np.ndindex(tensor.shape):
            hi, lo = params.copy(), params.copy()
            getattr(hi, name)[idx] += STEP
            getattr(lo, name)[idx] -= STEP
            numeric[idx] = (loss_at(hi) - loss_at(lo)) / (2 * STEP)
        np.testing.assert_allclose(analytic, numeric, rtol=1e-4, atol=1e-7, err_msg=name)

    w0 = weights.as_array()
    numeric = np.zeros(3)
    for i in range(3):
        hi, lo = w0.copy(), w0.copy()
        hi[i] += STEP
        lo[i] -= STEP
        numeric[i] = (loss_at(params, SimilarityWeights(*hi)) - loss_at(params, SimilarityWeights(*lo))) / (2 * STEP)
    np.testing.assert_allclose(grads.omega, numeric, rtol=1e-4, atol=1e-7, err_msg="omega")


@pytest.mark.parametrize("seed", range(10))
def test_full_mode_gradients(seed):
    _check_all_tensors(seed, Mode.GKHDDRA)


@pytest.mark.parametrize("mode", [Mode.BASELINE, Mode.GDRA, Mode.GKHDA])
def test_other_mode_gradients(mode):
    _check_all_tensors(21, mode)


def test_saturated_logits_give_vanishing_classifier_gradient():
    g = random_graph(3, n=10, p=0.3, d=3, classes=3)
    g = build_graph(g.edge_pairs(), g.features, {v: 0 for v in range(g.node_count)})
    cfg = ScheduleConfig(K=2, hidden_dim=3, mode=Mode.GKHDA)
    shells = build_hop_shells(g, 2)
    params = init_params(2, 3, 3, 3, seed=3)
    params.classifier_bias = np.array([60.0, 0.0, 0.0])
    grads, _, _ = backward(g, shells, params, cfg, g.labeled_set)
    assert np.linalg.norm(grads.classifier) < 1e-6
    assert np.linalg.norm(grads.classifier_bias) < 1e-6


def test_symmetric_hops_give_zero_hop_logit_gradient():
    n = 8
    edges = [(v, (v + 1) % n) for v in range(n)]
    features = np.tile([1.0, 2.0, 0.5], (n, 1))
    g = build_graph(edges, features, {v: v % 2 for v in range(n)})
    cfg = ScheduleConfig(K=2, hidden_dim=3, mode=Mode.GKHDA)
    params = init_params(2, 3, 3, 2, seed=5)
    params.hop_transforms[1] = params.hop_transforms[0]
    grads, _, fp = backward(g, build_hop_shells(g, 2), params, cfg, np.arange(n))
    np.testing.assert_allclose(fp.hops[0].normalized, fp.hops[1].normalized)
    np.testing.assert_allclose(grads.hop_logits, 0.0, atol=1e-12)
    assert np.abs(grads.classifier).sum() > 0


def test_clip_bounds_global_norm():
    rng = np.random.default_rng(0)
    grads = Gradients(
        hop_transforms=rng.normal(size=(2, 3, 3)) * 10,
        attention_vector=rng.normal(size=6),
        hop_logits=rng.normal(size=2),
        classifier=rng.normal(size=(3, 2)),
        classifier_bias=rng.normal(size=2),
        omega=rng.normal(size=3),
    )
    clipped, pre = grads.clip(1.0)
    assert pre == pytest.approx(grads.global_norm())
    assert clipped.global_norm() <= 1.0 + 1e-9
    small = grads.scaled(1e-3 / pre)
    same, _ = small.clip(1.0)
    assert same is small


def test_non_finite_gradient_names_parameter():
    grads = Gradients(
        hop_transforms=np.zeros((1, 1, 1)),
        attention_vector=np.zeros(2),
        hop_logits=np.array([np.inf]),
        classifier=np.zeros((1, 1)),
        classifier_bias=np.zeros(1),
        omega=np.zeros(3),
    )
    with pytest.raises(NumericError) as err:
        grads.check_finite()
    assert err.value.context["parameter"] == "hop_logits"
