import json

import pytest

from diffusion.config import Mode, ScheduleConfig
from errors import InvalidArgumentError, MalformedInputError

EXTERNAL_KEYS = {
    "tau0", "eta_decay", "lambda0", "rho", "lambda_min", "beta1", "beta2", "percentile_p",
    "tr_beta", "tr_tau", "tr_theta", "knn_k", "cap_R", "loss_weights", "lr0", "lr_mu", "clip",
    "weight_decay", "epochs", "patience", "K", "hidden_dim", "seed", "mode",
}


def test_defaults_follow_settings_table():
    cfg = ScheduleConfig()
    assert (cfg.tau0, cfg.eta_decay, cfg.layer_norm_eps) == (1.0, 0.1, 1e-5)
    assert (cfg.lambda0, cfg.rho, cfg.lambda_min) == (0.1, 0.05, 0.01)
    assert (cfg.percentile_p, cfg.tr_theta, cfg.knn_k, cfg.max_added_per_node_R) == (0.75, 0.6, 50, 50)
    assert cfg.loss_weights == (0.4, 0.4, 0.2)
    assert (cfg.lr0, cfg.clip_tau, cfg.weight_decay, cfg.epochs, cfg.patience) == (0.005, 1.0, 0.0005, 1000, 100)
    assert cfg.mode is Mode.GKHDDRA


def test_json_keys_and_round_trip(tmp_path):
    cfg = ScheduleConfig(K=2, max_added_per_node_R=7, clip_tau=0.5, mode="GDRA")
    data = cfg.to_dict()
    assert EXTERNAL_KEYS <= set(data)
    assert data["cap_R"] == 7 and data["clip"] == 0.5 and data["mode"] == "gdra"
    assert "max_added_per_node_R" not in data

    path = tmp_path / "cfg.json"
    cfg.save_json(path)
    assert ScheduleConfig.from_json(path) == cfg


def test_missing_keys_take_defaults():
    cfg = ScheduleConfig.from_dict({"cap_R": 3, "mode": "baseline"})
    assert cfg.max_added_per_node_R == 3
    assert cfg.mode is Mode.BASELINE
    assert cfg.tau0 == 1.0


def test_unknown_and_internal_keys_rejected():
    with pytest.raises(MalformedInputError):
        ScheduleConfig.from_dict({"learning_rate": 0.1})
    with pytest.raises(MalformedInputError):
        ScheduleConfig.from_dict({"max_added_per_node_R": 3})


def test_invalid_json(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(MalformedInputError):
        ScheduleConfig.from_json(path)
    path.write_text(json.dumps([1, 2]), encoding="utf-8")
    with pytest.raises(MalformedInputError):
        ScheduleConfig.from_json(path)
    path.write_bytes(b"{\"K\": \xff}")
    with pytest.raises(MalformedInputError):
        ScheduleConfig.from_json(path)


@pytest.mark.parametrize(
    "changes",
    [
        {"tau0": 0.0},
        {"eta_decay": -0.1},
        {"layer_norm_eps": 0.0},
        {"percentile_p": 1.0},
        {"tr_theta": 0.0},
        {"loss_weights": (0.5, 0.5, 0.5)},
        {"loss_weights": (1.2, -0.1, -0.1)},
        {"knn_backend": "faiss"},
        {"mode": "everything"},
        {"batch_size": "128"},
    ],
)
def test_invalid_values(changes):
    with pytest.raises(InvalidArgumentError):
        ScheduleConfig(**changes)


def test_mode_flags():
    assert not Mode.BASELINE.uses_attention and not Mode.BASELINE.uses_dr
    assert Mode.GDRA.uses_dr and not Mode.GDRA.uses_attention and not Mode.GDRA.uses_tr
    assert Mode.GKHDA.uses_attention and not Mode.GKHDA.uses_dr
    assert Mode.GKHDDRA.uses_attention and Mode.GKHDDRA.uses_dr and Mode.GKHDDRA.uses_tr
    assert Mode.parse("GKHDDRA") is Mode.GKHDDRA
