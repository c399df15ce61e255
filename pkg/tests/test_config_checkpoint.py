from pathlib import Path

import numpy as np
import pytest

from aiol.checkpoint import FORMAT_VERSION, load_checkpoint, save_checkpoint
from aiol.config import ExperimentConfig, config_hash, from_mapping, load_config
from aiol.errors import ConfigError
from aiol.nn import EmaState, init_params


def test_defaults_use_desk_schedule():
    cfg = ExperimentConfig()
    tc = cfg.train_config(3)
    assert (tc.epochs, tc.iterations_per_epoch, tc.seed) == (60, 100, 3)
    assert from_mapping({"train": {"schedule": "full"}}).train_config(0).epochs == 256


def test_sections_map_onto_components(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text("""
[data]
n_per_class = 10
m_in = 300
[train]
epochs = 4
seeds = [1, 2]
thresholds = [0.9, 0.3]
[augment]
magnitude = 0.4
mixup_mode = "vanilla"
[eval]
unseen_families = ["blobs"]
out_dir = "results"
""")
    cfg = load_config(p)
    assert cfg.data.n_per_class == 10 and cfg.data.m_in == 300
    assert cfg.seeds == (1, 2)
    tc = cfg.train_config(1)
    assert tc.epochs == 4 and tc.magnitude == 0.4 and tc.mixup_mode == "vanilla"
    assert tc.thresholds == (0.9, 0.3)
    assert cfg.eval.unseen_families == ("blobs",)
    assert cfg.eval.out_dir == tmp_path / "results"


@pytest.mark.parametrize("doc", [
    {"model": {}},
    {"data": {"n_per_klass": 3}},
    {"train": {"lr": 0.1, "learning_rate": 0.1}},
    {"augment": {"epochs": 3}},
    {"eval": {"unseen_families": ["spiral"]}},
    {"train": {"seeds": []}},
    {"train": {"schedule": "huge"}},
    {"train": {"epochs": 0}},
    {"data": {"K": 3}},
    {"data": {"data_dir": "/nonexistent/dir"}},
])
def test_bad_configs_are_errors(doc):
    with pytest.raises(ConfigError):
        from_mapping(doc)


def test_malformed_toml(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text("[train\nepochs = 1\n")
    with pytest.raises(ConfigError):
        load_config(p)


def test_hash_tracks_model_settings_only():
    base = ExperimentConfig()
    assert config_hash(base) == config_hash(base.with_seeds([4, 5]))
    assert config_hash(base) != config_hash(from_mapping({"augment": {"magnitude": 0.3}}))
    assert config_hash(base) != config_hash(from_mapping({"data": {"m_out": 100}}))
    assert len(config_hash(base)) == 16


def test_checkpoint_round_trip(tmp_path):
    p = init_params((2, 5, 2), 1)
    ema = EmaState(init_params((2, 5, 2), 2), 0.99)
    path = save_checkpoint(tmp_path / "m.npz", p, ema, "abc", {"k": 1}, 7)
    ck = load_checkpoint(path, "abc")
    assert ck.seed == 7 and ck.config == {"k": 1} and ck.ema.decay == 0.99
    for a, b in zip(ck.params.arrays(), p.arrays()):
        assert np.array_equal(a, b)
    for a, b in zip(ck.detector.arrays(), ema.shadow.arrays()):
        assert np.array_equal(a, b)
    assert FORMAT_VERSION == 1


def test_checkpoint_is_byte_deterministic(tmp_path):
    p = init_params((2, 4, 2), 0)
    a = save_checkpoint(tmp_path / "a.npz", p, EmaState(p), "h", {}, 0)
    b = save_checkpoint(tmp_path / "b.npz", p, EmaState(p), "h", {}, 0)
    assert a.read_bytes() == b.read_bytes()


def test_checkpoint_hash_mismatch_refused(tmp_path):
    p = init_params((2, 4, 2), 0)
    path = save_checkpoint(tmp_path / "m.npz", p, EmaState(p), "aaaa", {}, 0)
    with pytest.raises(ConfigError, match="refusing"):
        load_checkpoint(path, "bbbb")


def test_shipped_example_config_loads():
    cfg = load_config(Path(__file__).resolve().parents[1] / "configs" / "example.toml")
    assert cfg.seeds == (0, 1, 2)
    assert cfg.train_config(0).epochs == 60
    assert cfg.eval.unseen_families == ("uniform-box", "blobs")
