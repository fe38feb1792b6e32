"""Run-configuration document: defaults, builders, strict (de)serialization."""

import json

import pytest

from sspvideo.config import RunConfig, load_config
from sspvideo.errors import ConfigError


class TestDefaults:
    def test_defaults_validate(self):
        RunConfig().validate()

    def test_defaults_are_the_reference_run(self):
        cfg = RunConfig()
        assert cfg.n_classes == 6
        assert cfg.samples_per_class == 32
        assert (cfg.frames, cfg.channels, cfg.height, cfg.width) == (8, 1, 16, 16)
        assert (cfg.d_model, cfg.d_state, cfg.n_layers) == (32, 8, 4)
        assert (cfg.d_ifg, cfg.d_ifs, cfg.n_ifs) == (16, 8, 3)
        assert cfg.strategy == "last_forward"
        assert cfg.policy == "full"
        assert (cfg.epochs, cfg.batch_size) == (50, 8)
        assert cfg.peak_lr == pytest.approx(3e-3)
        assert cfg.warmup_epochs == 5
        assert cfg.weight_decay == pytest.approx(0.05)

    def test_all_modules_and_gates_on_by_default(self):
        cfg = RunConfig()
        assert cfg.use_ifg and cfg.use_ifs
        assert cfg.use_entropy_gate and cfg.use_variance_gate


class TestBuilders:
    def test_synth_spec_carries_data_fields(self):
        cfg = RunConfig(n_classes=3, samples_per_class=7, noise_sigma=0.02,
                        seed=11, shuffle_frames=True)
        spec = cfg.synth_spec()
        assert spec.n_classes == 3
        assert spec.samples_per_class == 7
        assert spec.noise_sigma == pytest.approx(0.02)
        assert spec.seed == 11
        assert spec.shuffle_frames is True

    def test_model_config_carries_shape_fields(self):
        cfg = RunConfig(d_model=16, d_state=4, n_layers=2, n_ifs=1,
                        d_ifg=8, d_ifs=4, strategy="middle", use_ifs=True)
        mc = cfg.model_config()
        assert (mc.d_model, mc.d_state, mc.n_layers, mc.n_ifs) == (16, 4, 2, 1)
        assert mc.strategy == "middle"
        assert mc.n_classes == cfg.n_classes

    def test_train_settings_carries_optimizer_fields(self):
        cfg = RunConfig(epochs=9, batch_size=2, peak_lr=1e-4, warmup_epochs=1,
                        weight_decay=0.2, policy="head_only", seed=5)
        ts = cfg.train_settings()
        assert (ts.epochs, ts.batch_size) == (9, 2)
        assert ts.peak_lr == pytest.approx(1e-4)
        assert ts.policy == "head_only"
        assert ts.shuffle_seed == 5

    def test_validate_rejects_indivisible_patch(self):
        with pytest.raises(ConfigError):
            RunConfig(height=15).validate()

    def test_validate_rejects_bad_policy(self):
        with pytest.raises(ConfigError, match="policy"):
            RunConfig(policy="frozen_everything").validate()

    def test_validate_rejects_bad_strategy(self):
        with pytest.raises(ConfigError):
            RunConfig(strategy="every_other").validate()

    def test_validate_rejects_bad_data_spec(self):
        with pytest.raises(ConfigError):
            RunConfig(noise_sigma=-1.0).validate()


class TestSerialization:
    def test_dict_roundtrip(self):
        cfg = RunConfig(seed=3, policy="ssp_peft", n_ifs=2, epochs=7)
        again = RunConfig.from_dict(cfg.to_dict())
        assert again == cfg

    def test_unknown_key_named_in_error(self):
        with pytest.raises(ConfigError, match="n_clases"):
            RunConfig.from_dict({"n_clases": 6})

    def test_non_dict_rejected(self):
        with pytest.raises(ConfigError, match="object"):
            RunConfig.from_dict([1, 2, 3])

    def test_partial_dict_fills_defaults(self):
        cfg = RunConfig.from_dict({"seed": 9})
        assert cfg.seed == 9
        assert cfg.epochs == RunConfig().epochs

    def test_from_dict_validates(self):
        with pytest.raises(ConfigError):
            RunConfig.from_dict({"height": 15})


class TestFiles:
    def test_save_load_roundtrip(self, tmp_path):
        cfg = RunConfig(seed=4, strategy="bidirection", out="runs/x")
        path = tmp_path / "config.json"
        cfg.save(path)
        assert load_config(path) == cfg

    def test_empty_object_is_reference_run(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text("{}\n")
        assert load_config(path) == RunConfig()

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "nope.json")

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError, match="JSON"):
            load_config(path)

    def test_saved_file_is_plain_json(self, tmp_path):
        path = tmp_path / "config.json"
        RunConfig().save(path)
        doc = json.loads(path.read_text())
        assert doc["policy"] == "full"
        assert doc["samples_per_class"] == 32
