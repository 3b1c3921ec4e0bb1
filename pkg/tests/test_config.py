import pytest

from desiredsim.config import (ConfigError, ExperimentConfig, PRESETS,
                               from_dict, load_yaml, make_config, save_yaml)


class TestValidation:
    def test_defaults_are_valid(self):
        cfg = ExperimentConfig().validate()
        assert cfg.mode == "fixed" and cfg.duration_s == 3600

    @pytest.mark.parametrize("field,value", [
        ("mode", "adaptive"),
        ("load", "bursty"),
        ("duration_s", 0),
        ("duration_s", -600),
        ("window_s", 0),
        ("probe_period_ms", 0),
        ("tau", 0),
        ("ensemble_alpha", 1.5),
        ("max_load_clients", 0),
    ])
    def test_bad_values_rejected(self, field, value):
        with pytest.raises(ConfigError):
            from_dict({field: value})

    def test_duration_must_tile_into_windows(self):
        with pytest.raises(ConfigError):
            from_dict({"duration_s": 601, "window_s": 4})
        from_dict({"duration_s": 604, "window_s": 4})

    def test_window_must_tile_into_probe_periods(self):
        with pytest.raises(ConfigError):
            from_dict({"probe_period_ms": 7})
        from_dict({"probe_period_ms": 10})

    def test_dynamic_initial_target_band(self):
        with pytest.raises(ConfigError):
            from_dict({"mode": "dynamic", "initial_target_ms": 10.0})
        with pytest.raises(ConfigError):
            from_dict({"mode": "dynamic", "initial_target_ms": 75.0})
        cfg = from_dict({"mode": "dynamic", "initial_target_ms": 20.0})
        assert cfg.initial_target_ms == 20.0
        # fixed arms may sit outside the dynamic band (5 and 100 ms do)
        from_dict({"mode": "fixed", "target_ms": 5.0})
        from_dict({"mode": "fixed", "target_ms": 100.0})

    def test_min_fill_covers_a_batch(self):
        with pytest.raises(ConfigError):
            from_dict({"min_fill": 8, "batch_size": 32})
        from_dict({"min_fill": 32, "batch_size": 32})

    def test_unknown_keys_rejected(self):
        with pytest.raises(ConfigError) as err:
            from_dict({"durationn_s": 600})
        assert "durationn_s" in str(err.value)


class TestPresets:
    def test_desk_rescales_schedule_knobs(self):
        cfg = make_config("desk")
        assert cfg.duration_s == 600
        assert cfg.decay_steps == 42
        assert cfg.min_fill == 32
        # everything else inherits the full-scale defaults
        assert cfg.tau == ExperimentConfig().tau
        assert cfg.batch_size == ExperimentConfig().batch_size

    def test_full_preset_is_the_defaults(self):
        assert make_config("full") == ExperimentConfig().validate()

    def test_overrides_beat_preset(self):
        cfg = make_config("desk", duration_s=120, seed=9)
        assert cfg.duration_s == 120 and cfg.seed == 9
        assert cfg.min_fill == 32

    def test_unknown_preset_rejected(self):
        with pytest.raises(ConfigError):
            make_config("pocket")

    def test_presets_registry(self):
        assert set(PRESETS) == {"full", "desk"}


class TestYaml:
    def test_round_trip(self, tmp_path):
        cfg = make_config("desk", mode="dynamic", load="sinusoid", seed=3,
                          name="dyn-sin")
        path = tmp_path / "arm.yaml"
        save_yaml(cfg, path)
        back = load_yaml(path)
        assert back == cfg

    def test_preset_key_expands(self, tmp_path):
        path = tmp_path / "arm.yaml"
        path.write_text("preset: desk\nseed: 5\n")
        cfg = load_yaml(path)
        assert cfg.duration_s == 600 and cfg.seed == 5

    def test_empty_file_gives_defaults(self, tmp_path):
        path = tmp_path / "empty.yaml"
        path.write_text("")
        assert load_yaml(path) == ExperimentConfig().validate()

    def test_non_mapping_rejected(self, tmp_path):
        path = tmp_path / "list.yaml"
        path.write_text("- a\n- b\n")
        with pytest.raises(ConfigError):
            load_yaml(path)
