import json

import pytest

from highway_rl.config import (
    ExperimentConfig,
    apply_overrides,
    config_from_dict,
    config_to_dict,
    load_config,
    save_config,
)
from highway_rl.errors import ConfigurationError, FormatError
from highway_rl.manifest import sha256_of, verify_artifact, write_manifest


class TestConfig:
    def test_defaults(self):
        cfg = load_config(None)
        assert cfg.episodes == 3000
        assert cfg.eval_interval == 100
        assert cfg.scenario.dynamics.dt == 0.1
        assert cfg.agent.gamma == 0.95
        assert cfg.predictor.m == 3
        assert len(cfg.scenario.actions) == 8

    def test_round_trip(self, tmp_path):
        cfg = load_config(None)
        path = tmp_path / "config.json"
        save_config(cfg, path)
        again = load_config(path)
        assert config_to_dict(again) == config_to_dict(cfg)

    def test_file_values_override_defaults(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"episodes": 42, "agent": {"gamma": 0.9}}))
        cfg = load_config(path)
        assert cfg.episodes == 42
        assert cfg.agent.gamma == 0.9
        assert cfg.agent.batch_size == 32  # untouched default

    def test_flag_overrides_beat_file(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"episodes": 42, "scenario": {"dynamics": {"dt": 0.2}}}))
        cfg = load_config(path, ["episodes=7", "scenario.dynamics.dt=0.05", "seeds=[1,2]"])
        assert cfg.episodes == 7
        assert cfg.scenario.dynamics.dt == 0.05
        assert cfg.seeds == (1, 2)

    def test_unknown_field_names_the_field(self):
        with pytest.raises(ConfigurationError, match="scenario.dynamics.dtt"):
            config_from_dict({"scenario": {"dynamics": {"dtt": 0.1}}})
        with pytest.raises(ConfigurationError, match="agent.warmup"):
            config_from_dict({"agent": {"warmup": 10}})

    def test_invalid_value_propagates_section(self):
        with pytest.raises(ConfigurationError, match="scenario.reward"):
            config_from_dict({"scenario": {"reward": {"d_safe": -1.0}}})

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError, match="not found"):
            load_config(tmp_path / "absent.json")

    def test_custom_action_layout(self):
        cfg = config_from_dict(
            {"scenario": {"actions": [["maintain", "keep"], ["brake", "keep"]]}}
        )
        assert len(cfg.scenario.actions) == 2
        assert cfg.scenario.actions[1].longitudinal.value == "brake"

    def test_bad_override_shape(self):
        with pytest.raises(ConfigurationError, match="key=value"):
            apply_overrides({}, ["episodes"])

    def test_empty_seeds_rejected(self):
        with pytest.raises(ConfigurationError):
            ExperimentConfig(seeds=())


class TestManifest:
    def test_write_and_verify(self, tmp_path):
        out = tmp_path / "file.csv"
        out.write_text("a,b\n1,2\n")
        write_manifest(tmp_path, "evaluate", 3, {"k": 1}, [out])
        verify_artifact(out)  # no exception

    def test_mismatch_detected(self, tmp_path):
        out = tmp_path / "file.csv"
        out.write_text("a,b\n1,2\n")
        write_manifest(tmp_path, "evaluate", 3, {}, [out])
        out.write_text("a,b\n9,9\n")
        with pytest.raises(FormatError, match="checksum"):
            verify_artifact(out)

    def test_unlisted_or_unmanaged_files_pass(self, tmp_path):
        loose = tmp_path / "loose.txt"
        loose.write_text("x")
        verify_artifact(loose)  # no manifest at all
        write_manifest(tmp_path, "x", None, {}, [])
        verify_artifact(loose)  # manifest exists but does not list it

    def test_missing_artifact(self, tmp_path):
        with pytest.raises(FormatError, match="not found"):
            verify_artifact(tmp_path / "nope.json")

    def test_sha_is_stable(self, tmp_path):
        f = tmp_path / "w.json"
        f.write_text("{}")
        assert sha256_of(f) == sha256_of(f)
