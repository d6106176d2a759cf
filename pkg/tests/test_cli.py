import json
from pathlib import Path

import pytest

from highway_rl.cli import main

TINY = {
    "scenario": {
        "episode_budget": 20,
        "n_vehicles_min": 0,
        "n_vehicles_max": 3,
        "road_length": 300.0,
    },
    "agent": {"hidden_sizes": [16], "batch_size": 8, "target_sync_interval": 25},
    "predictor": {
        "m": 2,
        "k": 3,
        "hidden_size": 8,
        "epochs": 2,
        "bptt_len": 2,
        "batch_size": 16,
    },
    "episodes": 5,
    "eval_interval": 5,
    "eval_episodes": 2,
    "seeds": [0],
}


@pytest.fixture()
def tiny_config(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(TINY))
    return path


def read_lines(path: Path) -> list[str]:
    return path.read_text().strip().splitlines()


class TestTrainBaseline:
    def test_smoke_run_and_outputs(self, tiny_config, tmp_path):
        out = tmp_path / "base"
        assert main(["train-baseline", "--config", str(tiny_config), "--seed", "1", "--out", str(out)]) == 0
        assert (out / "qnet.json").exists()
        assert len(read_lines(out / "metrics.csv")) == 6  # header + 5 episodes
        assert len(read_lines(out / "eval.csv")) == 2  # header + one eval point
        assert (out / "manifest.json").exists()

    def test_missing_config_exits_2(self, tmp_path):
        code = main(["train-baseline", "--config", str(tmp_path / "none.json"), "--seed", "0", "--out", str(tmp_path / "x")])
        assert code == 2

    def test_bad_override_exits_2(self, tiny_config, tmp_path):
        code = main(
            [
                "train-baseline",
                "--config",
                str(tiny_config),
                "--seed",
                "0",
                "--out",
                str(tmp_path / "x"),
                "--override",
                "agent.gamma=2.0",
            ]
        )
        assert code == 2

    def test_rerun_is_byte_identical(self, tiny_config, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        for out in (out_a, out_b):
            assert main(["train-baseline", "--config", str(tiny_config), "--seed", "7", "--out", str(out)]) == 0
        for name in ("qnet.json", "metrics.csv", "eval.csv", "config.json"):
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()

    def test_seeds_fan_out(self, tiny_config, tmp_path):
        out = tmp_path / "fan"
        assert main(["train-baseline", "--config", str(tiny_config), "--seeds", "1,2", "--out", str(out)]) == 0
        assert (out / "seed_1" / "metrics.csv").exists()
        assert (out / "seed_2" / "metrics.csv").exists()


class TestPipeline:
    def test_end_to_end(self, tiny_config, tmp_path, capsys):
        base = tmp_path / "base"
        logs = tmp_path / "logs"
        mdrnn = tmp_path / "mdrnn"
        safe = tmp_path / "safe"
        ev_base = tmp_path / "eval_base"
        ev_safe = tmp_path / "eval_safe"
        cmp_dir = tmp_path / "cmp"
        cfg = ["--config", str(tiny_config)]

        assert main(["train-baseline", *cfg, "--seed", "1", "--out", str(base)]) == 0
        assert (
            main(
                [
                    "collect",
                    *cfg,
                    "--seed",
                    "2",
                    "--out",
                    str(logs),
                    "--checkpoint",
                    str(base / "qnet.json"),
                    "--episodes",
                    "8",
                ]
            )
            == 0
        )
        assert (
            main(["train-mdrnn", *cfg, "--seed", "3", "--out", str(mdrnn), "--log", str(logs / "driving_log.csv")])
            == 0
        )
        assert (
            main(
                [
                    "train-safe",
                    *cfg,
                    "--seed",
                    "1",
                    "--out",
                    str(safe),
                    "--predictor",
                    str(mdrnn / "mdrnn.json"),
                ]
            )
            == 0
        )
        for ckpt, out in ((base, ev_base), (safe, ev_safe)):
            assert (
                main(
                    [
                        "evaluate",
                        *cfg,
                        "--seed",
                        "5",
                        "--out",
                        str(out),
                        "--checkpoint",
                        str(ckpt / "qnet.json"),
                        "--counts",
                        "0,2",
                        "--trials",
                        "3",
                    ]
                )
                == 0
            )
            assert len(read_lines(out / "sweep.csv")) == 3
        # compare needs eval.csv (training runs) and optionally sweeps
        assert main(["compare", str(base), str(safe), "--out", str(cmp_dir)]) == 0
        lines = read_lines(cmp_dir / "compare_learning.csv")
        assert lines[0] == "episode,base_return,safe_return"
        assert len(lines) == 2
        out_text = capsys.readouterr().out
        assert "learning curves" in out_text


class TestCollect:
    def test_zero_episodes_warns_exit_0(self, tiny_config, tmp_path, capsys):
        base = tmp_path / "base"
        main(["train-baseline", "--config", str(tiny_config), "--seed", "1", "--out", str(base)])
        code = main(
            [
                "collect",
                "--config",
                str(tiny_config),
                "--seed",
                "0",
                "--out",
                str(tmp_path / "logs"),
                "--checkpoint",
                str(base / "qnet.json"),
                "--episodes",
                "0",
            ]
        )
        assert code == 0
        assert "warning" in capsys.readouterr().out

    def test_corrupt_checkpoint_exits_3(self, tiny_config, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"l0.w": {"shape": [2, 2], "values": [1, 2, 3, 4]}}))
        code = main(
            [
                "collect",
                "--config",
                str(tiny_config),
                "--seed",
                "0",
                "--out",
                str(tmp_path / "logs"),
                "--checkpoint",
                str(bad),
                "--episodes",
                "2",
            ]
        )
        assert code == 3

    def test_tampered_checkpoint_detected_by_manifest(self, tiny_config, tmp_path):
        base = tmp_path / "base"
        main(["train-baseline", "--config", str(tiny_config), "--seed", "1", "--out", str(base)])
        ckpt = base / "qnet.json"
        payload = json.loads(ckpt.read_text())
        first = next(iter(payload))
        payload[first]["values"][0] += 1.0
        ckpt.write_text(json.dumps(payload))
        code = main(
            [
                "collect",
                "--config",
                str(tiny_config),
                "--seed",
                "0",
                "--out",
                str(tmp_path / "logs"),
                "--checkpoint",
                str(ckpt),
                "--episodes",
                "2",
            ]
        )
        assert code == 3


class TestTrainMdrnn:
    def test_empty_log_exits_2(self, tiny_config, tmp_path):
        log_path = tmp_path / "empty.csv"
        log_path.write_text("episode,step," + ",".join(f"s{i:02d}" for i in range(20)) + ",action_id\n")
        code = main(
            ["train-mdrnn", "--config", str(tiny_config), "--seed", "0", "--out", str(tmp_path / "m"), "--log", str(log_path)]
        )
        assert code == 2

    def test_epochs_zero_baseline_row(self, tiny_config, tmp_path):
        base = tmp_path / "base"
        logs = tmp_path / "logs"
        main(["train-baseline", "--config", str(tiny_config), "--seed", "1", "--out", str(base)])
        main(
            [
                "collect",
                "--config",
                str(tiny_config),
                "--seed",
                "2",
                "--out",
                str(logs),
                "--checkpoint",
                str(base / "qnet.json"),
                "--episodes",
                "6",
            ]
        )
        out = tmp_path / "m0"
        code = main(
            [
                "train-mdrnn",
                "--config",
                str(tiny_config),
                "--seed",
                "0",
                "--out",
                str(out),
                "--log",
                str(logs / "driving_log.csv"),
                "--override",
                "predictor.epochs=0",
            ]
        )
        assert code == 0
        assert len(read_lines(out / "nll.csv")) == 2  # header + epoch-0 baseline


class TestTrainSafe:
    def test_metadata_mismatch_exits_3(self, tiny_config, tmp_path):
        base = tmp_path / "base"
        logs = tmp_path / "logs"
        mdrnn = tmp_path / "m"
        cfg = ["--config", str(tiny_config)]
        main(["train-baseline", *cfg, "--seed", "1", "--out", str(base)])
        main(
            ["collect", *cfg, "--seed", "2", "--out", str(logs), "--checkpoint", str(base / "qnet.json"), "--episodes", "6"]
        )
        main(["train-mdrnn", *cfg, "--seed", "3", "--out", str(mdrnn), "--log", str(logs / "driving_log.csv")])
        code = main(
            [
                "train-safe",
                *cfg,
                "--seed",
                "1",
                "--out",
                str(tmp_path / "safe"),
                "--predictor",
                str(mdrnn / "mdrnn.json"),
                "--override",
                "scenario.d_sense=80.0",  # changes normalization vs the trained predictor
            ]
        )
        assert code == 3


class TestEvaluateAndCompare:
    def test_zero_trials(self, tiny_config, tmp_path, capsys):
        base = tmp_path / "base"
        main(["train-baseline", "--config", str(tiny_config), "--seed", "1", "--out", str(base)])
        out = tmp_path / "ev"
        code = main(
            [
                "evaluate",
                "--config",
                str(tiny_config),
                "--seed",
                "0",
                "--out",
                str(out),
                "--checkpoint",
                str(base / "qnet.json"),
                "--counts",
                "0,1",
                "--trials",
                "0",
            ]
        )
        assert code == 0
        assert "warning" in capsys.readouterr().out
        assert len(read_lines(out / "sweep.csv")) == 3

    def test_single_run_compare_exits_2(self, tmp_path):
        assert main(["compare", str(tmp_path), "--out", str(tmp_path / "c")]) == 2

    def test_incompatible_grids_exit_2(self, tmp_path):
        for name, rows in (("a", ["5,1.0,0"]), ("b", ["10,1.0,0"])):
            d = tmp_path / name
            d.mkdir()
            (d / "eval.csv").write_text("episode,mean_return,collisions\n" + "\n".join(rows) + "\n")
        assert main(["compare", str(tmp_path / "a"), str(tmp_path / "b"), "--out", str(tmp_path / "c")]) == 2

    def test_identical_runs_identical_columns(self, tmp_path):
        for name in ("a", "b"):
            d = tmp_path / name
            d.mkdir()
            (d / "eval.csv").write_text("episode,mean_return,collisions\n5,-1.25,0\n10,-0.5,1\n")
        assert main(["compare", str(tmp_path / "a"), str(tmp_path / "b"), "--out", str(tmp_path / "c")]) == 0
        lines = read_lines(tmp_path / "c" / "compare_learning.csv")
        for line in lines[1:]:
            parts = line.split(",")
            assert parts[1] == parts[2]
