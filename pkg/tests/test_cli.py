"""End-to-end tests of the command-line runner on tiny configurations."""
import json

import numpy as np
import pytest

from cellsleep.cli import (EXIT_CONFIG, EXIT_MODEL, EXIT_OK, main,
                           traffic_hour_ranks)
from cellsleep.config import ExperimentConfig
from cellsleep.marl.nets import Mlp, save_model
from cellsleep.radio import bs_power_w


def write_config(path, **overrides):
    cfg = ExperimentConfig().to_dict()
    cfg["episode_s"] = 0.4
    cfg["traffic"]["peak_total_mbps_km2"] = 60.0
    cfg["ppo"]["episodes"] = 2
    cfg["ppo"]["hidden_sizes"] = [16, 16]
    cfg["ppo"]["checkpoint_every"] = 1
    for key, value in overrides.items():
        node = cfg
        parts = key.split(".")
        for part in parts[:-1]:
            node = node[part]
        node[parts[-1]] = value
    path.write_text(json.dumps(cfg))
    return path


class TestSimulate:
    def test_always_on_quiet_profile_pc(self, tmp_path):
        """With no traffic the mean PC is exactly C * P(0, M_max, awake)."""
        cfg_path = write_config(tmp_path / "cfg.json",
                                **{"traffic.peak_total_mbps_km2": 1e-12})
        out = tmp_path / "run"
        code = main(["simulate", "--config", str(cfg_path),
                     "--policy", "always-on", "--out", str(out)])
        assert code == EXIT_OK
        summary = json.loads((out / "summary.json").read_text())
        expected = 7 * bs_power_w(0, 64, 0, ExperimentConfig().radio)
        assert summary["overall"]["avg_pc_w"] == pytest.approx(expected)
        assert summary["overall"]["drop_ratio"] is None

    def test_auto_sm1_quiet_profile_discount(self, tmp_path):
        """Idle network under Auto-SM1 settles at the level-1 idle power."""
        cfg_path = write_config(tmp_path / "cfg.json",
                                **{"traffic.peak_total_mbps_km2": 1e-12})
        out = tmp_path / "run"
        assert main(["simulate", "--config", str(cfg_path),
                     "--policy", "auto-sm1", "--out", str(out)]) == EXIT_OK
        summary = json.loads((out / "summary.json").read_text())
        params = ExperimentConfig().radio
        # the first decision applies at t=0, so every step is discounted
        assert summary["overall"]["avg_pc_w"] == pytest.approx(
            7 * 0.69 * params.p_fixed_w, rel=1e-9)

    def test_same_seed_byte_identical(self, tmp_path):
        cfg_path = write_config(tmp_path / "cfg.json")
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            assert main(["simulate", "--config", str(cfg_path),
                         "--policy", "random", "--seed", "9",
                         "--out", str(out)]) == EXIT_OK
            outs.append((out / "steps_ep000.jsonl").read_bytes())
        assert outs[0] == outs[1]

    def test_jsonl_schema(self, tmp_path):
        cfg_path = write_config(tmp_path / "cfg.json")
        out = tmp_path / "run"
        main(["simulate", "--config", str(cfg_path), "--out", str(out)])
        lines = (out / "steps_ep000.jsonl").read_text().splitlines()
        assert len(lines) == 20  # 0.4 s / 20 ms
        record = json.loads(lines[0])
        assert set(record) == {"step", "time_s", "pc_w", "drop_ratio",
                               "sum_rate_bps", "ee_bits_per_j", "reward",
                               "xi", "per_bs"}

    def test_config_round_trip(self, tmp_path):
        cfg_path = write_config(tmp_path / "cfg.json")
        out1 = tmp_path / "r1"
        main(["simulate", "--config", str(cfg_path), "--policy", "random",
              "--out", str(out1)])
        out2 = tmp_path / "r2"
        main(["simulate", "--config", str(out1 / "config_resolved.json"),
              "--policy", "random", "--out", str(out2)])
        assert (out1 / "steps_ep000.jsonl").read_bytes() == \
            (out2 / "steps_ep000.jsonl").read_bytes()


class TestExitCodes:
    def test_unreadable_config(self, tmp_path):
        code = main(["simulate", "--config", str(tmp_path / "missing.json"),
                     "--out", str(tmp_path / "out")])
        assert code == EXIT_CONFIG

    def test_malformed_field_reports_path(self, tmp_path, capsys):
        cfg_path = tmp_path / "bad.json"
        cfg_path.write_text(json.dumps({"traffic": {"file_mb": -1}}))
        code = main(["simulate", "--config", str(cfg_path),
                     "--out", str(tmp_path / "out")])
        assert code == EXIT_CONFIG
        assert "file_mb" in capsys.readouterr().err

    def test_unknown_field_rejected(self, tmp_path):
        cfg_path = tmp_path / "bad.json"
        cfg_path.write_text(json.dumps({"traffik": {}}))
        assert main(["simulate", "--config", str(cfg_path),
                     "--out", str(tmp_path / "out")]) == EXIT_CONFIG

    def test_model_width_mismatch(self, tmp_path):
        wrong = Mlp([10, 8, 12], np.random.default_rng(0))
        model_path = tmp_path / "model.npz"
        save_model(model_path, wrong)
        cfg_path = write_config(tmp_path / "cfg.json")
        code = main(["simulate", "--config", str(cfg_path),
                     "--policy", "mappo", "--model", str(model_path),
                     "--out", str(tmp_path / "out")])
        assert code == EXIT_MODEL


class TestTrain:
    def test_train_writes_curves_and_model(self, tmp_path):
        cfg_path = write_config(tmp_path / "cfg.json")
        out = tmp_path / "run"
        assert main(["train", "--config", str(cfg_path),
                     "--out", str(out)]) == EXIT_OK
        curves = (out / "curves.csv").read_text().splitlines()
        assert curves[0] == "episode,reward,drop_ratio,pc_w"
        assert len(curves) == 3  # header + 2 episodes
        assert (out / "model.npz").exists()
        assert (out / "checkpoint.npz").exists()
        timings = (out / "timings.csv").read_text().splitlines()
        assert timings[0] == "episode,wall_clock_s"

    def test_trained_model_evaluates(self, tmp_path):
        cfg_path = write_config(tmp_path / "cfg.json")
        run = tmp_path / "run"
        main(["train", "--config", str(cfg_path), "--out", str(run)])
        out = tmp_path / "eval"
        code = main(["evaluate", "--config", str(cfg_path),
                     "--policy", "mappo", "--model", str(run / "model.npz"),
                     "--out", str(out)])
        assert code == EXIT_OK
        report = json.loads((out / "report.json").read_text())
        assert "mappo_vs_always-on" in report["deltas"]
        assert "mappo_vs_auto-sm1" in report["deltas"]


class TestEvaluate:
    def test_self_comparison_has_zero_deltas(self, tmp_path):
        cfg_path = write_config(tmp_path / "cfg.json")
        out = tmp_path / "eval"
        code = main(["evaluate", "--config", str(cfg_path),
                     "--policy", "always-on", "--baselines", "always-on",
                     "--out", str(out)])
        assert code == EXIT_OK
        report = json.loads((out / "report.json").read_text())
        deltas = report["deltas"]["always-on_vs_always-on"]
        assert deltas["low_traffic_pc_delta"] == pytest.approx(0.0)
        for key, value in deltas.items():
            if value is not None:
                assert value == pytest.approx(0.0)

    def test_report_contains_required_fields(self, tmp_path):
        cfg_path = write_config(tmp_path / "cfg.json")
        out = tmp_path / "eval"
        main(["evaluate", "--config", str(cfg_path), "--policy", "auto-sm1",
              "--baselines", "always-on", "--out", str(out)])
        report = json.loads((out / "report.json").read_text())
        entry = report["deltas"]["auto-sm1_vs_always-on"]
        assert "low_traffic_pc_delta" in entry
        assert "high_traffic_ee_delta" in entry
        assert len(report["low_traffic_hours"]) == 8
        assert len(report["high_traffic_hours"]) == 8

    def test_thread_cap_respected(self, tmp_path, monkeypatch):
        monkeypatch.setenv("CELLSLEEP_THREADS", "1")
        cfg_path = write_config(tmp_path / "cfg.json")
        out = tmp_path / "eval"
        assert main(["evaluate", "--config", str(cfg_path),
                     "--policy", "always-on", "--episodes", "2",
                     "--out", str(out)]) == EXIT_OK


class TestExportProfile:
    def test_writes_csv(self, tmp_path):
        out = tmp_path / "profile.csv"
        assert main(["export-profile", "--out", str(out)]) == EXIT_OK
        lines = out.read_text().splitlines()
        assert lines[0] == "category,slot,density_mbps_km2"
        assert len(lines) == 1 + 3 * 72

    def test_round_trips_through_simulate(self, tmp_path):
        prof = tmp_path / "profile.csv"
        main(["export-profile", "--out", str(prof)])
        cfg_path = write_config(tmp_path / "cfg.json",
                                **{"traffic.profile_csv": str(prof)})
        out = tmp_path / "run"
        assert main(["simulate", "--config", str(cfg_path),
                     "--out", str(out)]) == EXIT_OK


class TestHourRanks:
    def test_low_and_high_partition(self):
        low, high = traffic_hour_ranks(ExperimentConfig())
        assert len(low) == 8 and len(high) == 8
        assert not set(low) & set(high)
        # sinusoidal profile: midnight hours are the trough, midday the peak
        assert 0 in low
        assert 12 in high
