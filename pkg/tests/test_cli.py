import json

import numpy as np
import pytest
import yaml

from lobrl.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, run
from lobrl.pipeline import (
    RunConfig,
    cmd_sample,
    cmd_tune,
    derive_seed,
    load_config,
)
from lobrl.windows import read_manifest


def write_config(path, **kw):
    doc = {
        "scenario": "c202",
        "seed": 7,
        "out": str(kw.pop("out")),
        "ensemble": kw.pop("ensemble", 2),
        "budget": kw.pop("budget", 3),
        "data": {
            "synthetic": {
                "n_ticks": 400,
                "train_days": 2,
                "val_days": 1,
                "test_days": 1,
                "walk_prob": 0.05,
                "signal": {"trigger_rate": 0.02},
            }
        },
        "windows": {"length": 200, "per_day": 2, "total": 3},
        "ppo": {
            "hidden": [16, 16],
            "env_epochs": 1,
            "steps_per_update": 128,
            "minibatch_size": 64,
        },
    }
    doc.update(kw)
    with open(path, "w") as fh:
        yaml.safe_dump(doc, fh)
    return path


class TestDeriveSeed:
    def test_distinct_streams(self):
        a = np.random.default_rng(derive_seed(0, "train", 0)).random(4)
        b = np.random.default_rng(derive_seed(0, "train", 1)).random(4)
        c = np.random.default_rng(derive_seed(0, "sample", 0)).random(4)
        assert not np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_reproducible(self):
        a = np.random.default_rng(derive_seed(3, "tune", 2)).random(4)
        b = np.random.default_rng(derive_seed(3, "tune", 2)).random(4)
        assert np.array_equal(a, b)

    def test_unknown_stage(self):
        with pytest.raises(KeyError):
            derive_seed(0, "nope")


class TestLoadConfig:
    def test_defaults_without_file(self):
        cfg = load_config(None, {})
        assert cfg.scenario == "c202" and cfg.ensemble == 30

    def test_overrides_beat_file(self, tmp_path):
        p = write_config(tmp_path / "c.yaml", out=tmp_path / "o")
        cfg = load_config(p, {"scenario": "c203", "seed": 99})
        assert cfg.scenario == "c203" and cfg.seed == 99
        assert cfg.ppo.env_epochs == 1 and cfg.ppo.hidden == (16, 16)

    def test_invalid_scenario(self):
        with pytest.raises(ValueError):
            RunConfig(scenario="c999")

    def test_conflicting_data_sources(self):
        with pytest.raises(ValueError):
            RunConfig(data={"synthetic": {}, "train_glob": "*.csv"})

    def test_config_hash_stable(self, tmp_path):
        p = write_config(tmp_path / "c.yaml", out=tmp_path / "o")
        assert load_config(p, {}).config_hash() == load_config(p, {}).config_hash()


class TestCLISubcommands:
    def test_no_command_is_usage_error(self):
        assert run([]) == EXIT_USAGE

    def test_unknown_command_is_usage_error(self):
        assert run(["frobnicate"]) == EXIT_USAGE

    def test_help_exits_ok(self):
        assert run(["--help"]) == EXIT_OK

    def test_sample_without_data_is_data_error(self, tmp_path):
        assert run(["sample", "--out", str(tmp_path)]) == EXIT_DATA

    def test_missing_config_file(self, tmp_path):
        rc = run(["sample", "--config", str(tmp_path / "nope.yaml")])
        assert rc == EXIT_USAGE

    def test_test_without_checkpoints(self, tmp_path):
        cfg = write_config(tmp_path / "c.yaml", out=tmp_path / "o")
        assert run(["test", "--config", str(cfg)]) == EXIT_USAGE


class TestSynthCommand:
    def test_writes_csvs_and_truth(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "c.yaml", out=tmp_path / "o")
        assert run(["synth", "--config", str(cfg)]) == EXIT_OK
        root = tmp_path / "o" / "synth"
        assert len(list((root / "train").glob("*_orderbook_10.csv"))) == 2
        assert len(list((root / "train").glob("*_truth.json"))) == 2
        assert len(list((root / "test").glob("*_orderbook_10.csv"))) == 1


class TestSampleCommand:
    def test_manifest_is_deterministic(self, tmp_path):
        cfg = write_config(tmp_path / "c.yaml", out=tmp_path / "o1")
        assert run(["sample", "--config", str(cfg)]) == EXIT_OK
        m1 = (tmp_path / "o1" / "manifest.json").read_text()
        cfg2 = write_config(tmp_path / "c2.yaml", out=tmp_path / "o2")
        assert run(["sample", "--config", str(cfg2)]) == EXIT_OK
        m2_doc = json.loads((tmp_path / "o2" / "manifest.json").read_text())
        m1_doc = json.loads(m1)
        assert m1_doc["windows"] == m2_doc["windows"]
        assert m1_doc["meta"]["vol_norm"] == m2_doc["meta"]["vol_norm"]

    def test_manifest_contents(self, tmp_path):
        cfg_path = write_config(tmp_path / "c.yaml", out=tmp_path / "o")
        cfg = load_config(cfg_path, {})
        path = cmd_sample(cfg)
        windows, meta = read_manifest(path)
        # requested 3 windows, capped by how many disjoint candidates exist
        assert len(windows) == min(3, meta["n_candidates"])
        assert meta["scenario"] == "c202" and meta["vol_norm"] > 0
        assert all(w.length == 200 for w in windows)


class TestTrainTestRoundTrip:
    def test_train_resume_and_determinism(self, tmp_path):
        cfg = write_config(tmp_path / "c.yaml", out=tmp_path / "o")
        assert run(["sample", "--config", str(cfg)]) == EXIT_OK
        assert run(["train", "--config", str(cfg)]) == EXIT_OK
        ckpts = sorted((tmp_path / "o" / "checkpoints").glob("member_*.json"))
        assert len(ckpts) == 2
        blobs = {p.name: p.read_bytes() for p in ckpts}
        assert blobs["member_000.json"] != blobs["member_001.json"]  # distinct member seeds
        # resume: rerun leaves existing checkpoints byte-identical
        mtimes = {p.name: p.stat().st_mtime_ns for p in ckpts}
        assert run(["train", "--config", str(cfg)]) == EXIT_OK
        for p in ckpts:
            assert p.read_bytes() == blobs[p.name]
            assert p.stat().st_mtime_ns == mtimes[p.name]
        # a fresh out dir reproduces the same checkpoints bit-for-bit
        cfg_b = write_config(tmp_path / "cb.yaml", out=tmp_path / "ob")
        assert run(["sample", "--config", str(cfg_b)]) == EXIT_OK
        assert run(["train", "--config", str(cfg_b)]) == EXIT_OK
        for p in sorted((tmp_path / "ob" / "checkpoints").glob("member_*.json")):
            assert p.read_bytes() == blobs[p.name]

    def test_test_exports_report(self, tmp_path):
        cfg = write_config(tmp_path / "c.yaml", out=tmp_path / "o")
        assert run(["sample", "--config", str(cfg)]) == EXIT_OK
        assert run(["train", "--config", str(cfg)]) == EXIT_OK
        assert run(["test", "--config", str(cfg)]) == EXIT_OK
        report_dir = tmp_path / "o" / "report"
        trades = list(report_dir.glob("*_trades.csv"))
        summaries = list(report_dir.glob("*_summary.json"))
        assert trades and summaries
        doc = json.loads(summaries[0].read_text())
        assert doc["scenario"] == "c202" and doc["n_members"] == 2

    def test_report_command_cross_checks_summary(self, tmp_path):
        cfg = write_config(tmp_path / "c.yaml", out=tmp_path / "o")
        for sub in ("sample", "train", "test"):
            assert run([sub, "--config", str(cfg)]) == EXIT_OK
        trades = next((tmp_path / "o" / "report").glob("*_trades.csv"))
        summary_json = next((tmp_path / "o" / "report").glob("*_summary.json"))
        out = tmp_path / "recomputed.json"
        assert run(["report", "--trades", str(trades), "--out", str(out)]) == EXIT_OK
        got = json.loads(out.read_text())
        full = json.loads(summary_json.read_text())
        for key in ("n_trades", "total_pnl_ticks", "win_rate", "mean_trade_return_ticks"):
            assert got[key] == full[key]


class TestTuneCommand:
    def test_tune_with_stub_objective(self, tmp_path):
        cfg_path = write_config(tmp_path / "c.yaml", out=tmp_path / "o", budget=5)
        cfg = load_config(cfg_path, {})
        cmd_sample(cfg)

        def objective(lr, ec):
            x = np.log10([lr, ec])
            return -((x[0] + 3) ** 2) - (x[1] + 2) ** 2

        best_path = cmd_tune(cfg, objective=objective)
        best = json.loads(best_path.read_text())
        assert {"learning_rate", "entropy_coef", "validation_profit_ticks", "trial_id"} <= set(best)
        lines = (tmp_path / "o" / "tune" / "trials.csv").read_text().strip().splitlines()
        assert len(lines) == 6  # header + budget rows
        assert lines[0].startswith("trial_id,learning_rate")
