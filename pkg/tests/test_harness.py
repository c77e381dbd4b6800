import csv
import json
import os

import numpy as np
import pytest

from replandiff.harness import (
    CheckpointError,
    ConfigError,
    load_checkpoint,
    make_config,
    save_checkpoint,
)
from replandiff.harness.checkpoint import Checkpoint, from_bytes, to_bytes
from replandiff.harness.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, main
from replandiff.harness.evaluate import worker_count
from replandiff.harness.formats import dumps_json, fmt
from replandiff.harness.sweep import apply_axis
from replandiff.likelihood import Calibration, ProbeConfig

from conftest import tiny_model

TINY = [
    "--set", "n_episodes=40", "--set", "horizon=16", "--set", "width=16", "--set", "depth=2",
    "--set", "embed_dim=8", "--set", "n_diffusion=16", "--set", "probe_steps=2,3,4",
    "--set", "calib_samples=16", "--set", "n_future=5", "--set", "log_every=10", "--set", "ckpt_every=0",
]


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("run")
    base = ["--world", "maze8", "--out-dir", str(d)] + TINY
    assert main(["gen-data", "--seed", "1"] + base) == EXIT_OK
    assert main(["train", "--seed", "0", "--steps", "30"] + base) == EXIT_OK
    assert main(["calibrate"] + base) == EXIT_OK
    ev = base + ["--seed", "0", "--episodes", "2", "--set", "log_episodes=1", "--policies", "rdm,diffuser,dd"]
    assert main(["eval"] + ev) == EXIT_OK
    return d, base


def test_config_defaults_and_validation():
    cfg = make_config()
    assert cfg.n_diffusion == 128 and cfg.scratch_steps() == 128 and cfg.prev_steps() == cfg.n_future
    assert cfg.intervals() == (32, 4)
    with pytest.raises(ConfigError, match="unknown config key"):
        make_config({"widht": 3})
    with pytest.raises(ConfigError):
        make_config({"theta_future": 0.3, "theta_scratch": 0.5})
    with pytest.raises(ConfigError):
        make_config({"policies": ["rdm", "oracle"]})
    with pytest.raises(ConfigError):
        make_config({"equal_budget": True})
    over = make_config(overrides={"probe_steps": "2,4", "interventions": "false", "n_scratch": "none", "lr": "3e-4"})
    assert over.probe_steps == [2, 4] and over.interventions is False and over.n_scratch is None and over.lr == 3e-4


def test_sweep_axes():
    cfg = make_config({"seed": 0})
    assert apply_axis(cfg, "epsilon", 0.05).epsilon == 0.05
    t = apply_axis(cfg, "thresholds", "0.8:0.4")
    assert (t.theta_future, t.theta_scratch) == (0.8, 0.4)
    assert apply_axis(cfg, "intervals", [16, 2]).intervals() == (16, 2)
    assert apply_axis(cfg, "replan_steps", 20).prev_steps() == 20
    with pytest.raises(ConfigError):
        apply_axis(cfg, "thresholds", 0.5)


def test_number_formatting():
    assert fmt(1 / 3) == "0.333333333" and fmt(7) == "7" and fmt(True) == "1"
    doc = json.loads(dumps_json({"b": np.float32(0.1), "a": [np.int64(2)]}))
    assert doc == {"a": [2], "b": 0.100000001}


def test_worker_count_respects_env(monkeypatch):
    monkeypatch.setenv("RDM_THREADS", "1")
    assert worker_count() == 1
    monkeypatch.setenv("RDM_THREADS", "zero")
    with pytest.raises(ConfigError):
        worker_count()


def test_checkpoint_roundtrip_and_errors(tmp_path):
    m = tiny_model(seed=4)
    ckpt = Checkpoint(m, {"steps": 3}, Calibration(1.5, 0.25, 32), ProbeConfig((1, 2), 3))
    p = tmp_path / "m.ckpt"
    save_checkpoint(ckpt, p)
    back = load_checkpoint(p)
    assert to_bytes(back) == to_bytes(ckpt)
    assert back.calibration.mu == 1.5 and back.probe.steps == (1, 2)
    for name, t in m.params.tensors.items():
        assert np.array_equal(back.model.params.tensors[name].data, t.data)
    raw = to_bytes(ckpt)
    with pytest.raises(CheckpointError, match="magic"):
        from_bytes(b"RDMCKPT0" + raw[8:])
    with pytest.raises(CheckpointError):
        from_bytes(raw[:100])
    with pytest.raises(CheckpointError):
        from_bytes(raw + b"junk")


def test_cli_pipeline_outputs(run_dir):
    d, _ = run_dir
    with open(d / "loss.csv") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["step", "loss"] and len(rows) == 4
    ckpt = load_checkpoint(d / "model.ckpt")
    assert ckpt.train["steps"] == 30 and ckpt.calibration is not None and ckpt.calibration.sigma > 0
    doc = json.loads((d / "metrics.json").read_text())
    assert set(doc["variants"]) == {"rdm", "diffuser", "dd"}
    for v in doc["variants"].values():
        assert v["episodes"] == 2 and 0.0 <= v["success_rate"] <= 1.0
    with open(d / "steps.csv") as f:
        steps = list(csv.DictReader(f))
    assert {r["variant"] for r in steps} == {"rdm", "diffuser", "dd"}
    assert "kl_2" in steps[0] and "timing.json" in os.listdir(d)


def test_cli_render_and_sweep(run_dir, tmp_path):
    d, base = run_dir
    assert main(["render", str(d / "steps.csv"), "--world", "maze8", "--out-dir", str(tmp_path),
                 "--variant", "rdm"]) == EXIT_OK
    svgs = sorted(os.listdir(tmp_path))
    assert svgs == ["rdm_s0_e0_maze.svg", "rdm_s0_e0_score.svg"]
    assert (tmp_path / svgs[0]).read_text().startswith("<svg")
    out = tmp_path / "sweep"
    args = ["sweep", "--seed", "0", "--episodes", "1", "--axis", "epsilon", "--values", "0,0.1",
            "--policies", "diffuser"] + base[:2] + ["--checkpoint", str(d / "model.ckpt"), "--out-dir", str(out)] + TINY
    assert main(args) == EXIT_OK
    with open(out / "sweep_epsilon.csv") as f:
        rows = list(csv.DictReader(f))
    assert [r["value"] for r in rows] == ["0", "0.1"]


def test_cli_exit_codes(run_dir, tmp_path, capsys):
    d, base = run_dir
    assert main(["eval"] + base) == EXIT_CONFIG  # --seed is required
    assert main(["train", "--set", "width=abc", "--out-dir", str(tmp_path)]) == EXIT_CONFIG
    assert main(["eval", "--seed", "0", "--world", "nowhere.world", "--out-dir", str(tmp_path)]) in (EXIT_CONFIG, EXIT_RUNTIME)
    assert main(["eval", "--seed", "0", "--out-dir", str(tmp_path)]) == EXIT_RUNTIME  # no checkpoint
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"XXXXXXXX" + b"\0" * 32)
    assert main(["calibrate", "--checkpoint", str(bad)] + TINY) == EXIT_RUNTIME
    cfg = tmp_path / "cfg.json"
    cfg.write_text("{not json")
    assert main(["gen-data", "--config", str(cfg)]) == EXIT_CONFIG
    assert main(["render", str(d / "steps.csv"), "--world", "maze8", "--variant", "sdm",
                 "--out-dir", str(tmp_path)]) == EXIT_RUNTIME
    capsys.readouterr()
