import json
from pathlib import Path

import numpy as np
import pytest

from lss_basis import cli
from lss_basis.errors import ConfigError, DwellTimeError
from lss_basis.model import SwitchedModel, example_model
from lss_basis.pipeline import (
    ExperimentConfig,
    cmd_run,
    derive_seed,
    learn,
    markov_mismatch,
    prepare,
    validate_outputs,
)
from lss_basis.signals import write_signals

CONFIG = Path(__file__).resolve().parents[1] / "configs" / "three_mode.json"

RUN_FILES = (
    "config_resolved.json", "model.json", "learning_signals.csv", "local_estimates.json",
    "clusters.json", "feature_trace.csv", "transitions.json", "transforms.json", "graph.dot",
    "corrected_model.json", "pe_report.json", "markov_mismatch.csv", "validation_signals.csv",
    "validation_outputs.csv", "report.json",
)


def write_cfg(tmp_path, **over):
    raw = json.loads(CONFIG.read_text())
    raw.update(over)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(raw))
    return path


def test_config_loads():
    cfg = ExperimentConfig.load(CONFIG)
    assert cfg.seed == 2024 and cfg.switching.min_dwell == 10
    assert cfg.validation.min_dwell == 1
    assert cfg.to_dict()["resolved_seeds"]["local"] == derive_seed(2024, "local")


@pytest.mark.parametrize("raw", [
    {"bogus": 1},
    {"cluster_eps": -1.0},
    {"seeds": {"nonsense": 3}},
    {"model_path": "missing.json"},
    {"switching": {"N": 0}},
])
def test_config_errors(tmp_path, raw):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(raw, tmp_path)


def test_unreadable_config(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        ExperimentConfig.load(bad)


def test_named_seeds_are_distinct_and_overridable():
    cfg = ExperimentConfig.from_dict({"seed": 1, "seeds": {"local": 99}})
    assert cfg.seed_for("local") == 99
    assert len({derive_seed(1, n) for n in ("switching", "input", "x0")}) == 3


def test_short_learning_dwell_rejected():
    cfg = ExperimentConfig.from_dict({"switching": {"N": 200, "min_dwell": 2, "max_dwell": 5}})
    with pytest.raises(DwellTimeError):
        prepare(cfg)


def test_run_meets_bound_and_writes_artifacts(tmp_path):
    res = cmd_run(ExperimentConfig.load(CONFIG), tmp_path)
    assert res.report.passed
    assert res.report.output_errors["validation_min_dwell"] == 1
    for name in RUN_FILES:
        assert (tmp_path / name).exists(), name
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["clustering"]["all_segments_correct"]
    assert report["markov_errors"]["after_all_lags"]["max"] <= 1e-8
    corrected = SwitchedModel.load(tmp_path / "corrected_model.json")
    assert corrected.sigma == 3


def test_run_is_deterministic(tmp_path):
    cfg = ExperimentConfig.load(CONFIG)
    cmd_run(cfg, tmp_path / "a")
    cmd_run(cfg, tmp_path / "b")
    for name in RUN_FILES:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name


@pytest.mark.parametrize("local_seed", [1, 2, 3])
def test_result_independent_of_local_bases(local_seed):
    cfg = ExperimentConfig.from_dict({"seed": 5, "seeds": {"local": local_seed}})
    assert cmd_run(cfg).report.output_errors["relative"] <= 1e-9


def test_markov_mismatch_before_and_after():
    res = cmd_run(ExperimentConfig.from_dict({"seed": 3}))
    assert res.report.markov_before["cross_switch_max"] > 0.1
    assert res.report.markov_after["max"] <= 1e-8
    m = markov_mismatch(res.data.model, res.data.model, res.data.omega.phi, (0, 1, 2), 200)
    assert m["max"] == 0.0


def test_external_signals_file(tmp_path):
    cfg = ExperimentConfig.load(CONFIG)
    data = prepare(cfg)
    write_signals(tmp_path / "sig.csv", data.omega, data.y)
    ext = ExperimentConfig.from_dict({"seed": 2024, "signals_path": "sig.csv"}, tmp_path)
    loaded = prepare(ext)
    assert np.array_equal(loaded.omega.phi.phi, data.omega.phi.phi)
    learned = learn(ext, loaded)
    val = validate_outputs(ext, loaded.model, learned.corrected)
    assert val.relative_error <= 1e-9


def test_single_mode_config(tmp_path):
    one = SwitchedModel((example_model()[1],))
    one.save(tmp_path / "one.json")
    cfg = ExperimentConfig.from_dict({"model_path": "one.json"}, tmp_path)
    res = cmd_run(cfg)
    assert res.learned.transforms.tree == ()
    assert res.report.passed


def run_cli(*args):
    return cli.main([*args])


@pytest.mark.parametrize("sub,expected", [
    ("simulate", "learning_signals.csv"),
    ("cluster", "clusters.json"),
    ("correct", "corrected_model.json"),
    ("pe-design", "pe_report.json"),
    ("graph", "graph.dot"),
    ("run", "report.json"),
])
def test_cli_subcommands(tmp_path, capsys, sub, expected):
    assert run_cli(sub, "--config", str(CONFIG), "--seed", "9", "--out", str(tmp_path)) == 0
    assert (tmp_path / expected).exists()
    json.loads(capsys.readouterr().out)


def test_cli_validate_uses_corrected_file(tmp_path, capsys):
    assert run_cli("correct", "--config", str(CONFIG), "--out", str(tmp_path)) == 0
    capsys.readouterr()
    rc = run_cli("validate", "--config", str(CONFIG), "--out", str(tmp_path / "v"),
                 "--corrected", str(tmp_path / "corrected_model.json"))
    assert rc == 0
    assert json.loads(capsys.readouterr().out)["passed"]


def test_cli_validate_flags_wrong_model(tmp_path, capsys):
    # a model with the wrong first mode cannot reproduce the outputs
    run_cli("cluster", "--config", str(CONFIG), "--out", str(tmp_path))
    clusters = json.loads((tmp_path / "clusters.json").read_text())
    assert clusters
    wrong = example_model(((0.5, 0.1), (0.2, 0.3)))
    wrong.save(tmp_path / "wrong.json")
    capsys.readouterr()
    rc = run_cli("validate", "--config", str(CONFIG), "--out", str(tmp_path / "v"),
                 "--corrected", str(tmp_path / "wrong.json"))
    assert rc == 2
    assert json.loads(capsys.readouterr().err)["error"] == "validation_failed"


def test_cli_error_json(tmp_path, capsys):
    cfg = write_cfg(tmp_path, switching={"N": 200, "min_dwell": 2, "max_dwell": 4})
    assert run_cli("run", "--config", str(cfg), "--out", str(tmp_path / "o")) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "dwell_violation"
    assert run_cli("run", "--config", str(tmp_path / "nope.json")) == 2
    assert json.loads(capsys.readouterr().err)["error"] == "invalid_config"
