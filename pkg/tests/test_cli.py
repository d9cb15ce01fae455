import json

import pandas as pd
import pytest

from yieldnet.cli import (
    EXIT_CONFIG, EXIT_DATA, EXIT_MISSING, EXIT_OK, EXIT_OUTPUT_EXISTS, EXIT_USAGE, dispatch, load_config,
)

TINY = """\
# tiny pipeline
synth.n_hybrids = 60
synth.n_locations = 8
synth.p_markers = 100
synth.hybrids_per_environment = 10
train.max_iterations = 200
train.log_every = 100
weather.max_iterations = 100
baselines.snn_iterations = 200
baselines.snn_width = 20
"""


def run(*argv):
    return dispatch([str(a) for a in argv])


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """Run every subcommand once on a tiny config; return the run directories."""
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "tiny.cfg"
    cfg.write_text(TINY)
    d = {k: root / k for k in ("data", "pre", "tw", "fw", "tr", "trf", "bl", "ab", "sf", "rs", "rep")}
    c = ("--config", cfg)
    assert run("synth", *c, "--out", d["data"]) == EXIT_OK
    assert run("preprocess", *c, "--data", d["data"], "--out", d["pre"]) == EXIT_OK
    assert run("train-weather", *c, "--data", d["data"], "--out", d["tw"]) == EXIT_OK
    assert run("forecast-weather", *c, "--data", d["data"], "--forecaster", d["tw"], "--out", d["fw"]) == EXIT_OK
    assert run("train", *c, "--data", d["data"], "--out", d["tr"]) == EXIT_OK
    assert run("train", *c, "--data", d["data"], "--weather", "forecast", "--forecast", d["fw"],
               "--out", d["trf"]) == EXIT_OK
    assert run("baselines", *c, "--data", d["data"], "--out", d["bl"]) == EXIT_OK
    assert run("ablate", *c, "--data", d["data"], "--out", d["ab"]) == EXIT_OK
    assert run("select-features", *c, "--data", d["data"], "--model", d["tr"], "--out", d["sf"]) == EXIT_OK
    assert run("retrain-subset", *c, "--data", d["data"], "--model", d["tr"], "--selection", d["sf"],
               "--out", d["rs"]) == EXIT_OK
    assert run("evaluate", *c, "--runs", d["tr"], d["bl"], d["ab"], d["sf"], d["rs"], "--out", d["rep"]) == EXIT_OK
    d["config"] = cfg
    return d


def test_every_run_writes_a_manifest(pipeline):
    for k, d in pipeline.items():
        if k != "config":
            m = json.loads((d / "manifest.json").read_text())
            assert set(m["outputs"]) == {p.name for p in d.iterdir() if p.is_file()} - {"manifest.json"}
            assert len(m["config_sha256"]) == 64


def test_pipeline_outputs(pipeline):
    assert {"genotype.csv", "weather.csv", "soil.csv", "performance.csv"} <= {p.name for p in pipeline["data"].iterdir()}
    assert len(pd.read_csv(pipeline["fw"] / "weather_forecast.csv")) == 8
    metrics = pd.read_csv(pipeline["bl"] / "metrics.csv")
    assert set(metrics["model"]) == {"lasso", "snn", "tree", "average"}
    assert len(pd.read_csv(pipeline["ab"] / "ablation.csv")) == 4
    sel = json.loads((pipeline["sf"] / "selection.json").read_text())
    assert len(sel["columns"]) == 70
    assert "predicted weather" in set(pd.read_csv(pipeline["trf"] / "metrics.csv")["label"])
    report = pd.read_csv(pipeline["rep"] / "metrics.csv")
    assert len(report) == 3 * (1 + 4 + 1)
    assert (pipeline["rep"] / "summary.md").is_file()


def test_rerun_is_bitwise_identical(pipeline, tmp_path):
    c = ("--config", pipeline["config"])
    assert run("synth", *c, "--out", tmp_path / "data") == EXIT_OK
    for name in ("genotype.csv", "weather.csv", "soil.csv", "performance.csv", "manifest.json"):
        assert (tmp_path / "data" / name).read_bytes() == (pipeline["data"] / name).read_bytes()
    assert run("train", *c, "--data", tmp_path / "data", "--out", tmp_path / "tr") == EXIT_OK
    for p in pipeline["tr"].iterdir():
        assert (tmp_path / "tr" / p.name).read_bytes() == p.read_bytes(), p.name


def test_existing_output_refused(pipeline):
    assert run("synth", "--config", pipeline["config"], "--out", pipeline["data"]) == EXIT_OUTPUT_EXISTS


def test_options_before_or_after_subcommand(pipeline, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("--config", pipeline["config"], "--out", a, "synth", "--seed", 3) == EXIT_OK
    assert run("synth", "--seed", 3, "--config", pipeline["config"], "--out", b) == EXIT_OK
    assert (a / "genotype.csv").read_bytes() == (b / "genotype.csv").read_bytes()
    assert (a / "genotype.csv").read_bytes() != (pipeline["data"] / "genotype.csv").read_bytes()


@pytest.mark.parametrize("argv,code", [
    (["nonsense"], EXIT_USAGE),
    (["synth", "--bogus"], EXIT_USAGE),
    ([], EXIT_USAGE),
    (["synth"], EXIT_USAGE),
    (["synth", "--set", "synth.n_hybrids=abc"], EXIT_CONFIG),
    (["synth", "--set", "nosuch.key=1"], EXIT_CONFIG),
    (["synth", "--set", "synth.n_hybrids=-4"], EXIT_CONFIG),
    (["synth", "--config", "/nonexistent.cfg"], EXIT_MISSING),
    (["train", "--data", "/nonexistent"], EXIT_MISSING),
])
def test_exit_codes(argv, code, tmp_path):
    if argv and argv[0] == "synth" and "--bogus" not in argv and len(argv) > 1:
        argv = argv + ["--out", str(tmp_path / "o")]
    if argv and argv[0] == "train":
        argv = argv + ["--out", str(tmp_path / "o")]
    assert dispatch(argv) == code


def test_missing_artifacts(pipeline, tmp_path):
    c = ("--config", pipeline["config"])
    assert run("select-features", *c, "--data", pipeline["data"], "--model", tmp_path / "none",
               "--out", tmp_path / "o1") == EXIT_MISSING
    assert run("evaluate", *c, "--runs", pipeline["data"], "--out", tmp_path / "o2") == EXIT_MISSING
    assert run("train", *c, "--data", pipeline["data"], "--weather", "forecast", "--out", tmp_path / "o3") == EXIT_MISSING


def test_bad_data(pipeline, tmp_path):
    data = tmp_path / "data"
    data.mkdir()
    for p in pipeline["data"].iterdir():
        (data / p.name).write_bytes(p.read_bytes())
    lines = (data / "genotype.csv").read_text().splitlines()
    lines[1] = lines[1].rsplit(",", 1)[0] + ",7"
    (data / "genotype.csv").write_text("\n".join(lines) + "\n")
    assert run("preprocess", "--config", pipeline["config"], "--data", data, "--out", tmp_path / "o") == EXIT_DATA


def test_help_and_version(capsys):
    assert dispatch(["--version"]) == EXIT_OK
    assert dispatch(["train", "--help"]) == EXIT_OK
    assert "exit codes" in capsys.readouterr().out


def test_config_layering(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("train.max_iterations = 500\nnetwork.hidden_width = 20\n")
    c = load_config(cfg, ["train.max_iterations=700"], "paper")
    assert c["train"]["max_iterations"] == 700
    assert c["network"]["hidden_layers"] == 21 and c["network"]["hidden_width"] == 20
    assert load_config()["network"]["hidden_layers"] == 6
