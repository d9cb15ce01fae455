"""Command-line pipeline: ``yieldnet <subcommand> [options]``.

Configuration is layered: built-in defaults, then an optional flat
``section.key = value`` file (``--config``), then ``--set section.key=value``
flags.  ``--profile paper`` switches to the 21-layer / 300,000-iteration
network before the file and flags are applied.

Every run writes into a fresh ``--out`` directory together with a
``manifest.json`` holding the merged configuration, its hash and SHA-256
digests of all inputs and outputs.  Manifests carry no timestamps or
absolute paths, so identical runs produce identical bytes.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from dataclasses import asdict, fields, replace
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .baselines import MODEL_KINDS, SHALLOW_TRAIN_CONFIG, fit_dual, save_model
from .container import canonical_json
from .data_model import (
    DataError, FieldTrialDataset, SplitRule, ingest_dir, join_trials, read_weather, split_by_year,
)
from .evaluate import (
    Report, build_report, distribution_summary, metrics, per_location_errors, triplet_rows,
    variance_identity_check,
)
from .feature_select import SelectionError, activated_neuron_mask, effects_via_guided_backprop, select_top_features
from .nn import NetworkSpec, TrainConfig, TrainingError
from .preprocess import PreprocessError, PreprocessFit, assemble_design
from .synth import SynthConfig, generate_synthetic, write_synthetic
from .weather_forecast import (
    WEATHER_TRAIN_CONFIG, ForecastConfig, ForecastError, WeatherForecaster, build_lag_samples, forecast_year,
    train_forecasters,
)
from .yield_model import PipelineArtifacts, YieldModelPair, ablation_single_source, train_pair

logger = logging.getLogger("yieldnet")

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_MISSING = 4
EXIT_DATA = 5
EXIT_TRAINING = 6
EXIT_OUTPUT_EXISTS = 7

EXIT_TABLE = """exit codes:
  0  success
  1  unexpected internal error
  2  usage error (unknown subcommand or option)
  3  invalid configuration
  4  missing inputs or artifacts
  5  invalid input data
  6  training failed
  7  output directory exists and is not empty"""


class CliError(Exception):
    def __init__(self, code: int, category: str, message: str):
        super().__init__(message)
        self.code = code
        self.category = category


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def default_config() -> dict[str, dict]:
    synth = asdict(SynthConfig())
    train = TrainConfig().to_dict()
    train.pop("seed")
    weather = {"lag": 4, "hidden_width": 10, "activation": "tanh", "year": 2016,
               **{k: v for k, v in WEATHER_TRAIN_CONFIG.to_dict().items() if k != "seed"}}
    return {
        "run": {"seed": 0},
        "synth": synth,
        "preprocess": {"call_rate": 0.97, "maf": 0.01},
        "split": {k: v for k, v in asdict(SplitRule()).items()},
        "network": {"hidden_layers": 6, "hidden_width": 50, "maxout_pieces": 2, "residual": True,
                    "batchnorm": True},
        "train": train,
        "weather": weather,
        "baselines": {"lam": 0.2, "snn_width": 300, "snn_iterations": SHALLOW_TRAIN_CONFIG.max_iterations,
                      "snn_lr": SHALLOW_TRAIN_CONFIG.base_lr, "tree_max_depth": 10, "tree_min_samples_split": 2},
        "select": {"n_markers": 50, "n_environment": 20, "threshold": 0.0},
        "report": {"location_threshold": 15.0, "n_bins": 20},
    }


FULL_SCALE_PROFILE = {"network.hidden_layers": "21", "train.max_iterations": "300000"}


def _coerce(text: str, like, key: str):
    text = text.strip()
    try:
        if isinstance(like, bool):
            if text.lower() in ("true", "1", "yes"):
                return True
            if text.lower() in ("false", "0", "no"):
                return False
            raise ValueError(text)
        if isinstance(like, int):
            return int(text)
        if isinstance(like, float):
            return float(text)
        if isinstance(like, (tuple, list)):
            parts = [p for p in text.replace("(", "").replace(")", "").split(",") if p.strip()]
            return tuple(_coerce(p, like[0], key) for p in parts)
        return text
    except ValueError:
        raise CliError(EXIT_CONFIG, "invalid config", f"{key}: cannot parse {text!r} as {type(like).__name__}") from None


def apply_setting(config: dict, assignment: str, origin: str = "--set"):
    if "=" not in assignment:
        raise CliError(EXIT_CONFIG, "invalid config", f"{origin}: expected section.key=value, got {assignment!r}")
    key, value = (s.strip() for s in assignment.split("=", 1))
    if "." not in key:
        raise CliError(EXIT_CONFIG, "invalid config", f"{origin}: key {key!r} lacks a section prefix")
    section, name = key.split(".", 1)
    if section not in config or name not in config[section]:
        raise CliError(EXIT_CONFIG, "invalid config", f"{origin}: unknown setting {key!r}")
    config[section][name] = _coerce(value, config[section][name], key)


def load_config(path=None, settings=(), profile: str = "desk") -> dict:
    """Defaults, then profile, then file, then ``--set`` flags."""
    config = default_config()
    if profile == "paper":
        for k, v in FULL_SCALE_PROFILE.items():
            apply_setting(config, f"{k}={v}", "profile")
    elif profile != "desk":
        raise CliError(EXIT_CONFIG, "invalid config", f"unknown profile {profile!r}")
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise CliError(EXIT_MISSING, "missing inputs", f"config file not found: {p}")
        for lineno, line in enumerate(p.read_text().splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if line:
                apply_setting(config, line, f"{p.name}:{lineno}")
    for s in settings:
        apply_setting(config, s)
    _validate(config)
    return config


def _validate(config: dict):
    try:
        synth_config(config)
        train_config(config)
        split_rule(config)
        forecast_config(config)
        network_spec(config, 1)
    except (TypeError, ValueError) as exc:
        raise CliError(EXIT_CONFIG, "invalid config", str(exc)) from None


def config_hash(config: dict) -> str:
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()


def synth_config(config) -> SynthConfig:
    return SynthConfig(**{**config["synth"], "years": tuple(config["synth"]["years"]),
                          "allele_freq_range": tuple(config["synth"]["allele_freq_range"])})


def train_config(config, seed_offset: int = 0) -> TrainConfig:
    return TrainConfig(**config["train"], seed=config["run"]["seed"] + seed_offset)


def split_rule(config) -> SplitRule:
    return SplitRule(**config["split"])


def network_spec(config, input_dim: int) -> NetworkSpec:
    return NetworkSpec(input_dim=input_dim, **config["network"])


def forecast_config(config) -> ForecastConfig:
    w = dict(config["weather"])
    train_keys = {f.name for f in fields(TrainConfig)}
    train = TrainConfig(**{k: v for k, v in w.items() if k in train_keys}, seed=config["run"]["seed"])
    return ForecastConfig(lag=w["lag"], hidden_width=w["hidden_width"], activation=w["activation"], train=train)


# ---------------------------------------------------------------------------
# run directories
# ---------------------------------------------------------------------------

def digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def fresh_dir(path) -> Path:
    d = Path(path)
    if d.exists() and (not d.is_dir() or any(d.iterdir())):
        raise CliError(EXIT_OUTPUT_EXISTS, "output exists", f"output directory {d} exists and is not empty")
    d.mkdir(parents=True, exist_ok=True)
    return d


def require(path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise CliError(EXIT_MISSING, "missing artifacts", f"{what} not found: {p}")
    return p


def write_manifest(out: Path, command: str, config: dict, inputs: dict[str, Path], extra: dict | None = None):
    outputs = {p.name: digest(p) for p in sorted(out.iterdir()) if p.is_file() and p.name != "manifest.json"}
    manifest = {
        "command": command,
        "version": __version__,
        "seed": config["run"]["seed"],
        "config": config,
        "config_sha256": config_hash(config),
        "inputs": {k: digest(v) for k, v in sorted(inputs.items())},
        "outputs": outputs,
        **(extra or {}),
    }
    (out / "manifest.json").write_text(canonical_json(manifest) + "\n")


def data_inputs(data_dir: Path) -> dict[str, Path]:
    return {f"data/{n}": data_dir / n for n in ("genotype.csv", "weather.csv", "soil.csv", "performance.csv")}


def load_dataset(data_dir) -> FieldTrialDataset:
    d = require(data_dir, "data directory")
    for p in data_inputs(d).values():
        require(p, "input table")
    markers, env, perf = ingest_dir(d)
    return join_trials(markers, env, perf), env


def _write_csv(df: pd.DataFrame, path: Path):
    df.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")


def _predictions_frame(dataset: FieldTrialDataset, triplet, split: str) -> pd.DataFrame:
    return pd.DataFrame({
        "hybrid_id": dataset.hybrid_ids, "location_id": dataset.location_ids, "year": dataset.years,
        "split": split, "yield": dataset.yields, "check_yield": dataset.check_yields,
        "pred_yield": triplet.yields, "pred_check_yield": triplet.checks, "pred_yield_difference": triplet.difference,
    })


def _metric_frame(rows) -> pd.DataFrame:
    return pd.DataFrame([asdict(r) for r in rows])


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_synth(args, config):
    if args.seed is not None:
        config["synth"]["seed"] = args.seed
    out = fresh_dir(args.out)
    write_synthetic(out, *generate_synthetic(synth_config(config)))
    write_manifest(out, "synth", config, {})


def cmd_preprocess(args, config):
    data = Path(args.data)
    ds, _ = load_dataset(data)
    split = split_by_year(ds, split_rule(config))
    design, fit = assemble_design(split.train, call_rate=config["preprocess"]["call_rate"],
                                  maf=config["preprocess"]["maf"])
    out = fresh_dir(args.out)
    fit.save(out / "preprocess_fit.json")
    meta = {"design_width": fit.width, "n_markers": fit.n_markers, "n_train": split.train.n,
            "n_validation": split.validation.n, "split_rule": split.rule, "rejected_rows": len(ds.rejections)}
    (out / "design.json").write_text(canonical_json(meta) + "\n")
    write_manifest(out, "preprocess", config, data_inputs(data))


def cmd_train_weather(args, config):
    data = Path(args.data)
    _, env = load_dataset(data)
    fcfg = forecast_config(config)
    until = args.until_year if args.until_year is not None else config["weather"]["year"] - 1
    samples = build_lag_samples(env, fcfg.lag, until_year=until)
    forecaster = train_forecasters(samples, fcfg)
    out = fresh_dir(args.out)
    forecaster.save(out / "forecaster.npz")
    write_manifest(out, "train-weather", config, data_inputs(data),
                   {"samples_per_variable": len(samples), "last_target_year": until})


def cmd_forecast_weather(args, config):
    data = Path(args.data)
    fpath = require(Path(args.forecaster) / "forecaster.npz" if Path(args.forecaster).is_dir() else args.forecaster,
                    "forecaster bundle")
    _, env = load_dataset(data)
    year = args.year if args.year is not None else config["weather"]["year"]
    fc = forecast_year(WeatherForecaster.load(fpath), env, year)
    out = fresh_dir(args.out)
    fc.write(out / "weather_forecast.csv")
    write_manifest(out, "forecast-weather", config, {**data_inputs(data), "forecaster": fpath},
                   {"year": year, "locations_lacking_window": fc.lacking_window})


def _forecast_dataset(dataset: FieldTrialDataset, env, forecast_dir) -> tuple[FieldTrialDataset, Path]:
    fpath = require(Path(forecast_dir) / "weather_forecast.csv" if Path(forecast_dir).is_dir() else forecast_dir,
                    "weather forecast")
    locs, years, weather = read_weather(fpath)
    for year in sorted(set(years.tolist())):
        sel = years == year
        env = env.with_weather([loc for loc, s in zip(locs, sel) if s], year, weather[sel])
    return dataset.with_environment(env), fpath


def cmd_train(args, config):
    data = Path(args.data)
    ds, env = load_dataset(data)
    split = split_by_year(ds, split_rule(config))
    fit = assemble_design(split.train, call_rate=config["preprocess"]["call_rate"],
                          maf=config["preprocess"]["maf"])[1]
    inputs = data_inputs(data)
    validation = split.validation
    label = "observed weather"
    if args.weather == "forecast":
        if args.forecast is None:
            raise CliError(EXIT_MISSING, "missing inputs", "--weather forecast needs --forecast DIR")
        fds, fpath = _forecast_dataset(ds, env, args.forecast)
        validation = fds.subset(split.validation_index)
        inputs["forecast"] = fpath
        label = "predicted weather"
    pair = train_pair(split.train, network_spec(config, fit.width), train_config(config), fit)
    out = fresh_dir(args.out)
    PipelineArtifacts(out).write(pair, config)
    tr = pair.predict_design(pair.design(split.train))
    va = pair.predict_design(pair.design(validation))
    _write_csv(pd.concat([_predictions_frame(split.train, tr, "train"),
                          _predictions_frame(validation, va, "validation")], ignore_index=True),
               out / "predictions.csv")
    _write_csv(_metric_frame(triplet_rows("DNN", tr, split.train, va, validation, label)), out / "metrics.csv")
    (out / "manifest.json").unlink()
    write_manifest(out, "train", config, inputs, {"weather": label})


def cmd_baselines(args, config):
    data = Path(args.data)
    ds, _ = load_dataset(data)
    split = split_by_year(ds, split_rule(config))
    x, fit = assemble_design(split.train, call_rate=config["preprocess"]["call_rate"],
                             maf=config["preprocess"]["maf"])
    v = assemble_design(split.validation, fit)[0]
    b = config["baselines"]
    kinds = MODEL_KINDS if args.model == "all" else (args.model,)
    out = fresh_dir(args.out)
    rows, frames = [], []
    for kind in kinds:
        snn_cfg = replace(SHALLOW_TRAIN_CONFIG, max_iterations=b["snn_iterations"], base_lr=b["snn_lr"],
                          seed=config["run"]["seed"])
        model = fit_dual(kind, x, split.train.yields, split.train.check_yields, lam=b["lam"], config=snn_cfg,
                         width=b["snn_width"], max_depth=b["tree_max_depth"],
                         min_samples_split=b["tree_min_samples_split"])
        save_model(model.yield_model, out / f"{kind}_yield.npz")
        save_model(model.check_model, out / f"{kind}_check_yield.npz")
        if kind == "tree":
            names = fit.feature_names()
            (out / "tree_yield_rules.txt").write_text("\n".join(model.yield_model.rules(names)) + "\n")
        tr, va = model.predict(x), model.predict(v)
        rows += triplet_rows(kind, tr, split.train, va, split.validation)
        frames.append(_predictions_frame(split.validation, va, "validation").assign(model=kind))
    _write_csv(_metric_frame(rows), out / "metrics.csv")
    _write_csv(pd.concat(frames, ignore_index=True), out / "predictions.csv")
    write_manifest(out, "baselines", config, data_inputs(data))


def cmd_ablate(args, config):
    data = Path(args.data)
    ds, _ = load_dataset(data)
    split = split_by_year(ds, split_rule(config))
    fit = assemble_design(split.train, call_rate=config["preprocess"]["call_rate"],
                          maf=config["preprocess"]["maf"])[1]
    sources = ("G", "S", "W", "AVERAGE") if args.source == "all" else (args.source.upper(),)
    out = fresh_dir(args.out)
    rows = []
    for src in sources:
        r = ablation_single_source(split.train, split.validation, src, network_spec(config, 1),
                                   train_config(config), fit)
        rows.append({**r.row(), "source": "Average" if src == "AVERAGE" else f"DNN({src})"})
    _write_csv(pd.DataFrame(rows), out / "ablation.csv")
    write_manifest(out, "ablate", config, data_inputs(data))


def cmd_select_features(args, config):
    data = Path(args.data)
    model_dir = require(args.model, "model run directory")
    art = PipelineArtifacts(model_dir)
    require(art.pair_path, "model pair")
    ds, _ = load_dataset(data)
    split = split_by_year(ds, split_rule(config))
    pair = art.read()
    v = pair.design(split.validation)
    s = config["select"]
    mask = activated_neuron_mask(pair, v, s["threshold"])
    report = effects_via_guided_backprop(pair, v, mask)
    selected = select_top_features(report, s["n_markers"], s["n_environment"])
    out = fresh_dir(args.out)
    report.write_csv(out / "effects.csv")
    names = pair.fit.restricted(None).feature_names()
    (out / "selection.json").write_text(canonical_json(
        {"columns": selected, "features": [names[c] for c in selected], "active_neurons": int(mask.sum())}) + "\n")
    write_manifest(out, "select-features", config, {**data_inputs(data), "model_pair": art.pair_path})


def cmd_retrain_subset(args, config):
    data = Path(args.data)
    sel_path = require(Path(args.selection) / "selection.json", "feature selection")
    model_dir = require(args.model, "model run directory")
    fit_path = require(PipelineArtifacts(model_dir).fit_path, "preprocessing fit")
    ds, _ = load_dataset(data)
    split = split_by_year(ds, split_rule(config))
    columns = json.loads(sel_path.read_text())["columns"]
    fit = PreprocessFit.load(fit_path).restricted(columns)
    pair = train_pair(split.train, network_spec(config, fit.width), train_config(config), fit)
    out = fresh_dir(args.out)
    PipelineArtifacts(out).write(pair, config)
    tr = pair.predict_design(pair.design(split.train))
    va = pair.predict_design(pair.design(split.validation))
    _write_csv(_predictions_frame(split.validation, va, "validation"), out / "predictions.csv")
    _write_csv(_metric_frame(triplet_rows(f"DNN subset ({len(columns)} features)", tr, split.train, va,
                                          split.validation)), out / "metrics.csv")
    (out / "manifest.json").unlink()
    write_manifest(out, "retrain-subset", config, {**data_inputs(data), "selection": sel_path, "fit": fit_path})


def cmd_evaluate(args, config):
    runs = [Path(r) for r in args.runs]
    metric_files = [r / "metrics.csv" for r in runs if (r / "metrics.csv").is_file()]
    if not metric_files:
        raise CliError(EXIT_MISSING, "missing artifacts",
                       "no metrics.csv in the given run directories; run train or baselines first")
    from .evaluate import MetricsRow

    rows, ablation, inputs = [], [], {}
    per_location, identity, dists, effects = {}, {}, {}, None
    for r in runs:
        require(r, "run directory")
        mf = r / "metrics.csv"
        if mf.is_file():
            inputs[f"{r.name}/metrics.csv"] = mf
            df = pd.read_csv(mf, keep_default_na=False, float_precision="round_trip")
            rows += [MetricsRow(**rec) for rec in df.to_dict("records")]
        pf = r / "predictions.csv"
        if pf.is_file():
            inputs[f"{r.name}/predictions.csv"] = pf
            pdf = pd.read_csv(pf, dtype={"hybrid_id": str, "location_id": str}, float_precision="round_trip")
            pdf = pdf[pdf["split"] == "validation"]
            groups = pdf.groupby("model", sort=True) if "model" in pdf else [(r.name, pdf)]
            for name, g in groups:
                key = f"{r.name}:{name}" if "model" in pdf else r.name
                per_location[key] = per_location_errors(g["pred_yield"], g["yield"], g["location_id"],
                                                        config["report"]["location_threshold"])
                identity[key] = variance_identity_check(g["pred_yield"].to_numpy(), g["pred_check_yield"].to_numpy())
                dists[key] = distribution_summary(g["pred_yield"], g["yield"], config["report"]["n_bins"])
        af = r / "ablation.csv"
        if af.is_file():
            inputs[f"{r.name}/ablation.csv"] = af
            ablation += pd.read_csv(af, float_precision="round_trip").to_dict("records")
        ef = r / "effects.csv"
        if ef.is_file():
            inputs[f"{r.name}/effects.csv"] = ef
            effects = pd.read_csv(ef, float_precision="round_trip")
    out = fresh_dir(args.out)
    report = Report(rows, ablation, identity, per_location, dists, effects,
                    notes=["variance identity is checked on predicted yield and check yield of validation rows"],
                    manifest={"config_sha256": config_hash(config)})
    build_report(report, out)
    write_manifest(out, "evaluate", config, inputs)


COMMANDS = {
    "synth": cmd_synth, "preprocess": cmd_preprocess, "train-weather": cmd_train_weather,
    "forecast-weather": cmd_forecast_weather, "train": cmd_train, "baselines": cmd_baselines,
    "ablate": cmd_ablate, "select-features": cmd_select_features, "retrain-subset": cmd_retrain_subset,
    "evaluate": cmd_evaluate,
}


def _add_common(p: argparse.ArgumentParser, default):
    # accepted before or after the subcommand; the subcommand's copy wins
    def d(value):
        return argparse.SUPPRESS if default is argparse.SUPPRESS else value

    p.add_argument("--config", default=d(None), help="flat section.key = value configuration file")
    p.add_argument("--set", action="append", default=d([]), metavar="SECTION.KEY=VALUE",
                   help="override one setting (repeatable)")
    p.add_argument("--profile", choices=("desk", "paper"), default=d("desk"),
                   help="desk: 6 x 50 network, 30,000 iterations; paper: 21 x 50, 300,000")
    p.add_argument("--out", default=d(None), help="fresh output directory")
    p.add_argument("-v", "--verbose", action="store_true", default=d(False))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    _add_common(common, argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="yieldnet", description="Crop yield prediction pipeline.",
                                     epilog=EXIT_TABLE, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"yieldnet {__version__}")
    _add_common(parser, None)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    def add(name, help_text):
        p = sub.add_parser(name, parents=[common], help=help_text, epilog=EXIT_TABLE,
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        return p

    p = add("synth", "generate a synthetic dataset")
    p.add_argument("--seed", type=int)
    p = add("preprocess", "fit marker filtering and standardization")
    p.add_argument("--data", required=True)
    p = add("train-weather", "train the 72 weather forecasters")
    p.add_argument("--data", required=True)
    p.add_argument("--until-year", type=int, help="last target year used for training (default weather.year - 1)")
    p = add("forecast-weather", "forecast one year of weather")
    p.add_argument("--data", required=True)
    p.add_argument("--forecaster", required=True, help="train-weather run directory or bundle file")
    p.add_argument("--year", type=int)
    p = add("train", "train the yield / check-yield network pair")
    p.add_argument("--data", required=True)
    p.add_argument("--weather", choices=("true", "forecast"), default="true",
                   help="validation weather: observed or forecast-weather output")
    p.add_argument("--forecast", help="forecast-weather run directory or CSV")
    p = add("baselines", "fit lasso, shallow network, tree and average baselines")
    p.add_argument("--data", required=True)
    p.add_argument("--model", choices=MODEL_KINDS + ("all",), default="all")
    p = add("ablate", "single-source ablations")
    p.add_argument("--data", required=True)
    p.add_argument("--source", choices=("G", "S", "W", "average", "all"), default="all")
    p = add("select-features", "guided-backprop feature effects and top-k selection")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True, help="train run directory")
    p = add("retrain-subset", "retrain the pair on selected features")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True, help="train run directory (for the preprocessing fit)")
    p.add_argument("--selection", required=True, help="select-features run directory")
    p = add("evaluate", "assemble a report from run directories")
    p.add_argument("--runs", nargs="+", required=True)
    return parser


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.out is None:
            raise CliError(EXIT_USAGE, "usage", "--out is required")
        config = load_config(args.config, args.set, args.profile)
        COMMANDS[args.command](args, config)
    except CliError as exc:
        print(f"yieldnet {args.command}: {exc.category}: {exc}", file=sys.stderr)
        return exc.code
    except FileNotFoundError as exc:
        print(f"yieldnet {args.command}: missing inputs: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (DataError, PreprocessError, ForecastError, SelectionError) as exc:
        print(f"yieldnet {args.command}: invalid data: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingError as exc:
        print(f"yieldnet {args.command}: training failed: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    except Exception as exc:  # noqa: BLE001
        logger.exception("unexpected error")
        print(f"yieldnet {args.command}: unexpected error: {exc}", file=sys.stderr)
        return EXIT_UNEXPECTED
    return EXIT_OK


def main():
    sys.exit(dispatch())
