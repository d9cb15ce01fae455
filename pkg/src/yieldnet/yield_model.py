"""Dual-network yield model: one network for yield, one for check yield.

The yield-difference prediction is the difference of the two outputs.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .container import canonical_json, load_container, save_container
from .data_model import DataError, FieldTrialDataset
from .nn import NetworkSpec, TrainConfig, TrainedNetwork, desk_spec, fit_network
from .preprocess import PreprocessFit, assemble_design

logger = logging.getLogger(__name__)

PAIR_KIND = "yield_model_pair"
SOURCES = ("G", "S", "W", "AVERAGE")
_SOURCE_GROUPS = {"G": ("marker",), "S": ("soil",), "W": ("weather",)}


@dataclass(frozen=True)
class PredictionTriplet:
    """Per-row predictions; ``difference`` is exactly ``yields - checks``."""

    yields: np.ndarray
    checks: np.ndarray
    difference: np.ndarray

    @classmethod
    def from_outputs(cls, yields, checks) -> PredictionTriplet:
        y = np.asarray(yields, dtype=np.float64)
        c = np.asarray(checks, dtype=np.float64)
        if y.shape != c.shape:
            raise ValueError("yield and check-yield predictions differ in length")
        return cls(y, c, y - c)

    def __len__(self) -> int:
        return len(self.yields)


def pair_seeds(master_seed: int) -> tuple[int, int]:
    """Two independent seeds derived from one master seed."""
    a, b = np.random.SeedSequence(master_seed).spawn(2)
    return int(a.generate_state(1)[0]), int(b.generate_state(1)[0])


@dataclass
class YieldModelPair:
    yield_net: TrainedNetwork
    check_net: TrainedNetwork
    fit: PreprocessFit

    def __post_init__(self):
        if self.yield_net.spec.input_dim != self.fit.width or self.check_net.spec.input_dim != self.fit.width:
            raise ValueError("both networks must consume the preprocessing fit's design layout")

    def design(self, dataset: FieldTrialDataset) -> np.ndarray:
        return assemble_design(dataset, self.fit)[0]

    def predict_design(self, design) -> PredictionTriplet:
        return PredictionTriplet.from_outputs(self.yield_net.predict(design), self.check_net.predict(design))

    def save(self, path):
        ym, ya = self.yield_net.to_container("yield.")
        cm, ca = self.check_net.to_container("check.")
        save_container(path, {"fit": self.fit.to_dict(), "yield": ym, "check": cm}, {**ya, **ca}, PAIR_KIND)

    @classmethod
    def load(cls, path) -> YieldModelPair:
        meta, arrays = load_container(path, PAIR_KIND)
        ya = {k: v for k, v in arrays.items() if k.startswith("yield.")}
        ca = {k: v for k, v in arrays.items() if k.startswith("check.")}
        return cls(TrainedNetwork.from_container(meta["yield"], ya, "yield."),
                   TrainedNetwork.from_container(meta["check"], ca, "check."),
                   PreprocessFit.from_dict(meta["fit"]))


def train_pair(train: FieldTrialDataset, spec: NetworkSpec | None = None, config: TrainConfig = TrainConfig(),
               fit: PreprocessFit | None = None, validation: FieldTrialDataset | None = None,
               seeds: tuple[int, int] | None = None) -> YieldModelPair:
    """Train the yield and check-yield networks on the same design.

    Seeds come from ``config.seed`` through :func:`pair_seeds` unless given.
    ``spec`` defaults to the desk-scale network for the design width.
    """
    if train.n == 0:
        raise DataError("training set is empty")
    design, fit = assemble_design(train, fit)
    if spec is None:
        spec = desk_spec(design.shape[1])
    if spec.input_dim != design.shape[1]:
        raise ValueError(f"spec input_dim {spec.input_dim} != design width {design.shape[1]}")
    s_yield, s_check = pair_seeds(config.seed) if seeds is None else seeds
    vdesign = assemble_design(validation, fit)[0] if validation is not None else None
    nets = []
    for seed, target, vtarget in ((s_yield, train.yields, None if validation is None else validation.yields),
                                  (s_check, train.check_yields, None if validation is None else validation.check_yields)):
        val = None if vdesign is None else (vdesign, vtarget)
        nets.append(fit_network(spec, replace(config, seed=seed), design, target, validation=val))
    return YieldModelPair(nets[0], nets[1], fit)


def predict_triplet(pair: YieldModelPair, dataset: FieldTrialDataset) -> PredictionTriplet:
    return pair.predict_design(pair.design(dataset))


@dataclass(frozen=True)
class AblationResult:
    source: str
    n_features: int
    train_rmse: float
    train_pearson: float
    validation_rmse: float
    validation_pearson: float
    validation_predictions: np.ndarray

    def row(self) -> dict:
        d = asdict(self)
        d.pop("validation_predictions")
        return d


def ablation_single_source(train: FieldTrialDataset, validation: FieldTrialDataset, source: str,
                           spec: NetworkSpec | None = None, config: TrainConfig = TrainConfig(),
                           fit: PreprocessFit | None = None, response: str = "yield") -> AblationResult:
    """Train on one feature group only (G markers, S soil, W weather) or predict the mean.

    ``spec`` is reused with its input width replaced by the group's width.
    """
    from .evaluate import metrics

    source = source.upper()
    if source not in SOURCES:
        raise ValueError(f"source must be one of {SOURCES}, got {source!r}")
    if train.n == 0 or validation.n == 0:
        raise DataError("ablation needs non-empty training and validation sets")
    y_train = _response(train, response)
    y_val = _response(validation, response)
    if source == "AVERAGE":
        mean = float(y_train.mean())
        tr, vp = np.full(len(y_train), mean), np.full(len(y_val), mean)
        n_features = 0
    else:
        if fit is None:
            fit = assemble_design(train)[1]
        fit = fit.restricted(fit.group_columns(*_SOURCE_GROUPS[source]))
        x_train = assemble_design(train, fit)[0]
        x_val = assemble_design(validation, fit)[0]
        base = spec if spec is not None else desk_spec(x_train.shape[1])
        net = fit_network(replace(base, input_dim=x_train.shape[1]), config, x_train, y_train)
        tr, vp = net.predict(x_train), net.predict(x_val)
        n_features = x_train.shape[1]
    mt, mv = metrics(tr, y_train), metrics(vp, y_val)
    return AblationResult(source, n_features, mt.rmse, mt.pearson_percent, mv.rmse, mv.pearson_percent, vp)


def _response(dataset: FieldTrialDataset, response: str) -> np.ndarray:
    if response == "yield":
        return dataset.yields
    if response == "check_yield":
        return dataset.check_yields
    if response == "yield_difference":
        return dataset.yield_differences
    raise ValueError(f"unknown response {response!r}")


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass(frozen=True)
class PipelineArtifacts:
    """Preprocessing fit, the model pair and a manifest, stored side by side."""

    directory: Path

    @property
    def fit_path(self) -> Path:
        return self.directory / "preprocess_fit.json"

    @property
    def pair_path(self) -> Path:
        return self.directory / "model_pair.npz"

    @property
    def manifest_path(self) -> Path:
        return self.directory / "manifest.json"

    def write(self, pair: YieldModelPair, config: dict) -> dict:
        self.directory.mkdir(parents=True, exist_ok=True)
        pair.fit.save(self.fit_path)
        pair.save(self.pair_path)
        manifest = {
            "config": config,
            "config_sha256": hashlib.sha256(canonical_json(config).encode()).hexdigest(),
            "files": {p.name: file_digest(p) for p in (self.fit_path, self.pair_path)},
        }
        self.manifest_path.write_text(canonical_json(manifest))
        return manifest

    def read(self) -> YieldModelPair:
        if not self.pair_path.is_file():
            raise FileNotFoundError(self.pair_path)
        return YieldModelPair.load(self.pair_path)
