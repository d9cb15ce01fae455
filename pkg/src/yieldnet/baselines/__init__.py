"""Comparison models, each fitted to yield and check yield separately."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..container import container_kind, load_container, save_container
from ..nn import NetworkSpec, TrainConfig, TrainedNetwork, fit_network
from ..yield_model import PredictionTriplet
from .lasso import LASSO_KIND, LassoModel, fit_lasso, lambda_max, soft_threshold
from .tree import TREE_KIND, TreeModel, best_split, fit_regression_tree, training_sse

MODEL_KINDS = ("lasso", "snn", "tree", "average")
SHALLOW_TRAIN_CONFIG = TrainConfig(base_lr=1e-3, max_iterations=10_000, l1_lambda=0.0, l2_lambda=1e-4)


@dataclass
class AverageModel:
    """Predicts the training-target mean everywhere."""

    mean: float
    n_features: int

    def predict(self, design) -> np.ndarray:
        x = np.asarray(design)
        if x.ndim != 2 or x.shape[1] != self.n_features:
            raise ValueError(f"design has {x.shape[-1]} columns, model expects {self.n_features}")
        return np.full(x.shape[0], self.mean)


@dataclass
class ShallowNetModel:
    network: TrainedNetwork

    def predict(self, design) -> np.ndarray:
        return self.network.predict(design)


def shallow_spec(input_dim: int, width: int = 300, activation: str = "tanh") -> NetworkSpec:
    return NetworkSpec(input_dim=input_dim, hidden_layers=1, hidden_width=width, activation=activation,
                       residual=False, batchnorm=False)


def fit_shallow_net(design, targets, config: TrainConfig = SHALLOW_TRAIN_CONFIG, width: int = 300,
                    activation: str = "tanh") -> ShallowNetModel:
    x = np.asarray(design, dtype=np.float64)
    return ShallowNetModel(fit_network(shallow_spec(x.shape[1], width, activation), config, x, targets))


def fit_average(design, targets) -> AverageModel:
    return AverageModel(float(np.mean(targets)), int(np.shape(design)[1]))


def predict_model(model, design) -> np.ndarray:
    """Row-independent predictions of any baseline model."""
    return model.predict(design)


def fit_model(kind: str, design, targets, *, lam: float = 0.2, config: TrainConfig = SHALLOW_TRAIN_CONFIG,
              width: int = 300, max_depth: int = 10, min_samples_split: int = 2):
    if kind == "lasso":
        return fit_lasso(design, targets, lam)
    if kind == "snn":
        return fit_shallow_net(design, targets, config, width)
    if kind == "tree":
        return fit_regression_tree(design, targets, max_depth, min_samples_split)
    if kind == "average":
        return fit_average(design, targets)
    raise ValueError(f"unknown baseline {kind!r}; expected one of {MODEL_KINDS}")


@dataclass
class DualModel:
    """A baseline fitted twice: once to yield, once to check yield."""

    kind: str
    yield_model: object
    check_model: object

    def predict(self, design) -> PredictionTriplet:
        return PredictionTriplet.from_outputs(predict_model(self.yield_model, design),
                                              predict_model(self.check_model, design))


def fit_dual(kind: str, design, yields, checks, **kw) -> DualModel:
    """Fit ``kind`` to both responses; network seeds differ between the two fits."""
    kw2 = dict(kw)
    if kind == "snn":
        cfg = kw.get("config", SHALLOW_TRAIN_CONFIG)
        kw2["config"] = replace(cfg, seed=cfg.seed + 1)
    return DualModel(kind, fit_model(kind, design, yields, **kw), fit_model(kind, design, checks, **kw2))


def save_model(model, path):
    """Versioned single-model checkpoint."""
    if isinstance(model, LassoModel):
        meta, arrays = model.to_container()
        save_container(path, meta, arrays, LASSO_KIND)
    elif isinstance(model, TreeModel):
        meta, arrays = model.to_container()
        save_container(path, meta, arrays, TREE_KIND)
    elif isinstance(model, ShallowNetModel):
        model.network.save(path)
    elif isinstance(model, AverageModel):
        save_container(path, {"mean": model.mean, "n_features": model.n_features}, {}, "average")
    else:
        raise TypeError(f"cannot save {type(model).__name__}")


def load_model(path):
    meta, arrays = load_container(path)
    kind = container_kind(path)
    if kind == LASSO_KIND:
        return LassoModel.from_container(meta, arrays)
    if kind == TREE_KIND:
        return TreeModel.from_container(meta, arrays)
    if kind == "network":
        return ShallowNetModel(TrainedNetwork.from_container(meta, arrays))
    if kind == "average":
        return AverageModel(float(meta["mean"]), int(meta["n_features"]))
    raise ValueError(f"{path}: unknown model kind {kind!r}")
