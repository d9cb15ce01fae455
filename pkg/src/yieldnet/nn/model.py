"""Trained-network wrapper: target scaling, inference and checkpoints."""

from __future__ import annotations

import logging
from dataclasses import dataclass, fields

import numpy as np

from ..container import load_container, save_container
from .network import INFER, NetworkParams, NetworkSpec, forward
from .optim import TrainConfig, TrainingLog, train_network

logger = logging.getLogger(__name__)

CHECKPOINT_KIND = "network"
_PREDICT_CHUNK = 16_384


def predict(params: NetworkParams, spec: NetworkSpec, design) -> np.ndarray:
    """Inference-mode predictions; rows are processed independently."""
    x = np.asarray(design, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != spec.input_dim:
        raise ValueError(f"design width {x.shape[-1] if x.ndim else None} != input_dim {spec.input_dim}")
    if x.shape[0] <= _PREDICT_CHUNK:
        return forward(params, spec, x, INFER)[0]
    return np.concatenate([forward(params, spec, x[s:s + _PREDICT_CHUNK], INFER)[0]
                           for s in range(0, x.shape[0], _PREDICT_CHUNK)])


@dataclass
class TrainedNetwork:
    """A network trained on standardized targets.

    ``predict`` maps back to target units: ``shift + scale * raw``.
    """

    spec: NetworkSpec
    params: NetworkParams
    config: TrainConfig
    target_shift: float = 0.0
    target_scale: float = 1.0
    log: TrainingLog | None = None

    def predict(self, design) -> np.ndarray:
        return self.target_shift + self.target_scale * predict(self.params, self.spec, design)

    def to_container(self, prefix: str = ""):
        meta = {
            "spec": self.spec.to_dict(),
            "train_config": self.config.to_dict(),
            "target_shift": self.target_shift,
            "target_scale": self.target_scale,
            "version": self.params.version,
            "log": self.log.to_dict() if self.log else None,
        }
        arrays = {f"{prefix}flat": self.params.flat}
        arrays.update({f"{prefix}{k}": v for k, v in self.params.running.items()})
        return meta, arrays

    @classmethod
    def from_container(cls, meta: dict, arrays: dict, prefix: str = "") -> TrainedNetwork:
        spec = NetworkSpec(**meta["spec"])
        running = {k[len(prefix):]: v for k, v in arrays.items()
                   if k.startswith(prefix) and k[len(prefix):] != "flat"}
        params = NetworkParams(spec, np.array(arrays[f"{prefix}flat"], dtype=np.float64), running, meta["version"])
        known = {f.name for f in fields(TrainConfig)}
        config = TrainConfig(**{k: v for k, v in meta["train_config"].items() if k in known})
        log = TrainingLog(**meta["log"]) if meta.get("log") else None
        return cls(spec, params, config, float(meta["target_shift"]), float(meta["target_scale"]), log)

    def save(self, path):
        meta, arrays = self.to_container()
        save_container(path, meta, arrays, CHECKPOINT_KIND)

    @classmethod
    def load(cls, path) -> TrainedNetwork:
        meta, arrays = load_container(path, CHECKPOINT_KIND)
        return cls.from_container(meta, arrays)


def fit_network(spec: NetworkSpec, config: TrainConfig, design, targets, validation=None) -> TrainedNetwork:
    """Train on standardized targets and wrap the result.

    Constant targets skip training and give a constant predictor.
    """
    y = np.asarray(targets, dtype=np.float64)
    shift = float(y.mean())
    scale = float(y.std())
    if scale <= 1e-12:
        logger.warning("constant training targets (%.6g): fitting a constant predictor", shift)
        params = NetworkParams(spec)
        return TrainedNetwork(spec, params, config, shift, 1.0, TrainingLog())
    val = None
    if validation is not None:
        val = (validation[0], (np.asarray(validation[1], dtype=np.float64) - shift) / scale)
    params, log = train_network(spec, config, design, (y - shift) / scale, validation=val)
    if val is not None:
        log.validation_rmse = [v * scale for v in log.validation_rmse]
    return TrainedNetwork(spec, params, config, shift, scale, log)
