"""Adam, the step-halving learning-rate schedule and the minibatch trainer."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .network import (
    INFER, TRAIN, Gradients, NetworkError, NetworkParams, NetworkSpec, backward, compute_loss, forward,
    update_running_stats, xavier_init,
)

logger = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    base_lr: float = 3e-4
    lr_halving_period: int = 50_000
    batch_size: int = 64
    max_iterations: int = 30_000
    l1_lambda: float = 1e-4
    l2_lambda: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    bn_momentum: float = 0.99
    log_every: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.base_lr <= 0 or self.lr_halving_period <= 0:
            raise ValueError("learning rate and halving period must be positive")
        if self.batch_size < 1 or self.max_iterations < 0:
            raise ValueError("batch_size must be >= 1 and max_iterations >= 0")
        if self.l1_lambda < 0 or self.l2_lambda < 0:
            raise ValueError("regularization strengths must be non-negative")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1 and self.eps > 0):
            raise ValueError("invalid Adam constants")
        if not 0 <= self.bn_momentum < 1:
            raise ValueError("bn_momentum must lie in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


FULL_SCALE_TRAIN_CONFIG = TrainConfig(max_iterations=300_000)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, flat: np.ndarray, config: TrainConfig | None = None) -> AdamState:
        cfg = config or TrainConfig()
        return cls(np.zeros_like(flat), np.zeros_like(flat), 0, cfg.beta1, cfg.beta2, cfg.eps)


def adam_step(params, gradients, state: AdamState, lr: float):
    """One bias-corrected Adam update, in place on ``params``.

    ``params`` and ``gradients`` may be flat arrays or objects exposing a
    ``flat`` buffer.  Returns ``(params, state)``.
    """
    p = params if isinstance(params, np.ndarray) else params.flat
    g = gradients if isinstance(gradients, np.ndarray) else gradients.flat
    if p.shape != g.shape or state.m.shape != p.shape:
        raise ValueError("parameter, gradient and moment shapes differ")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    m, v = state.m, state.v
    tmp = np.multiply(g, g)
    m *= b1
    m += (1.0 - b1) * g
    v *= b2
    tmp *= 1.0 - b2
    v += tmp
    # p -= lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
    np.sqrt(v, out=tmp)
    tmp *= 1.0 / np.sqrt(1.0 - b2**state.t)
    tmp += state.eps
    np.divide(m, tmp, out=tmp)
    tmp *= lr / (1.0 - b1**state.t)
    p -= tmp
    if not isinstance(params, np.ndarray):
        params.version += 1
    return params, state


def lr_at(iteration: int, config: TrainConfig) -> float:
    if iteration < 0:
        raise ValueError("iteration must be non-negative")
    return math.ldexp(config.base_lr, -(iteration // config.lr_halving_period))


@dataclass
class TrainingLog:
    iterations: list[int] = field(default_factory=list)
    loss: list[float] = field(default_factory=list)
    validation_rmse: list[float] = field(default_factory=list)

    def record(self, iteration, loss, val_rmse=float("nan")):
        self.iterations.append(int(iteration))
        self.loss.append(float(loss))
        self.validation_rmse.append(float(val_rmse))

    def to_dict(self) -> dict:
        return asdict(self)


def minibatches(n: int, batch_size: int, rng: np.random.Generator, min_size: int = 1):
    """Endless epoch-wise shuffled index batches; a short tail is kept.

    A tail smaller than ``min_size`` is merged into the preceding batch.
    """
    while True:
        order = rng.permutation(n)
        starts = list(range(0, n, batch_size))
        if len(starts) > 1 and n - starts[-1] < min_size:
            starts.pop()
        for j, s in enumerate(starts):
            end = starts[j + 1] if j + 1 < len(starts) else n
            yield order[s:end]


def _loss_on(params, spec, x, y, config) -> float:
    pred, _ = forward(params, spec, x, mode=INFER)
    return compute_loss(pred, y, params, config.l1_lambda, config.l2_lambda)


def train_network(spec: NetworkSpec, config: TrainConfig, train_design, train_targets,
                  validation=None, params: NetworkParams | None = None):
    """Minibatch Adam training; returns ``(params, TrainingLog)``.

    ``validation`` is an optional ``(design, targets)`` pair whose RMSE is
    logged every ``config.log_every`` iterations.
    """
    x = np.ascontiguousarray(train_design, dtype=np.float64)
    y = np.ascontiguousarray(train_targets, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != spec.input_dim or y.shape != (x.shape[0],):
        raise ValueError(f"design {x.shape} and targets {y.shape} do not fit input_dim={spec.input_dim}")
    n = x.shape[0]
    needs_pairs = spec.batchnorm and spec.hidden_layers >= 2
    if needs_pairs and n < 2:
        raise ValueError("batch norm training needs at least 2 rows")

    params = xavier_init(spec, config.seed) if params is None else params
    grads = Gradients(spec)
    state = AdamState.zeros_like(params.flat, config)
    rng = np.random.default_rng([config.seed, 1])
    batches = minibatches(n, config.batch_size, rng, min_size=2 if needs_pairs else 1)
    log = TrainingLog()
    if validation is not None:
        vx = np.asarray(validation[0], dtype=np.float64)
        vy = np.asarray(validation[1], dtype=np.float64)

    def checkpoint(it):
        loss = _loss_on(params, spec, x, y, config) if n <= 20_000 else float("nan")
        val = float("nan")
        if validation is not None:
            vp, _ = forward(params, spec, vx, mode=INFER)
            val = float(np.sqrt(np.mean((vp - vy) ** 2)))
        log.record(it, loss, val)

    for it in range(config.max_iterations):
        if config.log_every and it % config.log_every == 0:
            checkpoint(it)
        idx = next(batches)
        xb, yb = x[idx], y[idx]
        try:
            pred, cache = forward(params, spec, xb, mode=TRAIN)
        except NetworkError as exc:
            raise TrainingError(f"iteration {it}: {exc}") from None
        with np.errstate(over="ignore", invalid="ignore"):
            mse = float(np.mean((pred - yb) ** 2))
        if not math.isfinite(mse):
            raise TrainingError(f"non-finite loss at iteration {it}")
        backward(cache, yb, params, spec, config.l1_lambda, config.l2_lambda, out=grads)
        update_running_stats(params, cache, config.bn_momentum)
        adam_step(params, grads, state, lr_at(it, config))
    checkpoint(config.max_iterations)
    if not math.isfinite(log.loss[-1]) and n <= 20_000:
        raise TrainingError(f"non-finite loss at iteration {config.max_iterations}")
    logger.debug("trained %s for %d iterations: loss %.5g", spec, config.max_iterations, log.loss[-1])
    return params, log

