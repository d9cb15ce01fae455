"""Central finite-difference verification of :func:`backward`."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .network import TRAIN, NetworkSpec, backward, compute_loss, forward, xavier_init


@dataclass
class TensorCheck:
    name: str
    shape: tuple
    max_rel_error: float
    checked: int
    skipped_kinks: int


@dataclass
class GradCheckReport:
    spec: NetworkSpec
    h: float
    tensors: list[TensorCheck] = field(default_factory=list)

    @property
    def max_rel_error(self) -> float:
        return max((t.max_rel_error for t in self.tensors), default=0.0)

    @property
    def worst(self) -> TensorCheck:
        return max(self.tensors, key=lambda t: t.max_rel_error)

    def lines(self) -> list[str]:
        return [f"{t.name:<20} {str(t.shape):<14} checked={t.checked:<5} kinks={t.skipped_kinks:<3} "
                f"max_rel={t.max_rel_error:.3e}" for t in self.tensors]


def relative_error(analytic, numeric, floor: float = 1e-5) -> np.ndarray:
    """|a - n| / max(|a|, |n|, floor).

    The floor keeps structurally-zero gradients (e.g. biases feeding a batch
    norm) from turning finite-difference round-off into unit relative error.
    """
    a, n = np.abs(analytic), np.abs(numeric)
    return np.abs(np.asarray(analytic) - np.asarray(numeric)) / np.maximum(np.maximum(a, n), floor)


def _argmaxes(cache):
    return [rec["argmax"] for rec in cache.layers if rec.get("argmax") is not None]


def gradient_check(spec: NetworkSpec, seed: int = 0, h: float = 1e-5, batch_size: int = 8,
                   l1_lambda: float = 0.0, l2_lambda: float = 0.0, floor: float = 1e-5) -> GradCheckReport:
    """Compare analytic gradients with central differences for every parameter.

    Parameters whose +-h perturbation flips a maxout argmax anywhere in the
    batch (or crosses the L1 kink at zero) are skipped and counted, since
    the loss is not differentiable there.
    """
    if spec.hidden_layers > 6 or spec.hidden_width > 8:
        raise ValueError("gradient_check is meant for small specs (<= 6 layers, width <= 8)")
    rng = np.random.default_rng(seed)
    params = xavier_init(spec, seed)
    for name, arr in params.items():
        if name.endswith(".bias") or name.endswith(".beta"):
            arr[...] = rng.normal(0.0, 0.3, size=arr.shape)
        elif name.endswith(".gamma"):
            arr[...] = rng.uniform(0.5, 1.5, size=arr.shape)
    x = rng.normal(size=(batch_size, spec.input_dim))
    y = rng.normal(size=batch_size)

    def loss_and_pattern():
        pred, cache = forward(params, spec, x, TRAIN)
        return compute_loss(pred, y, params, l1_lambda, l2_lambda), _argmaxes(cache)

    pred, cache = forward(params, spec, x, TRAIN)
    grads = backward(cache, y, params, spec, l1_lambda, l2_lambda)
    base_pattern = _argmaxes(cache)

    report = GradCheckReport(spec, h)
    pos = 0
    first_weight = "hidden1.weight" if spec.hidden_layers else None
    for name, shape in params.layout:
        size = int(np.prod(shape))
        analytic = grads.flat[pos:pos + size]
        numeric = np.empty(size)
        usable = np.ones(size, dtype=bool)
        for j in range(size):
            k = pos + j
            orig = params.flat[k]
            if l1_lambda and name == first_weight and abs(orig) < 2 * h:
                usable[j] = False
            params.flat[k] = orig + h
            lp, pat_p = loss_and_pattern()
            params.flat[k] = orig - h
            lm, pat_m = loss_and_pattern()
            params.flat[k] = orig
            numeric[j] = (lp - lm) / (2 * h)
            if any(not np.array_equal(a, b) for a, b in zip(base_pattern, pat_p)) or \
               any(not np.array_equal(a, b) for a, b in zip(base_pattern, pat_m)):
                usable[j] = False
        err = relative_error(analytic[usable], numeric[usable], floor)
        report.tensors.append(TensorCheck(name, tuple(shape), float(err.max(initial=0.0)),
                                          int(usable.sum()), int((~usable).sum())))
        pos += size
    return report
