"""Input-feature importance by guided backpropagation, and top-k selection.

The backward signal is seeded at the last hidden layer with 1 for every
"activated" neuron (mean inference-mode activation above a threshold) and
0 elsewhere.  At each activation site negative signals are zeroed before
the signal is routed to the winning maxout piece; batch norm passes the
signal through its inference-mode scale.  Residual shortcuts carry the
signal back to their source layer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .nn import INFER, NetworkSpec, TrainedNetwork, forward
from .nn.network import maxout_backward

_CHUNK = 4096
GROUPS = ("marker", "weather", "soil")


class SelectionError(ValueError):
    pass


def _network(model) -> TrainedNetwork:
    # a YieldModelPair contributes its yield network only
    return getattr(model, "yield_net", model)


def activated_neuron_mask(model, design, threshold: float = 0.0) -> np.ndarray:
    """Boolean mask over last-hidden-layer neurons with mean activation > ``threshold``."""
    net = _network(model)
    x = np.asarray(design, dtype=np.float64)
    if x.shape[0] == 0:
        raise SelectionError("activation mask needs a non-empty design")
    if net.spec.hidden_layers < 1:
        raise SelectionError("network has no hidden layer")
    total = np.zeros(net.spec.hidden_width)
    for s in range(0, x.shape[0], _CHUNK):
        _, cache = forward(net.params, net.spec, x[s:s + _CHUNK], INFER)
        total += cache.outputs[-1].sum(axis=0)
    mask = total / x.shape[0] > threshold
    if not mask.any():
        raise SelectionError(f"no last-layer neuron has mean activation above {threshold}; lower the threshold")
    return mask


def guided_signals(net: TrainedNetwork, x: np.ndarray, mask: np.ndarray, keep_sites: bool = False):
    """Input-space guided signal for each row of ``x``.

    Returns ``(signal, sites)``; ``sites`` lists the clipped signal at every
    activation site when ``keep_sites`` is set.
    """
    spec: NetworkSpec = net.spec
    params = net.params
    _, cache = forward(params, spec, x, INFER)
    n, k, w = x.shape[0], spec.pieces, spec.hidden_width
    sig = np.broadcast_to(mask.astype(np.float64), (n, w)).copy()
    pending: dict[int, np.ndarray] = {}
    sites = []
    for i in range(spec.hidden_layers, 0, -1):
        if i in pending:
            sig = sig + pending.pop(i)
        rec = cache.layers[i - 1]
        sig = np.maximum(sig, 0.0)
        if keep_sites:
            sites.append(sig)
        if spec.activation == "maxout":
            d = maxout_backward(sig, rec["argmax"], k)
        elif spec.activation == "tanh":
            d = sig * (1.0 - cache.outputs[i] ** 2)
        else:
            d = sig
        src = spec.skip_source(i)
        if src is not None:
            contrib = d.reshape(n, k, w).sum(axis=1)
            pending[src] = pending.get(src, 0.0) + contrib
        if spec.has_bn(i):
            d = d * (params[f"hidden{i}.gamma"].reshape(-1) * rec["inv"])
        sig = d @ params[f"hidden{i}.weight"].reshape(k * w, -1)
    if 0 in pending:
        sig = sig + pending.pop(0)
    return sig, sites


@dataclass(frozen=True)
class EffectReport:
    columns: np.ndarray  # design column index of each feature
    names: list[str]
    groups: np.ndarray
    raw: np.ndarray
    normalized: np.ndarray
    mask: np.ndarray

    def table(self) -> pd.DataFrame:
        return pd.DataFrame({"column": self.columns, "feature": self.names, "group": self.groups,
                             "raw": self.raw, "normalized": self.normalized})

    def write_csv(self, path):
        self.table().to_csv(path, index=False, float_format="%.17g", lineterminator="\n")


def group_normalize(raw: np.ndarray, groups) -> np.ndarray:
    raw = np.asarray(raw, dtype=np.float64)
    groups = np.asarray(groups, dtype=object)
    out = np.zeros_like(raw)
    for g in np.unique(groups):
        sel = groups == g
        top = raw[sel].max()
        if top > 0:
            out[sel] = raw[sel] / top
    return out


def effects_via_guided_backprop(model, design, mask, fit=None) -> EffectReport:
    """Mean absolute input-space guided signal per feature, normalized within groups.

    ``fit`` (a PreprocessFit) supplies feature names and groups; without it
    every feature is labelled by position and treated as one group.
    """
    net = _network(model)
    if fit is None:
        fit = getattr(model, "fit", None)
    x = np.asarray(design, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (net.spec.hidden_width,):
        raise SelectionError(f"mask length {mask.shape} != last hidden width {net.spec.hidden_width}")
    total = np.zeros(x.shape[1])
    for s in range(0, x.shape[0], _CHUNK):
        sig, _ = guided_signals(net, x[s:s + _CHUNK], mask)
        total += np.abs(sig).sum(axis=0)
    raw = total / x.shape[0]
    if fit is not None:
        groups = fit.feature_groups()
        names = fit.feature_names()
        columns = np.arange(fit.full_width) if fit.columns is None else np.asarray(fit.columns)
    else:
        groups = np.array(["feature"] * x.shape[1], dtype=object)
        names = [f"x{j}" for j in range(x.shape[1])]
        columns = np.arange(x.shape[1])
    return EffectReport(columns, list(names), np.asarray(groups, dtype=object), raw,
                        group_normalize(raw, groups), mask)


def _top(raw: np.ndarray, candidates: np.ndarray, count: int) -> np.ndarray:
    order = np.lexsort((candidates, -raw[candidates]))  # effect desc, then lower index
    return candidates[order[:count]]


def select_top_features(report: EffectReport, n_markers: int = 50, n_environment: int = 20) -> list[int]:
    """Design columns of the top markers plus the top soil/weather features."""
    markers = np.flatnonzero(report.groups == "marker")
    env = np.flatnonzero(np.isin(report.groups, ["soil", "weather"]))
    if n_markers > len(markers) or n_environment > len(env):
        raise SelectionError(f"requested {n_markers} markers / {n_environment} environment features, "
                             f"only {len(markers)} / {len(env)} available")
    if n_markers < 0 or n_environment < 0:
        raise SelectionError("counts must be non-negative")
    picked = np.concatenate([_top(report.raw, markers, n_markers), _top(report.raw, env, n_environment)])
    return sorted(int(c) for c in report.columns[picked])
