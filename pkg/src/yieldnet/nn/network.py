"""Residual maxout feedforward network with batch normalization.

Layer numbering follows the usual convention: hidden layers are 1..L and
the output layer is affine with a single unit.  Layer 1 is a stem without
batch norm; layers 2..L apply batch norm to their affine output before the
activation.  Hidden layers are grouped in blocks {2,3}, {4,5}, ...; the
block input (output of the layer just before the block) is added to the
normalized pre-activation of the block's second layer, i.e. shortcuts land
on the odd layers 3, 5, 7, ...

Every learnable array lives in one contiguous float64 buffer (``flat``)
and is exposed as a named view, so optimizers work on a single vector.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

TRAIN = "train"
INFER = "infer"
ACTIVATIONS = ("maxout", "tanh", "identity")


class NetworkError(RuntimeError):
    pass


@dataclass(frozen=True)
class NetworkSpec:
    input_dim: int
    hidden_layers: int = 21
    hidden_width: int = 50
    maxout_pieces: int = 2
    activation: str = "maxout"
    residual: bool = True
    batchnorm: bool = True
    bn_eps: float = 1e-8
    output_dim: int = 1

    def __post_init__(self):
        if self.input_dim < 1 or self.hidden_layers < 0 or self.hidden_width < 1:
            raise ValueError(f"invalid network dimensions in {self}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        if self.activation == "maxout" and self.maxout_pieces < 2:
            raise ValueError("maxout needs at least 2 pieces")
        if self.output_dim != 1:
            raise ValueError("only scalar regression outputs are supported")

    @property
    def pieces(self) -> int:
        return self.maxout_pieces if self.activation == "maxout" else 1

    def has_bn(self, layer: int) -> bool:
        return self.batchnorm and layer >= 2

    def skip_source(self, layer: int) -> int | None:
        """Index of the activation added as shortcut into ``layer`` (0 = input), or None."""
        if self.residual and layer >= 3 and layer % 2 == 1:
            return layer - 2
        return None

    def fan_in(self, layer: int) -> int:
        return self.input_dim if layer == 1 else self.hidden_width

    def to_dict(self) -> dict:
        return asdict(self)


def param_layout(spec: NetworkSpec) -> list[tuple[str, tuple[int, ...]]]:
    k, w = spec.pieces, spec.hidden_width
    layout = []
    for i in range(1, spec.hidden_layers + 1):
        layout += [(f"hidden{i}.weight", (k, w, spec.fan_in(i))), (f"hidden{i}.bias", (k, w))]
        if spec.has_bn(i):
            layout += [(f"hidden{i}.gamma", (k, w)), (f"hidden{i}.beta", (k, w))]
    fan = spec.hidden_width if spec.hidden_layers else spec.input_dim
    layout += [("output.weight", (1, 1, fan)), ("output.bias", (1, 1))]
    return layout


def _views(flat: np.ndarray, layout) -> dict[str, np.ndarray]:
    out, pos = {}, 0
    for name, shape in layout:
        size = int(np.prod(shape))
        out[name] = flat[pos:pos + size].reshape(shape)
        pos += size
    return out


class ParamVector:
    """Named views over one flat float64 buffer."""

    def __init__(self, spec: NetworkSpec, flat: np.ndarray | None = None):
        self.spec = spec
        self.layout = param_layout(spec)
        size = sum(int(np.prod(s)) for _, s in self.layout)
        if flat is None:
            flat = np.zeros(size)
        elif flat.shape != (size,):
            raise ValueError(f"flat buffer has shape {flat.shape}, layout needs ({size},)")
        self.flat = flat
        self.arrays = _views(flat, self.layout)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def __iter__(self):
        return iter(self.arrays)

    def items(self):
        return self.arrays.items()


class Gradients(ParamVector):
    pass


class NetworkParams(ParamVector):
    """Learnable parameters plus batch-norm running statistics.

    ``version`` is bumped by every optimizer step; a forward cache records
    it so that backward can reject caches computed with stale parameters.
    """

    def __init__(self, spec: NetworkSpec, flat: np.ndarray | None = None,
                 running: dict[str, np.ndarray] | None = None, version: int = 0):
        super().__init__(spec, flat)
        if running is None:
            running = {}
            for i in range(2, spec.hidden_layers + 1):
                if spec.has_bn(i):
                    running[f"hidden{i}.running_mean"] = np.zeros((spec.pieces, spec.hidden_width))
                    running[f"hidden{i}.running_var"] = np.ones((spec.pieces, spec.hidden_width))
        self.running = running
        self.version = version

    def copy(self) -> NetworkParams:
        return NetworkParams(self.spec, self.flat.copy(), {k: v.copy() for k, v in self.running.items()},
                             self.version)

    def hidden_weight_names(self) -> list[str]:
        return [f"hidden{i}.weight" for i in range(1, self.spec.hidden_layers + 1)]

    def identical_to(self, other: NetworkParams) -> bool:
        return (self.spec == other.spec and np.array_equal(self.flat, other.flat)
                and self.running.keys() == other.running.keys()
                and all(np.array_equal(v, other.running[k]) for k, v in self.running.items()))


def xavier_init(spec: NetworkSpec, seed: int = 0) -> NetworkParams:
    """Uniform Xavier weights on +-sqrt(6/(fan_in + fan_out)); zero biases."""
    rng = np.random.default_rng(seed)
    params = NetworkParams(spec)
    for name, shape in params.layout:
        arr = params[name]
        if name.endswith(".weight"):
            fan_out, fan_in = shape[1], shape[2]
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            arr[...] = rng.uniform(-limit, limit, size=shape)
        elif name.endswith(".gamma"):
            arr[...] = 1.0
    return params


@dataclass
class ForwardCache:
    mode: str
    version: int
    n: int
    outputs: list  # activations; outputs[0] is the input batch
    layers: list  # per hidden layer: dict of intermediates
    predictions: np.ndarray = field(repr=False, default=None)


def _activate(spec: NetworkSpec, pre: np.ndarray, n: int):
    k, w = spec.pieces, spec.hidden_width
    if spec.activation == "maxout":
        z3 = pre.reshape(n, k, w)
        if k == 2:
            idx = z3[:, 1, :] > z3[:, 0, :]
            return np.maximum(z3[:, 0, :], z3[:, 1, :]), idx
        idx = z3.argmax(axis=1)
        return np.take_along_axis(z3, idx[:, None, :], axis=1)[:, 0, :], idx
    if spec.activation == "tanh":
        return np.tanh(pre), None
    return pre, None


def forward(params: NetworkParams, spec: NetworkSpec, batch, mode: str = TRAIN):
    """Run the network; returns ``(predictions, cache)``.

    TRAIN mode normalizes with batch statistics (which are stored in the
    cache for the caller to fold into running statistics); INFER mode uses
    the running statistics only, so each row is processed independently.
    """
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != spec.input_dim:
        raise ValueError(f"batch must have shape (n, {spec.input_dim}), got {x.shape}")
    if mode not in (TRAIN, INFER):
        raise ValueError(f"unknown mode {mode!r}")
    n = x.shape[0]
    if mode == TRAIN and n < 2 and spec.batchnorm and spec.hidden_layers >= 2:
        raise ValueError("TRAIN mode batch norm needs at least 2 rows")
    k, w = spec.pieces, spec.hidden_width
    outputs, layers = [x], []
    a = x
    for i in range(1, spec.hidden_layers + 1):
        W = params[f"hidden{i}.weight"].reshape(k * w, -1)
        pre = a @ W.T + params[f"hidden{i}.bias"].reshape(-1)
        rec = {}
        if spec.has_bn(i):
            if mode == TRAIN:
                mu, var = pre.mean(axis=0), pre.var(axis=0)
            else:
                mu = params.running[f"hidden{i}.running_mean"].reshape(-1)
                var = params.running[f"hidden{i}.running_var"].reshape(-1)
            inv = 1.0 / np.sqrt(var + spec.bn_eps)
            xhat = (pre - mu) * inv
            pre = xhat * params[f"hidden{i}.gamma"].reshape(-1) + params[f"hidden{i}.beta"].reshape(-1)
            rec.update(mu=mu, var=var, inv=inv, xhat=xhat)
        src = spec.skip_source(i)
        if src is not None:
            pre = (pre.reshape(n, k, w) + outputs[src][:, None, :]).reshape(n, k * w)
        a, idx = _activate(spec, pre, n)
        rec.update(pre=pre, argmax=idx)
        outputs.append(a)
        layers.append(rec)
    pred = (a @ params["output.weight"].reshape(1, -1).T + params["output.bias"].reshape(-1))[:, 0]
    if not np.isfinite(pred).all():
        for i, out in enumerate(outputs[1:], start=1):
            if not np.isfinite(out).all():
                raise NetworkError(f"non-finite activations in hidden layer {i}")
        raise NetworkError("non-finite activations in the output layer")
    cache = ForwardCache(mode, params.version, n, outputs, layers, pred)
    return pred, cache


def regularization(params: NetworkParams, l1_lambda: float, l2_lambda: float) -> float:
    total = 0.0
    names = params.hidden_weight_names()
    if l2_lambda:
        total += l2_lambda * sum(float(np.sum(params[nm] ** 2)) for nm in names)
    if l1_lambda and names:
        total += l1_lambda * float(np.sum(np.abs(params[names[0]])))
    return total


def compute_loss(predictions, targets, params: NetworkParams, l1_lambda: float = 0.0, l2_lambda: float = 0.0) -> float:
    """Mean squared error + L2 on all hidden weights + L1 on the first hidden layer."""
    predictions = np.asarray(predictions, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if predictions.shape != targets.shape:
        raise ValueError("predictions and targets differ in shape")
    return float(np.mean((predictions - targets) ** 2)) + regularization(params, l1_lambda, l2_lambda)


def maxout_backward(da: np.ndarray, argmax: np.ndarray, k: int) -> np.ndarray:
    """Route the upstream signal to the winning piece of every maxout unit."""
    n, w = da.shape
    if k == 2:
        dz = np.zeros((n, 2, w))
        dz[:, 0, :] = np.where(argmax, 0.0, da)
        dz[:, 1, :] = np.where(argmax, da, 0.0)
        return dz.reshape(n, 2 * w)
    dz3 = np.zeros((n, k, w))
    np.put_along_axis(dz3, argmax[:, None, :], da[:, None, :], axis=1)
    return dz3.reshape(n, k * w)


def backward(cache: ForwardCache, targets, params: NetworkParams, spec: NetworkSpec,
             l1_lambda: float = 0.0, l2_lambda: float = 0.0, out: Gradients | None = None) -> Gradients:
    """Exact gradients of :func:`compute_loss` for the batch held in ``cache``."""
    if cache.mode != TRAIN:
        raise NetworkError("backward needs a cache from a TRAIN-mode forward pass")
    if cache.version != params.version:
        raise NetworkError("stale forward cache: parameters changed since the forward pass")
    y = np.asarray(targets, dtype=np.float64)
    if y.shape != (cache.n,):
        raise NetworkError(f"targets of shape {y.shape} do not match the cached batch of {cache.n} rows")
    grads = out if out is not None else Gradients(spec)
    n, k, w = cache.n, spec.pieces, spec.hidden_width
    L = spec.hidden_layers

    d_pred = (2.0 / n) * (cache.predictions - y)
    top = cache.outputs[L]
    grads["output.weight"][...] = (d_pred @ top).reshape(1, 1, -1)
    grads["output.bias"][...] = d_pred.sum()
    da = d_pred[:, None] * params["output.weight"].reshape(1, -1)

    pending: dict[int, np.ndarray] = {}
    for i in range(L, 0, -1):
        rec = cache.layers[i - 1]
        if i in pending:
            da = da + pending.pop(i)
        if spec.activation == "maxout":
            dz = maxout_backward(da, rec["argmax"], k)
        elif spec.activation == "tanh":
            dz = da * (1.0 - cache.outputs[i] ** 2)
        else:
            dz = da
        src = spec.skip_source(i)
        if src is not None:
            pending[src] = dz.reshape(n, k, w).sum(axis=1)
        if spec.has_bn(i):
            xhat = rec["xhat"]
            grads[f"hidden{i}.gamma"][...] = (dz * xhat).sum(axis=0).reshape(k, w)
            grads[f"hidden{i}.beta"][...] = dz.sum(axis=0).reshape(k, w)
            dxhat = dz * params[f"hidden{i}.gamma"].reshape(-1)
            dz = rec["inv"] * (dxhat - dxhat.mean(axis=0) - xhat * (dxhat * xhat).mean(axis=0))
        W = params[f"hidden{i}.weight"]
        gW = grads[f"hidden{i}.weight"]
        np.matmul(dz.T, cache.outputs[i - 1], out=gW.reshape(k * w, -1))
        if l2_lambda:
            gW += (2.0 * l2_lambda) * W
        if l1_lambda and i == 1:
            gW += l1_lambda * np.sign(W)
        grads[f"hidden{i}.bias"][...] = dz.sum(axis=0).reshape(k, w)
        if i > 1:
            da = dz @ W.reshape(k * w, -1)
    return grads


def update_running_stats(params: NetworkParams, cache: ForwardCache, momentum: float):
    spec = params.spec
    for i in range(2, spec.hidden_layers + 1):
        if spec.has_bn(i):
            rec = cache.layers[i - 1]
            rm = params.running[f"hidden{i}.running_mean"]
            rv = params.running[f"hidden{i}.running_var"]
            rm *= momentum
            rm += (1.0 - momentum) * rec["mu"].reshape(rm.shape)
            rv *= momentum
            rv += (1.0 - momentum) * rec["var"].reshape(rv.shape)
