"""From-scratch feedforward engine (numpy, float64)."""

from .gradcheck import GradCheckReport, gradient_check, relative_error
from .model import TrainedNetwork, fit_network, predict
from .network import (
    INFER, TRAIN, ForwardCache, Gradients, NetworkError, NetworkParams, NetworkSpec, backward,
    compute_loss, forward, param_layout, update_running_stats, xavier_init,
)
from .optim import (
    FULL_SCALE_TRAIN_CONFIG, AdamState, TrainConfig, TrainingError, TrainingLog, adam_step, lr_at,
    minibatches, train_network,
)

DESK_SPEC_LAYERS = 6
FULL_SCALE_LAYERS = 21


def desk_spec(input_dim: int, **kw) -> NetworkSpec:
    return NetworkSpec(input_dim=input_dim, hidden_layers=kw.pop("hidden_layers", DESK_SPEC_LAYERS), **kw)


def full_scale_spec(input_dim: int, **kw) -> NetworkSpec:
    return NetworkSpec(input_dim=input_dim, hidden_layers=FULL_SCALE_LAYERS, **kw)
