from .model import (
    CELL_NAMES,
    GATES,
    HEAD_NAMES,
    PARAM_NAMES,
    CellState,
    ModelParams,
    Prediction,
    Tape,
    backward,
    backward_flat,
    cell_step,
    count_parameters,
    flat_size,
    forward,
    init_params,
    loss,
    loss_and_flat_grad,
    loss_and_grads,
    loss_gradients,
    named_views,
    param_shapes,
    zero_params,
)
from .gradcheck import GradCheckResult, check_gradients
from .optim import AdamState, adam_update, clip_by_global_norm
from .serialize import load, save
from .training import TrainConfig, adam_step, predict, train

__all__ = [
    "CELL_NAMES", "GATES", "HEAD_NAMES", "PARAM_NAMES", "AdamState", "CellState", "GradCheckResult",
    "ModelParams", "Prediction", "Tape", "TrainConfig", "adam_step", "adam_update", "backward",
    "backward_flat", "cell_step", "check_gradients", "clip_by_global_norm", "count_parameters",
    "flat_size", "forward", "init_params", "load", "loss", "loss_and_flat_grad", "loss_and_grads",
    "loss_gradients", "named_views", "param_shapes", "predict", "save", "train", "zero_params",
]
