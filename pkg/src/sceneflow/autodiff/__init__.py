from .gradcheck import check_gradients, gradient_pairs, numeric_grad, pooled_relative_error, relative_error
from .optim import Adam, TrainingDivergedError, adam_step
from .params import CheckpointError, ParamStore, constant, load_checkpoint, save_checkpoint
from .tensor import (
    ContractError,
    DimensionError,
    NonFiniteError,
    Tape,
    Tensor,
    as_tensor,
    backward,
    concat_lastdim,
    decide,
    default_dtype,
    expand_neighbors,
    gather_rows,
    grad_enabled,
    leaky_relu,
    linear,
    max_over_neighbors,
    no_grad,
    precision,
    record_decisions,
    replay_decisions,
    reshape,
    row_norm,
    softmax,
    softmax_lastdim,
)

__all__ = [
    "Adam",
    "CheckpointError",
    "ContractError",
    "DimensionError",
    "NonFiniteError",
    "ParamStore",
    "Tape",
    "Tensor",
    "TrainingDivergedError",
    "adam_step",
    "as_tensor",
    "backward",
    "check_gradients",
    "gradient_pairs",
    "pooled_relative_error",
    "concat_lastdim",
    "constant",
    "decide",
    "default_dtype",
    "expand_neighbors",
    "gather_rows",
    "grad_enabled",
    "leaky_relu",
    "linear",
    "load_checkpoint",
    "max_over_neighbors",
    "no_grad",
    "numeric_grad",
    "precision",
    "record_decisions",
    "relative_error",
    "replay_decisions",
    "reshape",
    "row_norm",
    "save_checkpoint",
    "softmax",
    "softmax_lastdim",
]
