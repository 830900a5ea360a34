from .layers import (
    ShapeError,
    conv2d_backward,
    conv2d_forward,
    dense_backward,
    dense_forward,
    leaky_relu,
    leaky_relu_backward,
    lstm_cell_backward,
    lstm_cell_forward,
)
from .model import (
    NetSpec,
    RecurrentQNet,
    cep_spec,
    dep_spec,
    init_params,
    mfe_forward,
    sequence_backward,
    sequence_forward,
)
from .optim import Adam
from .weights import WeightFormatError, load_weights, save_weights

__all__ = [
    "ShapeError", "conv2d_forward", "conv2d_backward", "dense_forward",
    "dense_backward", "leaky_relu", "leaky_relu_backward",
    "lstm_cell_forward", "lstm_cell_backward",
    "NetSpec", "RecurrentQNet", "cep_spec", "dep_spec", "init_params",
    "mfe_forward", "sequence_forward", "sequence_backward",
    "Adam", "WeightFormatError", "save_weights", "load_weights",
]
