"""From-scratch 3D spatio-temporal regression network.

Tensors are numpy arrays laid out (batch, channels, depth, lateral, time).
Every layer provides an exact analytic backward pass, verified against
central finite differences in the test suite.
"""

from .network import ArchSpec, ModelParams, init_params, load_params, net_backward, net_forward, save_params
from .train import TrainConfig, augment_window, finetune, train
from .predict import predict_map

__all__ = [
    "ArchSpec",
    "ModelParams",
    "TrainConfig",
    "augment_window",
    "finetune",
    "init_params",
    "load_params",
    "net_backward",
    "net_forward",
    "predict_map",
    "save_params",
    "train",
]
