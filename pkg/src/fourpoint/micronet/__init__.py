"""Minimal float64 autodiff, the Four-point Block and a toy FTNet."""
from .checkpoint import read_checkpoint, write_checkpoint
from .gradcheck import GradCheckReport, exclude_exact_zeros, grad_check
from .model import FpbConfig, NetConfig, ParamStore, fpb_forward, ftnet_forward, init_params
from .tensor import Tensor, fixed_grid_resample
from .train import TrainConfig, poly_lr, predict, sgd_poly_step, train

__all__ = [
    "FpbConfig",
    "GradCheckReport",
    "exclude_exact_zeros",
    "NetConfig",
    "ParamStore",
    "Tensor",
    "TrainConfig",
    "fixed_grid_resample",
    "fpb_forward",
    "ftnet_forward",
    "grad_check",
    "init_params",
    "poly_lr",
    "predict",
    "read_checkpoint",
    "sgd_poly_step",
    "train",
    "write_checkpoint",
]
