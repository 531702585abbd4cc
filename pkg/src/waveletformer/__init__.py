"""Wavelet-domain transformer for single-image dehazing, built on a small numpy autodiff engine."""
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, load_config, parse_config
from .data import HazeParams, ImagePair, apply_asm, invert_asm, load_image, save_image, synth_depth
from .gradcheck import grad_check
from .losses import LossWeights, ms_ssim, total_loss
from .metrics import MetricsReport, entropy, psnr, ssim
from .network import ABLATIONS, NetworkConfig, WaveletFormerNet, build, param_count
from .optim import ScheduleSpec, TrainConfig, cosine_lr, fit
from .tensor import NonFiniteError, Parameter, Tensor, no_grad
from .wavelet import WaveletSpec, dwt2d, idwt2d

__version__ = "0.1.0"

__all__ = [
    "ABLATIONS", "HazeParams", "ImagePair", "LossWeights", "MetricsReport", "NetworkConfig",
    "NonFiniteError", "Parameter", "RunConfig", "ScheduleSpec", "Tensor", "TrainConfig",
    "WaveletFormerNet", "WaveletSpec", "apply_asm", "build", "cosine_lr", "dwt2d", "entropy", "fit",
    "grad_check", "idwt2d", "invert_asm", "load_checkpoint", "load_config", "load_image", "ms_ssim",
    "no_grad", "param_count", "parse_config", "psnr", "save_checkpoint", "save_image", "ssim",
    "synth_depth", "total_loss",
]
