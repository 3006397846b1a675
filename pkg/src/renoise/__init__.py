"""renoise: self-supervised per-image denoising.

A corrupted image is re-corrupted with statistically similar synthetic
noise; a small residual CNN is trained to map the doubly-noisy copy back to
the original corrupted image, then applied once to that image to denoise it.
"""

from .engine import Adam, Network, NetworkConfig, Tensor, l2_loss
from .image import ImageBuffer
from .metrics import EvalReport, psnr, ssim
from .noise import NoiseSpec, make_observed, make_simulated
from .pipeline import (TrainConfig, TrainingRecord, augment_dihedral, denoise,
                       run_experiment, train_denoiser, train_oracle)

__version__ = "0.1.0"

__all__ = [
    "Adam", "Network", "NetworkConfig", "Tensor", "l2_loss",
    "ImageBuffer", "EvalReport", "psnr", "ssim",
    "NoiseSpec", "make_observed", "make_simulated",
    "TrainConfig", "TrainingRecord", "augment_dihedral", "denoise",
    "run_experiment", "train_denoiser", "train_oracle",
    "__version__",
]
