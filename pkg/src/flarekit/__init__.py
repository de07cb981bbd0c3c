"""flarekit: purple-flare synthesis, HSV LUT correction, fitting, metrics."""

__version__ = "0.1.0"

from .cast import (
    CastConfig,
    WeightBundle,
    correct_image,
    fit_codebook_kmeans,
    random_bundle,
    random_codebook,
)
from .color import circular_hue_diff, grayscale, hsv_to_rgb, rgb_to_hsv, rgb_to_lab
from .fitting import FitConfig, FitResult, fit_luts, lut_loss_gradient
from .luts import Lut1D, LutBank, LutSet, apply_lut, correct_hsv, identity_bank, identity_lut
from .metrics import LossWeights, MetricsReport, compute_report, hae, psnr, psnr_masked, ssim
from .synthesis import FlareSample, SynthParams, split_scenes, synthesize

__all__ = [
    "CastConfig",
    "WeightBundle",
    "correct_image",
    "fit_codebook_kmeans",
    "random_bundle",
    "random_codebook",
    "circular_hue_diff",
    "grayscale",
    "hsv_to_rgb",
    "rgb_to_hsv",
    "rgb_to_lab",
    "FitConfig",
    "FitResult",
    "fit_luts",
    "lut_loss_gradient",
    "Lut1D",
    "LutBank",
    "LutSet",
    "apply_lut",
    "correct_hsv",
    "identity_bank",
    "identity_lut",
    "LossWeights",
    "MetricsReport",
    "compute_report",
    "hae",
    "psnr",
    "psnr_masked",
    "ssim",
    "FlareSample",
    "SynthParams",
    "split_scenes",
    "synthesize",
    "__version__",
]
