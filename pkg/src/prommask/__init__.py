"""Probabilistic, budget-constrained learning of k-space undersampling masks."""

from .baselines import equispaced_mask, gaussian_mask
from .estimator import EquispacedMask, GaussianMask, ProMMask
from .exceptions import (
    ConfigurationError,
    DataValidationError,
    NumericalFailureError,
    ProMError,
    UndefinedMetricError,
)
from .kspace import forward_transform, inverse_transform, zero_fill_reconstruct
from .masks import BinaryMask, GridShape, MaskDistribution, MaskKind, deterministic_mask
from .metrics import dice, iou, nmse, psnr, ssim
from .optim import ProMConfig, optimize_dataset, optimize_runs, optimize_single, run_prom
from .phantom import make_family, sample_family

__version__ = "0.1.0"
