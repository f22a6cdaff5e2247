"""Reconstruction (NMSE, PSNR, SSIM) and segmentation (Dice, IoU) metrics."""

from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
from scipy.signal import convolve2d

from .exceptions import DataValidationError, UndefinedMetricError

__all__ = [
    "PSNR_CAP",
    "nmse",
    "psnr",
    "ssim",
    "dice",
    "iou",
    "MetricReport",
    "RECONSTRUCTION_METRICS",
    "evaluate_reconstructions",
]

#: Value reported by :func:`psnr` for (numerically) perfect reconstructions.
PSNR_CAP = 100.0

_SSIM_WIN = 11
_SSIM_SIGMA = 1.5
_SSIM_K1 = 0.01
_SSIM_K2 = 0.03


def _pair(reconstruction, target):
    reconstruction = np.asarray(reconstruction, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if reconstruction.shape != target.shape:
        raise DataValidationError(
            f"reconstruction shape {reconstruction.shape} does not match target {target.shape}"
        )
    return reconstruction, target


def nmse(reconstruction, target) -> float:
    """``||x_hat - x||^2 / ||x||^2``."""
    reconstruction, target = _pair(reconstruction, target)
    denom = np.sum(target**2)
    if denom == 0:
        raise UndefinedMetricError("NMSE is undefined for a zero-norm target")
    return float(np.sum((reconstruction - target) ** 2) / denom)


def psnr(reconstruction, target) -> float:
    """Peak signal-to-noise ratio in dB with the peak taken from ``target``.

    Returns :data:`PSNR_CAP` when ``MSE < peak**2 * 1e-10``.
    """
    reconstruction, target = _pair(reconstruction, target)
    peak = float(np.max(target))
    if peak <= 0:
        raise UndefinedMetricError("PSNR is undefined for a target without positive peak")
    mse = float(np.mean((reconstruction - target) ** 2))
    if mse < peak**2 * 1e-10:
        return PSNR_CAP
    return float(10.0 * np.log10(peak**2 / mse))


def _gaussian_window(size=_SSIM_WIN, sigma=_SSIM_SIGMA):
    ax = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(ax**2) / (2.0 * sigma**2))
    g /= g.sum()
    return np.outer(g, g)


def ssim(reconstruction, target, data_range=None, symmetric_range=False) -> float:
    """Mean structural similarity over all fully contained 11x11 Gaussian windows.

    Parameters
    ----------
    reconstruction, target : array_like
        2D images of equal shape, at least 11x11.
    data_range : float, optional
        Dynamic range. Defaults to ``max(target) - min(target)``.
    symmetric_range : bool
        Take the range over both images instead, which makes the
        metric symmetric in its arguments.
    """
    reconstruction, target = _pair(reconstruction, target)
    if reconstruction.ndim != 2 or min(reconstruction.shape) < _SSIM_WIN:
        raise DataValidationError(f"SSIM needs 2D images of at least {_SSIM_WIN}x{_SSIM_WIN}")
    if data_range is None:
        if symmetric_range:
            both = np.concatenate([reconstruction.ravel(), target.ravel()])
            data_range = both.max() - both.min()
        else:
            data_range = target.max() - target.min()
    if data_range == 0:
        if np.array_equal(reconstruction, target):
            return 1.0
        raise UndefinedMetricError("SSIM is undefined for a constant target with zero range")

    w = _gaussian_window()

    def filt(img):
        return convolve2d(img, w, mode="valid")

    mu_x, mu_y = filt(reconstruction), filt(target)
    var_x = filt(reconstruction * reconstruction) - mu_x**2
    var_y = filt(target * target) - mu_y**2
    cov = filt(reconstruction * target) - mu_x * mu_y
    c1 = (_SSIM_K1 * data_range) ** 2
    c2 = (_SSIM_K2 * data_range) ** 2
    num = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
    den = (mu_x**2 + mu_y**2 + c1) * (var_x + var_y + c2)
    return float(np.mean(num / den))


def _sets(prediction, truth, class_id):
    prediction = np.asarray(prediction)
    truth = np.asarray(truth)
    if prediction.shape != truth.shape:
        raise DataValidationError(f"label maps differ in shape: {prediction.shape} vs {truth.shape}")
    return prediction == class_id, truth == class_id


def dice(prediction, truth, class_id=1) -> float:
    """Dice overlap of the ``class_id`` regions; 1 when both are empty."""
    a, b = _sets(prediction, truth, class_id)
    size = a.sum() + b.sum()
    if size == 0:
        return 1.0
    return float(2.0 * np.logical_and(a, b).sum() / size)


def iou(prediction, truth, class_id=1) -> float:
    """Intersection over union of the ``class_id`` regions; 1 when both are empty."""
    a, b = _sets(prediction, truth, class_id)
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(a, b).sum() / union)


RECONSTRUCTION_METRICS = {"psnr": psnr, "ssim": ssim, "nmse": nmse}


@dataclass
class MetricReport:
    """Per-item metric values plus their means."""

    per_item: Dict[str, List[float]] = field(default_factory=dict)
    alpha: Optional[float] = None
    mask_id: Optional[str] = None
    seed: Optional[int] = None

    @property
    def metrics(self) -> List[str]:
        return list(self.per_item)

    @property
    def aggregate(self) -> Dict[str, float]:
        return {name: float(np.mean(vals)) for name, vals in self.per_item.items()}

    def __len__(self):
        return len(next(iter(self.per_item.values()), []))


def evaluate_reconstructions(reconstructions, targets, metrics=("psnr", "ssim", "nmse"), **meta) -> MetricReport:
    """Score stacks of reconstructions against targets with the named metrics."""
    unknown = set(metrics) - set(RECONSTRUCTION_METRICS)
    if unknown:
        raise DataValidationError(f"unknown metrics: {sorted(unknown)}")
    report = MetricReport({name: [] for name in metrics}, **meta)
    for recon, target in zip(reconstructions, targets):
        for name in metrics:
            report.per_item[name].append(RECONSTRUCTION_METRICS[name](recon, target))
    return report
