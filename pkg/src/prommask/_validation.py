"""Input checks for the estimator layer.

sklearn's ``check_array`` rejects complex data, so k-space stacks are
validated here instead.
"""

import numpy as np

from .exceptions import DataValidationError
from .kspace import _ifft_c


def check_kspace(X, name="X"):
    """Return ``X`` as a finite complex128 stack of shape ``(n, H, W)``.

    A single 2D slice is promoted to a stack of one.
    """
    X = np.asarray(X)
    if X.dtype.kind not in "fciu":
        raise DataValidationError(f"{name} must be numeric, got dtype {X.dtype}")
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3:
        raise DataValidationError(f"{name} must have shape (n_slices, H, W), got {X.shape}")
    if 0 in X.shape:
        raise DataValidationError(f"{name} is empty: shape {X.shape}")
    X = X.astype(np.complex128, copy=False)
    if not np.all(np.isfinite(X)):
        raise DataValidationError(f"{name} contains NaN or infinite values")
    return X


def check_targets(y, X):
    """Targets matching ``X``; defaults to the fully sampled magnitude images."""
    if y is None:
        return np.abs(_ifft_c(X))
    y = np.asarray(y)
    if y.ndim == X.ndim - 1:
        y = y[None]
    if len(y) != len(X):
        raise DataValidationError(f"got {len(X)} k-space slices but {len(y)} targets")
    if y.dtype.kind in "fiu":
        y = y.astype(np.float64, copy=False)
        if not np.all(np.isfinite(y)):
            raise DataValidationError("targets contain NaN or infinite values")
    return y


def check_grid(X, shape):
    if X.shape[1:] != tuple(shape):
        raise DataValidationError(f"X has grid {X.shape[1:]}, estimator was fitted on {tuple(shape)}")
