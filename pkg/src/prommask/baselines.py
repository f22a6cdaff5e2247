"""Fixed-pattern reference masks: equispaced lines and 2D variable-density Gaussian."""

import numpy as np

from .exceptions import ConfigurationError
from .masks import BinaryMask, MaskKind, as_grid_shape

__all__ = ["equispaced_mask", "gaussian_mask", "DEFAULT_CENTER_FRACTION", "DEFAULT_SIGMA_FRACTION"]

DEFAULT_CENTER_FRACTION = 0.04
DEFAULT_SIGMA_FRACTION = 1.0 / 6.0


def _check_alpha(alpha):
    if not alpha >= 1:
        raise ConfigurationError(f"acceleration factor must be >= 1, got {alpha}")


def equispaced_mask(shape, alpha, center_fraction=DEFAULT_CENTER_FRACTION, seed=None) -> BinaryMask:
    """Column mask with a fully sampled center block and equally spaced outer lines.

    ``round(center_fraction * W)`` central columns are always acquired. The rest
    of the ``round(W / alpha)`` column budget is spread over the non-center
    columns with stride ``n_outer // n_remaining`` starting at a random offset.

    Parameters
    ----------
    shape : (int, int)
        Grid height and width.
    alpha : float
        Acceleration factor, at least 1.
    center_fraction : float
        Fraction of columns in the fully sampled center.
    seed : int or numpy.random.Generator, optional
        Source of the random offset.

    Returns
    -------
    BinaryMask
        A ``LINES_1D`` mask with ``W`` entries; use ``.grid()`` for the 2D pattern.
    """
    shape = as_grid_shape(shape)
    _check_alpha(alpha)
    if not 0 <= center_fraction < 1:
        raise ConfigurationError(f"center fraction must be in [0, 1), got {center_fraction}")
    width = shape.width
    n_center = int(round(center_fraction * width))
    n_total = int(round(width / alpha))
    n_remaining = n_total - n_center
    if n_remaining < 0:
        raise ConfigurationError(
            f"budget of {n_total} columns is smaller than the {n_center} center columns; "
            "use a smaller center fraction"
        )
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    lines = np.zeros(width)
    pad = (width - n_center + 1) // 2
    lines[pad:pad + n_center] = 1.0
    if n_remaining > 0:
        outer = np.flatnonzero(lines == 0)
        stride = len(outer) // n_remaining
        offset = int(rng.integers(0, stride))
        lines[outer[offset::stride][:n_remaining]] = 1.0
    return BinaryMask(lines, kind=MaskKind.LINES_1D, shape=shape)


def gaussian_mask(shape, alpha, sigma_fraction=DEFAULT_SIGMA_FRACTION, seed=None) -> BinaryMask:
    """Draw ``floor(D / alpha)`` distinct elements with Gaussian weights around the k-space center.

    Weights are ``exp(-r**2 / (2 sigma**2))`` with ``r`` the index distance
    to ``(H // 2, W // 2)`` and ``sigma = sigma_fraction * min(H, W)``.
    """
    shape = as_grid_shape(shape)
    _check_alpha(alpha)
    if not sigma_fraction > 0:
        raise ConfigurationError(f"sigma fraction must be positive, got {sigma_fraction}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    n_active = int(np.floor(shape.size / alpha))
    sigma = sigma_fraction * min(shape)
    rows, cols = np.indices(shape, dtype=np.float64)
    r2 = (rows - shape.height // 2) ** 2 + (cols - shape.width // 2) ** 2
    log_weights = (-r2 / (2.0 * sigma**2)).ravel()
    # Gumbel-top-k: same law as sequential weighted draws without replacement,
    # computed in log space so distant weights cannot underflow.
    keys = log_weights + rng.gumbel(size=shape.size)
    chosen = np.argsort(-keys, kind="stable")[:n_active]
    values = np.zeros(shape.size)
    values[chosen] = 1.0
    return BinaryMask(values, kind=MaskKind.FULL_2D, shape=shape)
