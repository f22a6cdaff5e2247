"""Centered unitary Fourier transforms, zero-fill reconstruction and their adjoints.

Grids are plain numpy arrays. Every function operates on the last two axes, so
stacks of slices (``(..., H, W)``) are handled without loops. The zero-frequency
coefficient lives at index ``(H // 2, W // 2)``; both directions use ``1/sqrt(D)``
scaling so the transforms are exact inverses and each other's adjoints.
"""

import numpy as np
import scipy.fft

from .exceptions import DataValidationError

__all__ = [
    "MAGNITUDE_EPS",
    "forward_transform",
    "inverse_transform",
    "apply_mask",
    "magnitude",
    "zero_fill_reconstruct",
    "apply_mask_vjp",
    "inverse_transform_vjp",
    "magnitude_vjp",
]

#: Below this modulus the derivative of ``|z|`` is taken to be zero.
MAGNITUDE_EPS = 1e-12

_AXES = (-2, -1)


def _check_grid(x, name="grid"):
    x = np.asarray(x)
    if x.ndim < 2:
        raise DataValidationError(f"{name} must have at least 2 dimensions, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise DataValidationError(f"{name} contains non-finite values")
    return x


def _check_same_shape(a, b, names=("kspace", "mask")):
    if a.shape != b.shape:
        raise DataValidationError(
            f"{names[0]} shape {a.shape} does not match {names[1]} shape {b.shape}"
        )


# Unchecked kernels used in the optimizer's inner loop.
def _fft_c(x):
    return scipy.fft.fftshift(
        scipy.fft.fft2(scipy.fft.ifftshift(x, axes=_AXES), axes=_AXES, norm="ortho"), axes=_AXES
    )


def _ifft_c(k):
    return scipy.fft.fftshift(
        scipy.fft.ifft2(scipy.fft.ifftshift(k, axes=_AXES), axes=_AXES, norm="ortho"), axes=_AXES
    )


def forward_transform(image):
    """Centered unitary 2D DFT of ``image`` over its last two axes.

    Raises
    ------
    DataValidationError
        If the input is not at least 2D or contains NaN/inf.
    """
    image = _check_grid(image, "image")
    return _fft_c(image.astype(np.complex128, copy=False))


def inverse_transform(kspace):
    """Exact inverse of :func:`forward_transform` (same shift and scaling)."""
    kspace = _check_grid(kspace, "kspace")
    return _ifft_c(kspace.astype(np.complex128, copy=False))


def apply_mask(kspace, mask):
    """Element-wise product ``kspace * mask``.

    ``mask`` may be soft (values in ``[0, 1]``). It is either a grid matching
    the trailing axes of ``kspace`` or a flat row-major vector of length
    ``H * W``; leading batch axes of either operand broadcast.
    """
    kspace = np.asarray(kspace)
    mask = np.asarray(mask, dtype=np.float64)
    if kspace.ndim < 2:
        raise DataValidationError(f"kspace must be at least 2D, got shape {kspace.shape}")
    grid = kspace.shape[-2:]
    if mask.ndim == 1:
        if mask.size != grid[0] * grid[1]:
            raise DataValidationError(
                f"mask length {mask.size} does not match grid size {grid[0] * grid[1]}"
            )
        mask = mask.reshape(grid)
    elif mask.ndim < 2 or mask.shape[-2:] != grid:
        raise DataValidationError(f"mask shape {mask.shape} does not match k-space grid {grid}")
    return kspace * mask


def magnitude(image):
    """Element-wise modulus ``sqrt(re**2 + im**2)``."""
    return np.abs(image)


def zero_fill_reconstruct(kspace, mask):
    """Magnitude image of the inverse transform of masked k-space."""
    return magnitude(inverse_transform(apply_mask(kspace, mask)))


def apply_mask_vjp(kspace, cotangent):
    """Gradient of a real scalar w.r.t. the real mask entries.

    For ``y = kspace * m`` and a complex cotangent ``g = dL/dRe(y) + i dL/dIm(y)``
    this returns ``Re(conj(kspace) * g)``.
    """
    kspace = np.asarray(kspace)
    cotangent = np.asarray(cotangent)
    _check_same_shape(kspace, cotangent, ("kspace", "cotangent"))
    return (kspace.real * cotangent.real) + (kspace.imag * cotangent.imag)


def inverse_transform_vjp(cotangent):
    """Adjoint of :func:`inverse_transform`, which for a unitary map is the forward transform."""
    return _fft_c(np.asarray(cotangent, dtype=np.complex128))


def magnitude_vjp(image, cotangent):
    """Pull a real cotangent on ``|z|`` back to a complex cotangent on ``z``.

    Entries with ``|z| < MAGNITUDE_EPS`` get a zero subgradient.
    """
    image = np.asarray(image)
    cotangent = np.asarray(cotangent, dtype=np.float64)
    _check_same_shape(image, cotangent, ("image", "cotangent"))
    mod = np.abs(image)
    safe = mod >= MAGNITUDE_EPS
    scale = np.divide(cotangent, mod, out=np.zeros_like(mod), where=safe)
    return image * scale
