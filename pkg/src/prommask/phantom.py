"""Piecewise-constant ellipse phantoms and emulated k-space.

Coordinates are fractional: ``x`` runs over columns and ``y`` over rows, both
from -1 at the first pixel edge to +1 at the last, sampled at pixel centers.
"""

from dataclasses import dataclass, replace
from typing import List, Sequence, Tuple

import numpy as np

from .exceptions import DataValidationError
from .kspace import forward_transform
from .masks import as_grid_shape

__all__ = [
    "EllipseSpec",
    "PhantomFamily",
    "render_phantom",
    "sample_family",
    "make_family",
    "FAMILIES",
    "shepp_logan_ellipses",
]


@dataclass(frozen=True)
class EllipseSpec:
    center: Tuple[float, float]
    semi_axes: Tuple[float, float]
    rotation: float = 0.0
    intensity: float = 1.0

    def __post_init__(self):
        if min(self.semi_axes) <= 0:
            raise DataValidationError(f"ellipse semi-axes must be positive, got {self.semi_axes}")


@dataclass(frozen=True)
class PhantomFamily:
    """A base ellipse set plus uniform jitter ranges used to draw variations.

    ``axes_jitter`` is relative (each semi-axis is scaled by ``1 + U(-j, j)``),
    the other jitters are absolute offsets.
    """

    ellipses: Tuple[EllipseSpec, ...]
    center_jitter: float = 0.0
    axes_jitter: float = 0.0
    rotation_jitter: float = 0.0
    intensity_jitter: float = 0.0
    seed: int = 0

    def __post_init__(self):
        jitters = (self.center_jitter, self.axes_jitter, self.rotation_jitter, self.intensity_jitter)
        if min(jitters) < 0:
            raise DataValidationError("jitter magnitudes must be non-negative")
        if self.axes_jitter >= 1:
            raise DataValidationError("axes_jitter must be < 1 to keep semi-axes positive")
        object.__setattr__(self, "ellipses", tuple(self.ellipses))


def _coords(shape):
    ys = (2.0 * np.arange(shape.height) + 1.0) / shape.height - 1.0
    xs = (2.0 * np.arange(shape.width) + 1.0) / shape.width - 1.0
    return np.meshgrid(xs, ys)


def render_phantom(specs: Sequence[EllipseSpec], shape) -> np.ndarray:
    """Sum the intensities of every ellipse containing each pixel center, clipped at 0."""
    shape = as_grid_shape(shape)
    x, y = _coords(shape)
    image = np.zeros(tuple(shape))
    for e in specs:
        dx, dy = x - e.center[0], y - e.center[1]
        c, s = np.cos(e.rotation), np.sin(e.rotation)
        u = dx * c + dy * s
        v = -dx * s + dy * c
        inside = (u / e.semi_axes[0]) ** 2 + (v / e.semi_axes[1]) ** 2 <= 1.0
        image[inside] += e.intensity
    return np.maximum(image, 0.0)


def _jitter(e: EllipseSpec, family: PhantomFamily, rng) -> EllipseSpec:
    cj, aj = family.center_jitter, family.axes_jitter
    return EllipseSpec(
        center=(e.center[0] + rng.uniform(-cj, cj), e.center[1] + rng.uniform(-cj, cj)),
        semi_axes=(e.semi_axes[0] * (1 + rng.uniform(-aj, aj)), e.semi_axes[1] * (1 + rng.uniform(-aj, aj))),
        rotation=e.rotation + rng.uniform(-family.rotation_jitter, family.rotation_jitter),
        intensity=e.intensity + rng.uniform(-family.intensity_jitter, family.intensity_jitter),
    )


def sample_family(family: PhantomFamily, count: int, shape) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Render ``count`` jittered phantoms and their centered k-space.

    Returns a list of ``(kspace, target)`` pairs; deterministic for a given
    family seed.
    """
    if count < 1:
        raise DataValidationError(f"count must be >= 1, got {count}")
    shape = as_grid_shape(shape)
    rng = np.random.default_rng(family.seed)
    items = []
    for _ in range(count):
        specs = [_jitter(e, family, rng) for e in family.ellipses]
        image = render_phantom(specs, shape)
        items.append((forward_transform(image.astype(np.complex128)), image))
    return items


def shepp_logan_ellipses() -> List[EllipseSpec]:
    """Modified (high-contrast) Shepp-Logan head."""
    # (x0, y0, a, b, phi_deg, intensity)
    table = [
        (0.0, 0.0, 0.69, 0.92, 0, 1.0),
        (0.0, -0.0184, 0.6624, 0.874, 0, -0.8),
        (0.22, 0.0, 0.11, 0.31, -18, -0.2),
        (-0.22, 0.0, 0.16, 0.41, 18, -0.2),
        (0.0, 0.35, 0.21, 0.25, 0, 0.1),
        (0.0, 0.1, 0.046, 0.046, 0, 0.1),
        (0.0, -0.1, 0.046, 0.046, 0, 0.1),
        (-0.08, -0.605, 0.046, 0.023, 0, 0.1),
        (0.0, -0.605, 0.023, 0.023, 0, 0.1),
        (0.06, -0.605, 0.023, 0.046, 0, 0.1),
    ]
    return [EllipseSpec((x0, y0), (a, b), np.deg2rad(phi), rho) for x0, y0, a, b, phi, rho in table]


def _concentric():
    return PhantomFamily(
        ellipses=(
            EllipseSpec((0.0, 0.0), (0.8, 0.7), 0.0, 1.0),
            EllipseSpec((0.0, 0.0), (0.6, 0.5), 0.0, -0.5),
            EllipseSpec((0.0, 0.0), (0.4, 0.35), 0.0, 0.6),
            EllipseSpec((0.0, 0.0), (0.2, 0.18), 0.0, -0.4),
        ),
        center_jitter=0.05,
        axes_jitter=0.1,
        rotation_jitter=0.3,
        intensity_jitter=0.1,
    )


def _striped():
    rows = np.linspace(-0.7, 0.7, 8)
    return PhantomFamily(
        ellipses=tuple(EllipseSpec((0.0, float(y)), (0.85, 0.05), 0.0, 1.0) for y in rows),
        center_jitter=0.02,
        axes_jitter=0.1,
        rotation_jitter=0.0,
        intensity_jitter=0.1,
    )


def _shepp_logan():
    return PhantomFamily(
        ellipses=tuple(shepp_logan_ellipses()),
        center_jitter=0.02,
        axes_jitter=0.05,
        rotation_jitter=0.05,
        intensity_jitter=0.02,
    )


FAMILIES = {"concentric": _concentric, "striped": _striped, "shepp-logan": _shepp_logan}


def make_family(name: str, seed: int = 0) -> PhantomFamily:
    """Built-in families: ``concentric``, ``striped`` (horizontal bars) and ``shepp-logan``."""
    try:
        factory = FAMILIES[name]
    except KeyError:
        raise DataValidationError(f"unknown phantom family {name!r}; choose from {sorted(FAMILIES)}")
    return replace(factory(), seed=seed)
