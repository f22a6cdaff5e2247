"""Bernoulli mask distributions and their relaxed sampling.

A :class:`MaskDistribution` holds one sampling probability per k-space element
(``FULL_2D``) or per phase-encode column (``LINES_1D``). Binary masks are drawn
through the Gumbel difference trick: ``1(rho + g1 - g0 >= 0)`` has exactly
Bernoulli(theta) marginals, and replacing the indicator by a tempered sigmoid
gives a differentiable surrogate.
"""

import enum
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy.special import expit

from .exceptions import ConfigurationError, DataValidationError

__all__ = [
    "LOGIT_EPS",
    "GridShape",
    "MaskKind",
    "MaskDistribution",
    "SoftMask",
    "BinaryMask",
    "GumbelNoise",
    "as_grid_shape",
    "init_distribution",
    "log_odds",
    "gumbel_from_uniform",
    "sample_gumbel",
    "sample_soft",
    "straight_through",
    "straight_through_vjp",
    "deterministic_mask",
    "model_average",
    "broadcast_lines",
    "expected_density",
]

#: Probabilities are clamped into ``[LOGIT_EPS, 1 - LOGIT_EPS]`` before taking log-odds.
LOGIT_EPS = 1e-6


class GridShape(NamedTuple):
    height: int
    width: int

    @property
    def size(self) -> int:
        return self.height * self.width


def as_grid_shape(shape) -> GridShape:
    try:
        height, width = (int(s) for s in shape)
    except (TypeError, ValueError):
        raise DataValidationError(f"grid shape must be a (height, width) pair, got {shape!r}")
    if height < 1 or width < 1:
        raise DataValidationError(f"grid dimensions must be positive, got {height}x{width}")
    return GridShape(height, width)


class MaskKind(str, enum.Enum):
    FULL_2D = "2d"
    LINES_1D = "1d"

    @classmethod
    def parse(cls, value) -> "MaskKind":
        if isinstance(value, cls):
            return value
        aliases = {"2d": cls.FULL_2D, "full2d": cls.FULL_2D, "1d": cls.LINES_1D, "lines1d": cls.LINES_1D}
        try:
            return aliases[str(value).lower()]
        except KeyError:
            raise ConfigurationError(f"unknown mask kind {value!r}; expected '2d' or '1d'")


def _param_length(shape: GridShape, kind: MaskKind) -> int:
    return shape.size if kind is MaskKind.FULL_2D else shape.width


@dataclass(frozen=True)
class MaskDistribution:
    """Independent Bernoulli probabilities over a k-space grid.

    Attributes
    ----------
    shape : GridShape
        Grid the distribution lives on.
    kind : MaskKind
        ``FULL_2D`` (one probability per element, row-major) or ``LINES_1D``
        (one probability per column).
    theta : ndarray
        Probabilities in ``[0, 1]``.
    """

    shape: GridShape
    kind: MaskKind
    theta: np.ndarray

    def __post_init__(self):
        shape = as_grid_shape(self.shape)
        kind = MaskKind.parse(self.kind)
        theta = np.array(self.theta, dtype=np.float64).ravel()
        if theta.size != _param_length(shape, kind):
            raise DataValidationError(
                f"theta has {theta.size} entries, expected {_param_length(shape, kind)} "
                f"for a {kind.value} mask on a {shape.height}x{shape.width} grid"
            )
        if not np.all(np.isfinite(theta)):
            raise DataValidationError("theta contains non-finite values")
        if np.any(theta < 0.0) or np.any(theta > 1.0):
            raise DataValidationError("theta entries must lie in [0, 1]")
        theta.flags.writeable = False
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "theta", theta)

    def __len__(self):
        return self.theta.size

    def grid(self) -> np.ndarray:
        """Probabilities laid out on the full ``(H, W)`` grid."""
        if self.kind is MaskKind.LINES_1D:
            return broadcast_lines(self.theta, self.shape)
        return self.theta.reshape(self.shape)


@dataclass(frozen=True)
class SoftMask:
    values: np.ndarray
    kind: MaskKind = MaskKind.FULL_2D


@dataclass(frozen=True)
class BinaryMask:
    """Hard 0/1 mask; ``soft`` keeps the relaxed values when produced by :func:`straight_through`."""

    values: np.ndarray
    kind: MaskKind = MaskKind.FULL_2D
    shape: Optional[GridShape] = None
    soft: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if not np.all((values == 0.0) | (values == 1.0)):
            raise DataValidationError("binary mask entries must be exactly 0 or 1")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "kind", MaskKind.parse(self.kind))
        if self.shape is not None:
            object.__setattr__(self, "shape", as_grid_shape(self.shape))

    @property
    def n_active(self) -> int:
        return int(np.count_nonzero(self.values))

    def grid(self, shape=None) -> np.ndarray:
        """The mask on the full ``(H, W)`` grid."""
        shape = as_grid_shape(shape if shape is not None else self.shape)
        if self.kind is MaskKind.LINES_1D:
            return broadcast_lines(self.values, shape)
        return self.values.reshape(shape)


@dataclass(frozen=True)
class GumbelNoise:
    g1: np.ndarray
    g0: np.ndarray

    @property
    def difference(self) -> np.ndarray:
        return self.g1 - self.g0


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def init_distribution(shape, kind=MaskKind.FULL_2D, seed=None) -> MaskDistribution:
    """Random near-maximum-entropy start: ``theta ~ U[0.45, 0.55]`` i.i.d."""
    shape = as_grid_shape(shape)
    kind = MaskKind.parse(kind)
    theta = _rng(seed).uniform(0.45, 0.55, size=_param_length(shape, kind))
    return MaskDistribution(shape, kind, theta)


def _clamp(theta):
    return np.clip(theta, LOGIT_EPS, 1.0 - LOGIT_EPS)


def log_odds(dist) -> np.ndarray:
    """``log(theta / (1 - theta))`` of the clamped probabilities.

    Accepts a :class:`MaskDistribution` or a raw probability array.
    """
    theta = dist.theta if isinstance(dist, MaskDistribution) else np.asarray(dist, dtype=np.float64)
    theta = _clamp(theta)
    return np.log(theta) - np.log1p(-theta)


def gumbel_from_uniform(u):
    """Inverse-CDF map of uniforms in ``(0, 1)`` to standard Gumbel samples."""
    return -np.log(-np.log(u))


def sample_gumbel(size, seed=None) -> GumbelNoise:
    """Draw two independent standard Gumbel arrays (``g1`` then ``g0``)."""
    rng = _rng(seed)
    tiny = np.finfo(np.float64).tiny
    # Generator.random is on [0, 1); lift exact zeros off the boundary.
    u1 = np.maximum(rng.random(size), tiny)
    u0 = np.maximum(rng.random(size), tiny)
    return GumbelNoise(gumbel_from_uniform(u1), gumbel_from_uniform(u0))


def _check_tau(tau):
    if not tau > 0:
        raise ConfigurationError(f"temperature must be positive, got {tau}")


def sample_soft(rho, noise: GumbelNoise, tau: float) -> SoftMask:
    """Relaxed Bernoulli sample ``sigmoid((rho + g1 - g0) / tau)``."""
    _check_tau(tau)
    return SoftMask(expit((np.asarray(rho) + noise.g1 - noise.g0) / tau))


def straight_through(soft) -> BinaryMask:
    """Threshold at 0.5 (inclusive) and keep the soft values for the backward pass.

    The backward rule is the identity on the soft values, see
    :func:`straight_through_vjp`.
    """
    kind = MaskKind.FULL_2D
    if isinstance(soft, SoftMask):
        kind, soft = soft.kind, soft.values
    soft = np.asarray(soft, dtype=np.float64)
    return BinaryMask((soft >= 0.5).astype(np.float64), kind=kind, soft=soft)


def straight_through_vjp(cotangent):
    return cotangent


def deterministic_mask(dist: MaskDistribution, n_active: int) -> BinaryMask:
    """Select the ``n_active`` most probable entries; ties go to the lowest index."""
    n = len(dist)
    if not 0 <= n_active <= n:
        raise ConfigurationError(f"number of active entries must be in [0, {n}], got {n_active}")
    order = np.argsort(-dist.theta, kind="stable")
    values = np.zeros(n)
    values[order[:n_active]] = 1.0
    return BinaryMask(values, kind=dist.kind, shape=dist.shape)


def model_average(dists: Sequence[MaskDistribution]) -> MaskDistribution:
    """Element-wise mean of the probability vectors of several runs."""
    dists = list(dists)
    if not dists:
        raise DataValidationError("need at least one distribution to average")
    first = dists[0]
    for d in dists[1:]:
        if d.shape != first.shape or d.kind is not first.kind:
            raise DataValidationError("cannot average distributions with different shape or kind")
    return MaskDistribution(first.shape, first.kind, np.mean([d.theta for d in dists], axis=0))


def broadcast_lines(lines, shape) -> np.ndarray:
    """Replicate a per-column vector down every row of an ``(H, W)`` grid.

    Leading batch axes of ``lines`` are kept.
    """
    if isinstance(lines, (BinaryMask, SoftMask)):
        lines = lines.values
    lines = np.asarray(lines, dtype=np.float64)
    shape = as_grid_shape(shape)
    if lines.shape[-1] != shape.width:
        raise DataValidationError(f"line vector has {lines.shape[-1]} entries, grid width is {shape.width}")
    return np.broadcast_to(lines[..., None, :], lines.shape[:-1] + tuple(shape)).copy()


def expected_density(dist: MaskDistribution) -> float:
    """Fraction of entries expected to be sampled, ``sum(theta) / len(theta)``."""
    return float(dist.theta.sum() / len(dist))
