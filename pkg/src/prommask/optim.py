"""Budget-constrained stochastic optimization of a Bernoulli k-space mask.

Each iteration draws ``batch_size * mc_samples`` relaxed masks, runs the
zero-fill reconstruction with the hard (straight-through) mask, backpropagates
a reconstruction loss analytically to the probabilities, takes an Adam step and
projects the result onto ``{theta in [0, 1]^n : sum(theta) <= S}``. The budget
``S`` stays at ``n`` while exploring, shrinks towards ``floor(n / alpha)``
while constraining, and is held there while exploiting. The temperature
decays linearly over the whole run.
"""

import enum
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.fft

from .exceptions import ConfigurationError, DataValidationError, NumericalFailureError
from .kspace import _AXES, MAGNITUDE_EPS
from .masks import (
    LOGIT_EPS,
    BinaryMask,
    GumbelNoise,
    MaskDistribution,
    MaskKind,
    deterministic_mask,
    init_distribution,
    log_odds,
    model_average,
    sample_gumbel,
)

__all__ = [
    "ProMConfig",
    "AdamState",
    "Phase",
    "ScheduleState",
    "TrainTrace",
    "MSELoss",
    "loss_mse",
    "loss_mse_grad",
    "as_dataset",
    "objective_estimate",
    "gradient_estimate",
    "objective_and_gradient",
    "solve_lambda",
    "project",
    "target_budget",
    "anneal_S",
    "anneal_tau",
    "schedule_state",
    "adam_step",
    "optimize_single",
    "optimize_dataset",
    "optimize_runs",
    "run_prom",
    "run_seeds",
]

logger = logging.getLogger(__name__)

# Upper bound on complex elements held per forward/backward chunk (~64 MB).
_CHUNK_ELEMENTS = 1 << 22


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class ProMConfig:
    """Hyperparameters of one optimization run.

    ``loss`` is ``"mse"`` or a callable ``loss(recon, target) -> (values, grads)``
    acting on stacks: ``recon`` has shape ``(N, H, W)``, ``values`` shape
    ``(N,)`` and ``grads`` the shape of ``recon``. ``anneal_power`` bends the
    budget schedule; 1 keeps it linear. ``adam_eps`` is the Adam denominator
    floor; the default is large enough that small gradients on rarely
    sampled coordinates do not get amplified to full-size sign steps.
    """

    alpha: float = 4.0
    iterations: int = 2500
    learning_rate: float = 0.01
    batch_size: int = 32
    mc_samples: int = 4
    tau_start: float = 1.0
    tau_end: float = 0.03
    explore_fraction: float = 0.2
    constrain_end_fraction: float = 0.5
    anneal_power: float = 1.0
    adam_eps: float = 1e-4
    mask_kind: MaskKind = MaskKind.FULL_2D
    seed: Optional[int] = 0
    loss: Union[str, Callable] = "mse"

    def __post_init__(self):
        object.__setattr__(self, "mask_kind", MaskKind.parse(self.mask_kind))
        if not self.alpha >= 1:
            raise ConfigurationError(f"alpha must be >= 1, got {self.alpha}")
        for name in ("iterations", "batch_size", "mc_samples"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ConfigurationError(f"{name} must be a positive integer, got {value}")
        if not self.learning_rate > 0:
            raise ConfigurationError(f"learning_rate must be positive, got {self.learning_rate}")
        if not (self.tau_start > 0 and self.tau_end > 0):
            raise ConfigurationError("temperatures must be positive")
        if self.tau_end > self.tau_start:
            raise ConfigurationError("tau_end must not exceed tau_start")
        if not 0 <= self.explore_fraction < self.constrain_end_fraction <= 1:
            raise ConfigurationError(
                "need 0 <= explore_fraction < constrain_end_fraction <= 1, got "
                f"{self.explore_fraction} and {self.constrain_end_fraction}"
            )
        if not self.adam_eps > 0:
            raise ConfigurationError(f"adam_eps must be positive, got {self.adam_eps}")
        if not self.anneal_power > 0:
            raise ConfigurationError(f"anneal_power must be positive, got {self.anneal_power}")
        if not (self.loss == "mse" or callable(self.loss)):
            raise ConfigurationError(f"loss must be 'mse' or a callable, got {self.loss!r}")


# ---------------------------------------------------------------------------
# losses


def _check_pair(reconstruction, target):
    reconstruction = np.asarray(reconstruction, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if reconstruction.shape != target.shape:
        raise DataValidationError(
            f"reconstruction shape {reconstruction.shape} does not match target {target.shape}"
        )
    return reconstruction, target


def loss_mse(reconstruction, target) -> float:
    """Mean squared error over all elements."""
    reconstruction, target = _check_pair(reconstruction, target)
    return float(np.mean((reconstruction - target) ** 2))


def loss_mse_grad(reconstruction, target) -> np.ndarray:
    """Gradient of :func:`loss_mse` with respect to ``reconstruction``."""
    reconstruction, target = _check_pair(reconstruction, target)
    return 2.0 * (reconstruction - target) / reconstruction.size


class MSELoss:
    """Per-slice mean squared error on stacks of images."""

    def __call__(self, recon, target):
        diff = recon - target
        per_item = diff[0].size
        values = np.mean((diff * diff).reshape(len(diff), -1), axis=1)
        return values, (2.0 / per_item) * diff

    def __repr__(self):
        return "MSELoss()"


def _resolve_loss(loss):
    if isinstance(loss, str):
        if loss.lower() != "mse":
            raise ConfigurationError(f"unknown loss {loss!r}")
        return MSELoss()
    return loss


# ---------------------------------------------------------------------------
# data


def as_dataset(dataset) -> Tuple[np.ndarray, np.ndarray]:
    """Stack a dataset into ``(kspace, targets)`` arrays.

    ``dataset`` is either a sequence of ``(kspace, target)`` pairs or a pair of
    stacked arrays ``(kspace[N, H, W], targets[N, ...])``.
    """
    if (
        isinstance(dataset, tuple)
        and len(dataset) == 2
        and isinstance(dataset[0], np.ndarray)
        and dataset[0].ndim == 3
    ):
        kspace, targets = dataset
    else:
        pairs = list(dataset)
        if not pairs:
            raise DataValidationError("dataset is empty")
        shapes = {np.shape(k) for k, _ in pairs}
        tshapes = {np.shape(t) for _, t in pairs}
        if len(shapes) != 1 or len(tshapes) != 1:
            raise DataValidationError(f"dataset items have heterogeneous shapes: {sorted(shapes)}")
        kspace = np.stack([np.asarray(k) for k, _ in pairs])
        targets = np.stack([np.asarray(t) for _, t in pairs])
    kspace = np.asarray(kspace, dtype=np.complex128)
    targets = np.asarray(targets)
    if kspace.ndim != 3:
        raise DataValidationError(f"k-space stack must be 3D (N, H, W), got shape {kspace.shape}")
    if len(targets) != len(kspace):
        raise DataValidationError(f"{len(kspace)} k-space items but {len(targets)} targets")
    if len(kspace) == 0:
        raise DataValidationError("dataset is empty")
    if not np.all(np.isfinite(kspace)):
        raise DataValidationError("k-space contains non-finite values")
    if targets.dtype.kind in "fc":
        targets = targets.astype(np.float64)
    return kspace, targets


# ---------------------------------------------------------------------------
# relaxed objective and its gradient


def _shift(a):
    return scipy.fft.fftshift(a, axes=_AXES)


def _unshift(a):
    return scipy.fft.ifftshift(a, axes=_AXES)


def _evaluate(theta, kind, kspace, targets, g_diff, tau, loss, hard=True, need_grad=True):
    """Loss and d loss / d theta averaged over ``B * L`` relaxed samples.

    ``g_diff`` holds ``g1 - g0`` with shape ``(B, L, n)``. Returns the mean loss,
    the gradient (or None) and the per-sample losses with shape ``(B, L)``.
    """
    n_items, n_samples, _ = g_diff.shape
    height, width = kspace.shape[-2:]
    total = n_items * n_samples
    rho = log_odds(theta)
    theta_c = np.clip(theta, LOGIT_EPS, 1.0 - LOGIT_EPS)
    grad_rho = np.zeros_like(theta)
    samples = np.empty((n_items, n_samples))

    # Work in the unshifted FFT layout: shifting the real mask and image
    # arrays is cheaper than shifting the complex stacks around every FFT.
    step = max(1, _CHUNK_ELEMENTS // (n_samples * height * width))
    for start in range(0, n_items, step):
        sl = slice(start, start + step)
        k = _unshift(kspace[sl])[:, None]
        # logistic sigmoid; exp overflow to inf correctly gives 0
        with np.errstate(over="ignore"):
            soft = 1.0 / (1.0 + np.exp(-(rho + g_diff[sl]) / tau))
        m = (soft >= 0.5).astype(np.float64) if hard else soft
        if kind is MaskKind.LINES_1D:
            grid = np.broadcast_to(m[..., None, :], m.shape[:-1] + (height, width))
        else:
            grid = m.reshape(m.shape[:-1] + (height, width))
        image = scipy.fft.ifft2(k * _unshift(grid), axes=_AXES, norm="ortho")
        mod = np.abs(image)
        recon = _shift(mod)
        chunk = recon.shape[:2]
        flat_recon = recon.reshape((-1, height, width))
        flat_target = np.repeat(targets[sl], n_samples, axis=0)
        values, d_recon = loss(flat_recon, flat_target)
        samples[sl] = np.asarray(values, dtype=np.float64).reshape(chunk)
        if not need_grad:
            continue
        d_recon = _unshift(np.asarray(d_recon, dtype=np.float64).reshape(recon.shape)) / total
        # magnitude backward; below the floor this stays inside the unit-disk subgradient
        scale = d_recon / np.maximum(mod, MAGNITUDE_EPS)
        d_masked = scipy.fft.fft2(image * scale, axes=_AXES, norm="ortho")
        d_mask = _shift(k.real * d_masked.real + k.imag * d_masked.imag)
        if kind is MaskKind.LINES_1D:
            d_mask = d_mask.sum(axis=-2)
        else:
            d_mask = d_mask.reshape(chunk + (-1,))
        # straight-through: the hard mask's cotangent flows to the soft values unchanged
        d_z = d_mask * (soft * (1.0 - soft)) / tau
        grad_rho += d_z.sum(axis=(0, 1))

    value = float(samples.mean())
    if not need_grad:
        return value, None, samples
    return value, grad_rho / (theta_c * (1.0 - theta_c)), samples


def _prepare_batch(dist, batch, n_samples, tau, rng, noise):
    if not tau > 0:
        raise ConfigurationError(f"temperature must be positive, got {tau}")
    kspace, targets = as_dataset(batch)
    if kspace.shape[1:] != tuple(dist.shape):
        raise DataValidationError(
            f"k-space grid {kspace.shape[1:]} does not match distribution grid {tuple(dist.shape)}"
        )
    size = (len(kspace), int(n_samples), len(dist))
    if noise is None:
        noise = sample_gumbel(size, rng)
    g_diff = np.asarray(noise.difference if isinstance(noise, GumbelNoise) else noise, dtype=np.float64)
    if g_diff.shape != size:
        raise DataValidationError(f"noise has shape {g_diff.shape}, expected {size}")
    return kspace, targets, g_diff


def objective_estimate(dist, batch, n_samples, tau, rng=None, *, loss="mse", noise=None,
                       soft_forward=False, return_samples=False):
    """Monte-Carlo estimate of the expected reconstruction loss under ``dist``.

    Masks are hard straight-through samples unless ``soft_forward`` is set.
    With ``return_samples`` the ``(B, L)`` array of individual losses is
    returned as well.
    """
    kspace, targets, g_diff = _prepare_batch(dist, batch, n_samples, tau, rng, noise)
    value, _, samples = _evaluate(
        dist.theta, dist.kind, kspace, targets, g_diff, tau, _resolve_loss(loss),
        hard=not soft_forward, need_grad=False,
    )
    return (value, samples) if return_samples else value


def objective_and_gradient(dist, batch, n_samples, tau, rng=None, *, loss="mse", noise=None,
                           soft_forward=False, iteration=None):
    """Loss estimate and its gradient w.r.t. ``theta`` from one shared noise draw."""
    kspace, targets, g_diff = _prepare_batch(dist, batch, n_samples, tau, rng, noise)
    value, grad, _ = _evaluate(
        dist.theta, dist.kind, kspace, targets, g_diff, tau, _resolve_loss(loss),
        hard=not soft_forward,
    )
    if not np.all(np.isfinite(grad)):
        raise NumericalFailureError("non-finite gradient", iteration=iteration)
    return value, grad


def gradient_estimate(dist, batch, n_samples, tau, rng=None, *, loss="mse", noise=None,
                      soft_forward=False, iteration=None):
    """Gradient of the relaxed objective with respect to ``theta``.

    Called with a generator in the same state as a paired
    :func:`objective_estimate` call, both see the same Gumbel noise.

    Raises
    ------
    NumericalFailureError
        If any gradient entry is NaN or infinite.
    """
    return objective_and_gradient(
        dist, batch, n_samples, tau, rng, loss=loss, noise=noise,
        soft_forward=soft_forward, iteration=iteration,
    )[1]


# ---------------------------------------------------------------------------
# projection onto the budget set


def _excess(theta_tilde, lam, budget):
    return np.clip(theta_tilde - lam, 0.0, 1.0).sum() - budget


def solve_lambda(theta_tilde, budget) -> float:
    """Smallest shift ``lam`` with ``sum(clip(theta_tilde - lam, 0, 1)) = budget``.

    The excess function is continuous and non-increasing in ``lam``, so
    bisection on ``[min - 1, max]`` brackets the root. The smallest root is
    returned when the excess is flat at zero over an interval.
    """
    theta_tilde = np.asarray(theta_tilde, dtype=np.float64).ravel()
    n = theta_tilde.size
    if not 0 <= budget <= n:
        raise ConfigurationError(f"budget must be in [0, {n}], got {budget}")
    hi = float(theta_tilde.max())
    if budget == 0:
        return hi
    lo = float(theta_tilde.min()) - 1.0
    if _excess(theta_tilde, lo, budget) <= 0:
        return lo
    # invariant: excess(lo) > 0 >= excess(hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if _excess(theta_tilde, mid, budget) > 0:
            lo = mid
        else:
            hi = mid
    return hi


def project(theta_tilde, budget) -> np.ndarray:
    """Euclidean projection onto ``{theta in [0, 1]^n : sum(theta) <= budget}``."""
    theta_tilde = np.asarray(theta_tilde, dtype=np.float64)
    lam = max(0.0, solve_lambda(theta_tilde, budget))
    return np.clip(theta_tilde - lam, 0.0, 1.0)


# ---------------------------------------------------------------------------
# schedules


class Phase(str, enum.Enum):
    EXPLORATION = "exploration"
    CONSTRAINING = "constraining"
    EXPLOITATION = "exploitation"


@dataclass(frozen=True)
class ScheduleState:
    current_S: int
    current_tau: float
    phase: Phase


def target_budget(n, alpha) -> int:
    return int(math.floor(n / alpha))


def _phase_bounds(config):
    i_min = int(math.floor(config.explore_fraction * config.iterations))
    i_max = int(math.floor(config.constrain_end_fraction * config.iterations))
    return i_min, i_max


def anneal_S(iteration, n, config) -> int:
    """Sampling budget at ``iteration`` for a parameter vector of length ``n``."""
    i_min, i_max = _phase_bounds(config)
    final = target_budget(n, config.alpha)
    if iteration < i_min:
        return int(n)
    if iteration >= i_max:
        return final
    d_target = 1.0 / config.alpha
    progress = (iteration - i_min) / (i_max - i_min)
    d_cur = d_target + (1.0 - d_target) * (1.0 - progress) ** config.anneal_power
    return int(min(n, max(final, round(d_cur * n))))


def anneal_tau(iteration, config) -> float:
    if config.iterations == 1:
        return float(config.tau_start)
    frac = iteration / (config.iterations - 1)
    return float(config.tau_start + (config.tau_end - config.tau_start) * frac)


def schedule_state(iteration, n, config) -> ScheduleState:
    i_min, i_max = _phase_bounds(config)
    if iteration < i_min:
        phase = Phase.EXPLORATION
    elif iteration < i_max:
        phase = Phase.CONSTRAINING
    else:
        phase = Phase.EXPLOITATION
    return ScheduleState(anneal_S(iteration, n, config), anneal_tau(iteration, config), phase)


# ---------------------------------------------------------------------------
# Adam


@dataclass(frozen=True)
class AdamState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, n, **kwargs):
        return cls(np.zeros(n), np.zeros(n), 0, **kwargs)


def adam_step(state: AdamState, theta, gradient, lr) -> Tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update; returns the unconstrained parameters and new state."""
    theta = np.asarray(theta, dtype=np.float64)
    gradient = np.asarray(gradient, dtype=np.float64)
    if theta.shape != gradient.shape or theta.shape != state.first_moment.shape:
        raise DataValidationError("theta, gradient and Adam moments must have the same shape")
    t = state.step_count + 1
    m = state.beta1 * state.first_moment + (1.0 - state.beta1) * gradient
    v = state.beta2 * state.second_moment + (1.0 - state.beta2) * gradient * gradient
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    theta_tilde = theta - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    if not np.all(np.isfinite(theta_tilde)):
        raise NumericalFailureError("non-finite Adam update")
    return theta_tilde, replace(state, first_moment=m, second_moment=v, step_count=t)


# ---------------------------------------------------------------------------
# training loops


@dataclass
class TrainTrace:
    """Per-iteration record of a run (loss is the batch estimate before the update)."""

    n_params: int
    iteration: List[int] = field(default_factory=list)
    loss: List[float] = field(default_factory=list)
    sum_theta: List[float] = field(default_factory=list)
    S: List[int] = field(default_factory=list)
    tau: List[float] = field(default_factory=list)

    def append(self, iteration, loss, sum_theta, S, tau):
        self.iteration.append(int(iteration))
        self.loss.append(float(loss))
        self.sum_theta.append(float(sum_theta))
        self.S.append(int(S))
        self.tau.append(float(tau))

    def __len__(self):
        return len(self.iteration)

    @property
    def dense_rate(self) -> np.ndarray:
        return np.asarray(self.S, dtype=np.float64) / self.n_params

    def rows(self):
        return zip(self.iteration, self.loss, self.sum_theta, self.S, self.tau)


def optimize_dataset(dataset, config: ProMConfig) -> Tuple[MaskDistribution, TrainTrace]:
    """Optimize a mask distribution on random batches drawn from ``dataset``.

    Batches are drawn without replacement when the dataset holds at least
    ``batch_size`` items, with replacement otherwise. Initialization, batch
    selection and Gumbel noise use independent streams spawned from
    ``config.seed``.

    Raises
    ------
    NumericalFailureError
        With ``.iteration`` and the partial ``.trace`` attached.
    """
    kspace, targets = as_dataset(dataset)
    n_items, height, width = kspace.shape
    loss = _resolve_loss(config.loss)
    init_seq, batch_seq, noise_seq = np.random.SeedSequence(config.seed).spawn(3)
    batch_rng = np.random.default_rng(batch_seq)
    noise_rng = np.random.default_rng(noise_seq)

    dist = init_distribution((height, width), config.mask_kind, np.random.default_rng(init_seq))
    kind, n = dist.kind, len(dist)
    theta = dist.theta.copy()
    adam = AdamState.zeros(n, eps=config.adam_eps)
    trace = TrainTrace(n)
    B, L = config.batch_size, config.mc_samples

    for i in range(config.iterations):
        tau = anneal_tau(i, config)
        if n_items >= B:
            idx = batch_rng.choice(n_items, size=B, replace=False)
        else:
            idx = batch_rng.integers(0, n_items, size=B)
        # g1 - g0 of two independent standard Gumbels is standard logistic
        g_diff = noise_rng.logistic(size=(B, L, n))
        try:
            value, grad, _ = _evaluate(theta, kind, kspace[idx], targets[idx], g_diff, tau, loss)
            if not np.all(np.isfinite(grad)):
                raise NumericalFailureError("non-finite gradient")
            theta_tilde, adam = adam_step(adam, theta, grad, config.learning_rate)
        except NumericalFailureError as exc:
            raise NumericalFailureError(f"{exc} at iteration {i}", iteration=i, trace=trace) from exc
        budget = anneal_S(i, n, config)
        theta = project(theta_tilde, budget)
        trace.append(i, value, theta.sum(), budget, tau)
        if logger.isEnabledFor(logging.DEBUG) and i % 100 == 0:
            logger.debug("iter %d loss %.4g sum(theta) %.1f S %d tau %.3f", i, value, theta.sum(), budget, tau)

    return MaskDistribution(dist.shape, kind, theta), trace


def optimize_single(kspace, target, config: ProMConfig) -> Tuple[MaskDistribution, TrainTrace]:
    """Optimize on one slice; every batch repeats it ``batch_size`` times."""
    return optimize_dataset([(kspace, target)], config)


def run_seeds(seed, num_runs) -> List[int]:
    """Per-run seeds derived from a base seed."""
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(num_runs)]


def optimize_runs(dataset, config: ProMConfig, num_runs=10) -> Tuple[MaskDistribution, List[TrainTrace]]:
    """Train ``num_runs`` independent distributions and average their probabilities."""
    if int(num_runs) != num_runs or num_runs < 1:
        raise ConfigurationError(f"num_runs must be a positive integer, got {num_runs}")
    data = as_dataset(dataset)
    dists, traces = [], []
    for run, seed in enumerate(run_seeds(config.seed, num_runs)):
        logger.info("run %d/%d (seed %d)", run + 1, num_runs, seed)
        dist, trace = optimize_dataset(data, replace(config, seed=seed))
        dists.append(dist)
        traces.append(trace)
    return model_average(dists), traces


def run_prom(dataset, config: ProMConfig, num_runs=10) -> BinaryMask:
    """Averaged distribution of ``num_runs`` runs, reduced to its top ``floor(n / alpha)`` entries."""
    dist, _ = optimize_runs(dataset, config, num_runs)
    return deterministic_mask(dist, target_budget(len(dist), config.alpha))
