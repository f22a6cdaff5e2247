"""scikit-learn compatible mask estimators.

All estimators take k-space stacks ``X`` of shape ``(n_slices, H, W)`` (complex,
centered). ``fit`` learns or draws an undersampling mask; ``transform`` returns
the zero-filled magnitude reconstructions under that mask.

>>> from prommask import ProMMask
>>> est = ProMMask(alpha=8, iterations=300, num_runs=1).fit(kspace)  # doctest: +SKIP
>>> est.mask_.sum() == kspace[0].size // 8                            # doctest: +SKIP
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_grid, check_kspace, check_targets
from .baselines import DEFAULT_CENTER_FRACTION, DEFAULT_SIGMA_FRACTION, equispaced_mask, gaussian_mask
from .kspace import zero_fill_reconstruct
from .masks import BinaryMask, deterministic_mask
from .metrics import nmse
from .optim import ProMConfig, optimize_runs, target_budget

__all__ = ["ProMMask", "EquispacedMask", "GaussianMask"]


class _MaskTransformerMixin(TransformerMixin):
    def transform(self, X):
        """Zero-filled magnitude reconstruction of every slice under ``mask_``."""
        check_is_fitted(self, "mask_")
        X = check_kspace(X)
        check_grid(X, self.grid_shape_)
        return zero_fill_reconstruct(X, self.mask_)

    def score(self, X, y=None):
        """Negative mean NMSE of the reconstructions (higher is better)."""
        X = check_kspace(X)
        y = check_targets(y, X)
        recon = self.transform(X)
        return -float(np.mean([nmse(r, t) for r, t in zip(recon, y)]))

    def _set_mask(self, binary, shape):
        self.binary_mask_ = binary
        self.mask_ = binary.grid(shape)
        self.grid_shape_ = tuple(shape)
        self.n_sampled_ = int(self.mask_.sum())


class ProMMask(_MaskTransformerMixin, BaseEstimator):
    """Learn a budget-constrained probabilistic undersampling mask.

    Parameters
    ----------
    alpha : float, default=4.0
        Acceleration factor; the final mask keeps ``floor(n / alpha)`` entries
        where ``n`` is the number of grid elements (or columns for ``"1d"``).
    iterations : int, default=2500
    learning_rate : float, default=0.01
    batch_size : int, default=32
        Slices drawn per iteration.
    mc_samples : int, default=4
        Mask samples per slice per iteration.
    tau_start, tau_end : float, default=1.0, 0.03
        Endpoints of the linear temperature schedule.
    explore_fraction, constrain_end_fraction : float, default=0.2, 0.5
        Fractions of the run at which the budget starts and stops shrinking.
    anneal_power : float, default=1.0
        Exponent of the budget schedule (3 gives a cubic decay).
    adam_eps : float, default=1e-4
        Adam denominator floor.
    mask_kind : {"2d", "1d"}, default="2d"
        Per-element mask or whole phase-encode columns.
    num_runs : int, default=10
        Independent runs whose probabilities are averaged.
    loss : "mse" or callable, default="mse"
        See :class:`~prommask.optim.ProMConfig`.
    random_state : int or None, default=0

    Attributes
    ----------
    distribution_ : MaskDistribution
        Averaged probabilities.
    theta_ : ndarray
        ``distribution_.theta`` on the ``(H, W)`` grid.
    binary_mask_ : BinaryMask
        Top-``budget_`` entries of ``distribution_``.
    mask_ : ndarray of shape (H, W)
        ``binary_mask_`` on the full grid.
    budget_ : int
    traces_ : list of TrainTrace
    """

    def __init__(
        self,
        alpha=4.0,
        iterations=2500,
        learning_rate=0.01,
        batch_size=32,
        mc_samples=4,
        tau_start=1.0,
        tau_end=0.03,
        explore_fraction=0.2,
        constrain_end_fraction=0.5,
        anneal_power=1.0,
        adam_eps=1e-4,
        mask_kind="2d",
        num_runs=10,
        loss="mse",
        random_state=0,
    ):
        self.alpha = alpha
        self.iterations = iterations
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.mc_samples = mc_samples
        self.tau_start = tau_start
        self.tau_end = tau_end
        self.explore_fraction = explore_fraction
        self.constrain_end_fraction = constrain_end_fraction
        self.anneal_power = anneal_power
        self.adam_eps = adam_eps
        self.mask_kind = mask_kind
        self.num_runs = num_runs
        self.loss = loss
        self.random_state = random_state

    def to_config(self) -> ProMConfig:
        return ProMConfig(
            alpha=self.alpha,
            iterations=self.iterations,
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            mc_samples=self.mc_samples,
            tau_start=self.tau_start,
            tau_end=self.tau_end,
            explore_fraction=self.explore_fraction,
            constrain_end_fraction=self.constrain_end_fraction,
            anneal_power=self.anneal_power,
            adam_eps=self.adam_eps,
            mask_kind=self.mask_kind,
            seed=self.random_state,
            loss=self.loss,
        )

    def fit(self, X, y=None):
        """Optimize the mask on k-space ``X`` against targets ``y``.

        ``y`` defaults to the magnitude of the fully sampled reconstruction.
        """
        config = self.to_config()
        X = check_kspace(X)
        y = check_targets(y, X)
        dist, traces = optimize_runs((X, y), config, self.num_runs)
        self.distribution_ = dist
        self.theta_ = dist.grid()
        self.traces_ = traces
        self.budget_ = target_budget(len(dist), config.alpha)
        self._set_mask(deterministic_mask(dist, self.budget_), dist.shape)
        return self

    def sample_mask(self, random_state=None):
        """Draw one binary grid mask from ``distribution_``."""
        check_is_fitted(self, "distribution_")
        rng = np.random.default_rng(random_state)
        values = (rng.random(len(self.distribution_)) < self.distribution_.theta).astype(float)
        return BinaryMask(values, self.distribution_.kind, self.distribution_.shape).grid()


class EquispacedMask(_MaskTransformerMixin, BaseEstimator):
    """Equispaced column mask with a fully sampled center; ``fit`` only reads the grid shape."""

    def __init__(self, alpha=4.0, center_fraction=DEFAULT_CENTER_FRACTION, random_state=None):
        self.alpha = alpha
        self.center_fraction = center_fraction
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_kspace(X)
        shape = X.shape[1:]
        self._set_mask(equispaced_mask(shape, self.alpha, self.center_fraction, self.random_state), shape)
        return self


class GaussianMask(_MaskTransformerMixin, BaseEstimator):
    """2D variable-density Gaussian mask; ``fit`` only reads the grid shape."""

    def __init__(self, alpha=4.0, sigma_fraction=DEFAULT_SIGMA_FRACTION, random_state=None):
        self.alpha = alpha
        self.sigma_fraction = sigma_fraction
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_kspace(X)
        shape = X.shape[1:]
        self._set_mask(gaussian_mask(shape, self.alpha, self.sigma_fraction, self.random_state), shape)
        return self
