"""Evaluation metrics: prediction quality, posterior divergence, relative
errors, bootstrap intervals and kernel density estimates."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, UndefinedMetricError
from .grids import PosteriorGrid
from .rng import RngStream

log = logging.getLogger(__name__)

KL_FLOOR = 1e-300


@dataclass
class TaskResult:
    """One inference task scored for one method."""

    task_id: int
    method_id: str
    theta_true: np.ndarray
    posterior_mean: np.ndarray
    relative_errors: np.ndarray
    kl: float = None


@dataclass
class BootstrapReport:
    statistic: str
    lower: float
    upper: float
    average: float
    n_resamples: int
    sample_size: int

    def __post_init__(self):
        if not self.lower <= self.average <= self.upper:
            raise ConfigurationError("bootstrap interval must bracket the average")


def r_squared(preds, targets) -> float:
    """Coefficient of determination of vector predictions:
    1 - sum ||pred_i - t_i||^2 / sum ||t_i - mean(t)||^2."""
    preds = np.atleast_2d(np.asarray(preds, dtype=float))
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    if preds.shape != targets.shape or len(preds) < 2:
        raise ConfigurationError("need matching (n >= 2, d) prediction/target arrays")
    center = targets - targets.mean(axis=0)
    denom = float(np.sum(center**2))
    if denom == 0.0:
        raise UndefinedMetricError("all targets identical: R^2 undefined")
    return 1.0 - float(np.sum((preds - targets) ** 2)) / denom


def mse(preds, targets) -> float:
    """Per-coordinate mean squared error: mean_i ||pred_i - t_i||^2 / d."""
    preds = np.atleast_2d(np.asarray(preds, dtype=float))
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    if preds.shape != targets.shape or len(preds) < 1:
        raise ConfigurationError("need matching (n, d) prediction/target arrays")
    return float(np.mean((preds - targets) ** 2))


def kl_divergence(P: PosteriorGrid, Q: PosteriorGrid) -> float:
    """Discrete KL between grid masses, sum P log(P/Q) over P > 0 nodes.

    Zero Q mass under positive P mass is floored at 1e-300 with a logged
    warning (the divergence is then finite but enormous, as it should be).
    """
    if not P.same_grid(Q):
        raise ConfigurationError("KL requires identical grids")
    p = P.masses.ravel()
    q = Q.masses.ravel()
    mask = p > 0
    q_masked = q[mask]
    if np.any(q_masked == 0.0):
        log.warning("KL: %d nodes have zero approximate mass under positive "
                    "exact mass; flooring", int(np.sum(q_masked == 0.0)))
        q_masked = np.maximum(q_masked, KL_FLOOR)
    return float(np.sum(p[mask] * (np.log(p[mask]) - np.log(q_masked))))


def posterior_mean(P: PosteriorGrid) -> np.ndarray:
    """Weighted sum of node coordinates under the grid masses."""
    return P.nodes().T @ P.masses.ravel()


def relative_error(post_mean, theta_true) -> np.ndarray:
    """|posterior mean - truth| / |truth| per dimension."""
    post_mean = np.asarray(post_mean, dtype=float)
    theta_true = np.asarray(theta_true, dtype=float)
    if post_mean.shape != theta_true.shape:
        raise ConfigurationError("dimension mismatch")
    if np.any(theta_true == 0.0):
        raise UndefinedMetricError("relative error undefined at zero true parameter")
    return np.abs(post_mean - theta_true) / np.abs(theta_true)


def rel_error_difference(re_a, re_b) -> np.ndarray:
    """Paired differences RE_A - RE_B over tasks; negative means A better."""
    re_a = np.asarray(re_a, dtype=float)
    re_b = np.asarray(re_b, dtype=float)
    if re_a.shape != re_b.shape:
        raise ConfigurationError("paired relative errors must have equal shape")
    return re_a - re_b


_STATS = {"mean": np.mean, "median": np.median}


def bootstrap_ci(samples, statistic: str = "mean", n_resamples: int = 200,
                 level: float = 0.95, rng: RngStream = None) -> BootstrapReport:
    """Percentile bootstrap interval for the mean or median.

    Resamples with replacement at the original size; reports the central
    ``level`` percentile interval and the average of the bootstrap
    distribution.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 1 or len(samples) < 2:
        raise ConfigurationError("need a 1-D sample of size >= 2")
    if statistic not in _STATS:
        raise ConfigurationError(f"unknown statistic {statistic!r}")
    gen = rng.generator if rng is not None else np.random.default_rng(0)
    idx = gen.integers(0, len(samples), size=(n_resamples, len(samples)))
    stats = _STATS[statistic](samples[idx], axis=1)
    alpha = 100.0 * (1.0 - level) / 2.0
    lower, upper = np.percentile(stats, [alpha, 100.0 - alpha])
    return BootstrapReport(statistic=statistic, lower=float(lower),
                           upper=float(upper), average=float(stats.mean()),
                           n_resamples=n_resamples, sample_size=len(samples))


def gaussian_kde(samples, bandwidth: float, eval_points) -> np.ndarray:
    """f(x) = (1/(n h)) sum_j phi((x - s_j)/h) at the evaluation points."""
    if bandwidth <= 0:
        raise ConfigurationError("bandwidth must be positive")
    samples = np.asarray(samples, dtype=float)
    eval_points = np.asarray(eval_points, dtype=float)
    z = (eval_points[:, None] - samples[None, :]) / bandwidth
    dens = np.exp(-0.5 * z**2).sum(axis=1)
    return dens / (len(samples) * bandwidth * np.sqrt(2.0 * np.pi))
