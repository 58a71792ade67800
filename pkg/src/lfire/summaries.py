"""Summary statistics: quadratic feature expansion and the manual sets.

A summary map turns a batch of raw series (n, channels, length) into
summary vectors (n, q); the classifier features are always the quadratic
expansion of those summaries, so every method shares the same log-ratio
model family.
"""
from __future__ import annotations

import numpy as np

from .errors import ConfigurationError
from .simulators import TimeSeries


def expand_features(summaries) -> np.ndarray:
    """Quadratic feature expansion with a trailing constant.

    For a d-vector s returns (s_1..s_d, s_1^2, s_1 s_2, .., s_d^2, 1) in
    upper-triangle order, length d + d(d+1)/2 + 1. Accepts a single vector
    or an (n, d) batch; d = 0 yields just the constant.
    """
    s = np.asarray(summaries, dtype=float)
    single = s.ndim == 1
    if single:
        s = s[None, :]
    n, d = s.shape
    iu, ju = np.triu_indices(d)
    out = np.concatenate([s, s[:, iu] * s[:, ju], np.ones((n, 1))], axis=1)
    return out[0] if single else out


def expanded_length(d: int) -> int:
    return d + d * (d + 1) // 2 + 1


def _as_batch(x) -> np.ndarray:
    if isinstance(x, TimeSeries):
        return x.samples[None, :, :]
    x = np.asarray(x, dtype=float)
    if x.ndim == 2:
        return x[None, :, :]
    if x.ndim != 3:
        raise ConfigurationError(f"expected (n, channels, length), got {x.shape}")
    return x


def _autocovariances(x, lags):
    """Biased (1/T) sample autocovariances per series; x is (n, T)."""
    T = x.shape[1]
    xc = x - x.mean(axis=1, keepdims=True)
    out = np.empty((x.shape[0], len(lags)))
    for k, lag in enumerate(lags):
        if lag == 0:
            out[:, k] = (xc * xc).sum(axis=1) / T
        else:
            out[:, k] = (xc[:, :-lag] * xc[:, lag:]).sum(axis=1) / T
    return out


def _safe_ratio(num, den):
    """num/den with the zero-variance convention: 0 where den == 0."""
    den = np.broadcast_to(den, num.shape)
    out = np.zeros_like(num)
    np.divide(num, den, out=out, where=den != 0)
    return out


def arch_summaries(batch) -> np.ndarray:
    """Auto-covariances then auto-correlations at lags 1..5 (10 values)."""
    x = _as_batch(batch)[:, 0, :]
    cov = _autocovariances(x, [0, 1, 2, 3, 4, 5])
    corr = _safe_ratio(cov[:, 1:], cov[:, :1])
    return np.concatenate([cov[:, 1:], corr], axis=1)


def ma2_summaries(batch) -> np.ndarray:
    """Auto-correlations at lags 1 and 2."""
    x = _as_batch(batch)[:, 0, :]
    cov = _autocovariances(x, [0, 1, 2])
    return _safe_ratio(cov[:, 1:], cov[:, :1])


def lotka_volterra_summaries(batch) -> np.ndarray:
    """The raw series itself, channels concatenated (100 values)."""
    x = _as_batch(batch)
    return x.reshape(x.shape[0], -1)


LORENZ_STAT_SLOTS = ("mean", "variance", "autocov1",
                     "crosscov_prev0", "crosscov_next0", "crosscov_prev1")


def lorenz96_summaries(batch, slots=LORENZ_STAT_SLOTS) -> np.ndarray:
    """Six per-channel statistics averaged over the 40 dimensions.

    The slot decomposition is configurable; the default is the package's
    reading of the customary six (mean, variance, lag-1 autocovariance,
    same-time cross-covariances with both cyclic neighbours, and the lag-1
    cross-covariance with the left neighbour). All covariances use the
    biased 1/T normalization on channel-centered series.
    """
    x = _as_batch(batch)
    n, K, T = x.shape
    xc = x - x.mean(axis=2, keepdims=True)
    prev = np.roll(xc, 1, axis=1)   # channel k-1, cyclic
    nxt = np.roll(xc, -1, axis=1)   # channel k+1
    stats = {
        "mean": lambda: x.mean(axis=2),
        "variance": lambda: (xc * xc).sum(axis=2) / T,
        "autocov1": lambda: (xc[:, :, :-1] * xc[:, :, 1:]).sum(axis=2) / T,
        "crosscov_prev0": lambda: (xc * prev).sum(axis=2) / T,
        "crosscov_next0": lambda: (xc * nxt).sum(axis=2) / T,
        "crosscov_prev1": lambda: (xc[:, :, 1:] * prev[:, :, :-1]).sum(axis=2) / T,
        "crosscov_next1": lambda: (xc[:, :, 1:] * nxt[:, :, :-1]).sum(axis=2) / T,
    }
    cols = []
    for slot in slots:
        if slot not in stats:
            raise ConfigurationError(f"unknown lorenz96 statistic {slot!r}")
        cols.append(stats[slot]().mean(axis=1))
    return np.stack(cols, axis=1)


_MANUAL = {
    "arch": arch_summaries,
    "ma2": ma2_summaries,
    "lotka-volterra": lotka_volterra_summaries,
    "lorenz96": lorenz96_summaries,
}


def manual_summaries(model_id: str, x) -> np.ndarray:
    """Expert summary statistics for one series or a batch.

    The ricker model has no in-scope manual statistics (its customary
    summaries belong to methods outside this package).
    """
    if model_id not in _MANUAL:
        raise ConfigurationError(f"no manual summary statistics for {model_id!r}")
    out = _MANUAL[model_id](x)
    single = isinstance(x, TimeSeries) or np.asarray(x).ndim == 2
    return out[0] if single else out


class ManualSummaryMap:
    """Picklable batch summary map (n, ch, L) -> (n, q) for one model."""

    def __init__(self, model_id: str):
        if model_id not in _MANUAL:
            raise ConfigurationError(f"no manual summary statistics for {model_id!r}")
        self.model_id = model_id

    def __call__(self, batch) -> np.ndarray:
        return _MANUAL[self.model_id](batch)


class ConstantSummaryMap:
    """Debug map with no information: summaries are empty, so the expanded
    feature vector is just the constant 1."""

    def __call__(self, batch) -> np.ndarray:
        return np.empty((_as_batch(batch).shape[0], 0))
