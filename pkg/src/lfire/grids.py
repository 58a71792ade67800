"""Posterior masses on a rectangular grid over the prior support."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import ConfigurationError, NumericalError
from .priors import PriorSpec


def grid_axes(prior: PriorSpec, shape) -> list:
    """Regular per-dimension node coordinates spanning the prior box,
    endpoints included."""
    if len(shape) != prior.dim:
        raise ConfigurationError(
            f"grid shape {shape} does not match prior dimension {prior.dim}")
    return [np.linspace(lo, hi, k) for (lo, hi), k in zip(prior.bounds, shape)]


def grid_nodes(axes) -> np.ndarray:
    """All grid points as an (n_nodes, d) array, first axis fastest-varying
    last (C order over the mesh)."""
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


@dataclass
class PosteriorGrid:
    """Normalized posterior masses on a rectangular grid.

    Nodes outside the prior support carry mass exactly zero. Masses sum to
    one up to 1e-12 (renormalized once after exponentiation).
    """

    axes: list
    masses: np.ndarray  # shape == tuple(len(a) for a in axes)
    prior: PriorSpec
    model_id: str = ""

    def __post_init__(self):
        self.masses = np.asarray(self.masses, dtype=float)
        expected = tuple(len(a) for a in self.axes)
        if self.masses.shape != expected:
            raise ConfigurationError(
                f"mass shape {self.masses.shape} != grid shape {expected}")

    @property
    def shape(self):
        return self.masses.shape

    def nodes(self) -> np.ndarray:
        return grid_nodes(self.axes)

    def same_grid(self, other: "PosteriorGrid") -> bool:
        return (len(self.axes) == len(other.axes)
                and all(len(a) == len(b) and np.allclose(a, b)
                        for a, b in zip(self.axes, other.axes)))

    @classmethod
    def from_log_values(cls, axes, log_values, prior, model_id="") -> "PosteriorGrid":
        """Normalize unnormalized log masses by log-sum-exp.

        ``log_values`` may contain -inf at out-of-support nodes; those get
        mass exactly zero. All nodes at -inf is a degenerate posterior.
        """
        log_values = np.asarray(log_values, dtype=float)
        finite = np.isfinite(log_values)
        if not finite.any():
            raise NumericalError("degenerate posterior: no node has positive mass")
        total = logsumexp(log_values[finite])
        masses = np.zeros(log_values.shape)
        masses[finite] = np.exp(log_values[finite] - total)
        masses /= masses.sum()
        return cls(axes=list(axes), masses=masses, prior=prior, model_id=model_id)
