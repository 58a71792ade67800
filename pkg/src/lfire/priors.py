"""Uniform priors over boxes and linearly-constrained triangles."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .rng import RngStream


@dataclass(frozen=True)
class PriorSpec:
    """Uniform prior on a box, optionally cut by linear inequalities.

    ``bounds`` is a sequence of (low, high) pairs, one per dimension.
    ``constraints`` is a list of (a, b) rows meaning ``a . theta > b``;
    with constraints present the support is the part of the box where all
    inequalities hold strictly (the MA2 triangle is the canonical case).
    """

    bounds: tuple
    constraints: tuple = field(default=())

    def __post_init__(self):
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        object.__setattr__(self, "bounds", bounds)
        cons = tuple((tuple(float(c) for c in a), float(b)) for a, b in self.constraints)
        object.__setattr__(self, "constraints", cons)
        for lo, hi in self.bounds:
            if not (np.isfinite(lo) and np.isfinite(hi)) or hi < lo:
                raise ConfigurationError(f"invalid prior bounds ({lo}, {hi})")
        if self.constraints and self.box_volume() == 0.0:
            raise ConfigurationError("triangle constraints on a zero-volume box")

    @property
    def dim(self) -> int:
        return len(self.bounds)

    @property
    def kind(self) -> str:
        return "uniform-triangle" if self.constraints else "uniform-box"

    def box_volume(self) -> float:
        vol = 1.0
        for lo, hi in self.bounds:
            vol *= hi - lo
        return vol

    def contains(self, theta) -> np.ndarray:
        """Pointwise support membership for an (..., d) array of points."""
        theta = np.asarray(theta, dtype=float)
        lo = np.array([b[0] for b in self.bounds])
        hi = np.array([b[1] for b in self.bounds])
        ok = np.all((theta >= lo) & (theta <= hi), axis=-1)
        for a, b in self.constraints:
            ok &= theta @ np.asarray(a) > b
        return ok

    def sample(self, n: int, rng: RngStream) -> np.ndarray:
        """Draw n points uniformly over the support.

        Box priors sample each dimension directly; constrained priors use
        rejection from the bounding box, which is exact.
        """
        if n < 1:
            raise ConfigurationError("need n >= 1 prior draws")
        gen = rng.generator
        lo = np.array([b[0] for b in self.bounds])
        hi = np.array([b[1] for b in self.bounds])
        if not self.constraints:
            return gen.uniform(lo, hi, size=(n, self.dim))
        out = np.empty((n, self.dim))
        filled = 0
        attempts = 0
        while filled < n:
            draw = gen.uniform(lo, hi, size=(max(n - filled, 16), self.dim))
            keep = draw[self.contains(draw)]
            take = min(len(keep), n - filled)
            out[filled:filled + take] = keep[:take]
            filled += take
            attempts += 1
            if attempts > 10_000:
                raise ConfigurationError("rejection sampler made no progress; empty support?")
        return out

    def log_density(self) -> float:
        """Log density on the support (constant; support volume unknown for
        constrained priors is irrelevant wherever only ratios matter)."""
        return -np.log(self.box_volume())

    def to_json(self) -> dict:
        return {"bounds": [list(b) for b in self.bounds],
                "constraints": [[list(a), b] for a, b in self.constraints]}

    @classmethod
    def from_json(cls, obj: dict) -> "PriorSpec":
        return cls(bounds=tuple(tuple(b) for b in obj["bounds"]),
                   constraints=tuple((tuple(a), b) for a, b in obj.get("constraints", [])))


def sample_prior(prior: PriorSpec, n: int, rng: RngStream) -> np.ndarray:
    """Functional alias for PriorSpec.sample."""
    return prior.sample(n, rng)


# Default priors, one per model.
ARCH_PRIOR = PriorSpec(bounds=((-1.0, 1.0), (0.0, 1.0)))
# theta1 in [-2, 2]; theta1 + theta2 > -1; theta1 - theta2 < 1
MA2_PRIOR = PriorSpec(bounds=((-2.0, 2.0), (-1.0, 1.0)),
                      constraints=(((1.0, 1.0), -1.0), ((-1.0, 1.0), -1.0)))
LOTKA_VOLTERRA_PRIOR = PriorSpec(bounds=((np.exp(-2.0), 1.0),
                                         (np.exp(-5.0), np.exp(-2.5)),
                                         (np.exp(-2.0), 1.0)))
RICKER_PRIOR = PriorSpec(bounds=((3.0, 5.0), (0.0, 0.6), (5.0, 15.0)))
LORENZ96_PRIOR = PriorSpec(bounds=((0.5, 3.5), (0.0, 0.3)))
