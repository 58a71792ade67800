"""Forward simulators for the five time-series models.

Every simulator is a pure function of (theta, seed): the draw order inside
each model is part of its contract and is documented on the kernel, so a
re-implementation fed the same noise reproduces the output bit for bit.
Batch helpers derive one child stream per item from the caller's stream,
which makes batches independent of chunking or worker count.

Models and their (channels, length):
    arch (1, 100)  ma2 (1, 100)  lotka-volterra (2, 50)  ricker (1, 50)
    lorenz96 (40, 161; column 0 is the known initial state)
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import ConfigurationError, DomainError, SimulationError
from .priors import (ARCH_PRIOR, LORENZ96_PRIOR, LOTKA_VOLTERRA_PRIOR,
                     MA2_PRIOR, PriorSpec, RICKER_PRIOR)
from .rng import RngStream

ARCH_ALPHA = 0.2
LORENZ_FORCING = 10.0
LORENZ_DT = 0.025
LORENZ_STEPS = 160
LORENZ_DIM = 40
# AR(1) law of the unresolved-scale forcing; the upstream literature leaves
# its parameters open, these are the package defaults.
LORENZ_ETA_PHI = 0.4
LORENZ_ETA_SIGMA = 1.0


@dataclass(frozen=True)
class ModelSpec:
    model_id: str
    dim: int
    channels: int
    length: int
    prior: PriorSpec


MODELS = {
    "arch": ModelSpec("arch", 2, 1, 100, ARCH_PRIOR),
    "ma2": ModelSpec("ma2", 2, 1, 100, MA2_PRIOR),
    "lotka-volterra": ModelSpec("lotka-volterra", 3, 2, 50, LOTKA_VOLTERRA_PRIOR),
    "ricker": ModelSpec("ricker", 3, 1, 50, RICKER_PRIOR),
    "lorenz96": ModelSpec("lorenz96", 2, LORENZ_DIM, LORENZ_STEPS + 1, LORENZ96_PRIOR),
}


def model_spec(model_id: str) -> ModelSpec:
    try:
        return MODELS[model_id]
    except KeyError:
        raise ConfigurationError(f"unknown model id {model_id!r}") from None


@dataclass(frozen=True)
class ParameterPoint:
    """A d-dimensional parameter value tagged with its model."""

    values: np.ndarray
    model_id: str

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        spec = model_spec(self.model_id)
        if values.shape != (spec.dim,):
            raise ConfigurationError(
                f"{self.model_id} expects {spec.dim} parameters, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ConfigurationError("non-finite parameter value")


@dataclass(frozen=True)
class TimeSeries:
    """A fixed-length, possibly multi-channel observation record."""

    samples: np.ndarray  # (channels, length)

    def __post_init__(self):
        samples = np.atleast_2d(np.asarray(self.samples, dtype=float))
        object.__setattr__(self, "samples", samples)
        if not np.all(np.isfinite(samples)):
            raise ConfigurationError("non-finite entries in time series")

    @property
    def channels(self) -> int:
        return self.samples.shape[0]

    @property
    def length(self) -> int:
        return self.samples.shape[1]


@dataclass
class SimBatch:
    """Paired parameter draws and simulations, with reproducible seeding.

    Item i was generated from ``RngStream(master_seed, seed_path).child(i)``;
    the per-item seed record is therefore (master_seed, seed_path, i).
    """

    model_id: str
    parameters: np.ndarray  # (n, d)
    series: np.ndarray      # (n, channels, length)
    prior: PriorSpec
    master_seed: int
    seed_path: tuple = ()

    def __len__(self):
        return len(self.parameters)

    def item_stream(self, i: int) -> RngStream:
        return RngStream(self.master_seed, self.seed_path).child(i)


# ---------------------------------------------------------------------------
# ARCH(1)-style model: x(t) = th1 x(t-1) + e(t), e(t) = zeta(t) sqrt(a + th2 e(t-1)^2)
# ---------------------------------------------------------------------------

def arch_path(theta, e0, zeta):
    """Deterministic ARCH recursion given the noise draws.

    ``zeta`` has shape (..., T); e0 broadcasts over the leading shape.
    ``theta`` is (2,) or (..., 2) with per-item rows. x(0) = 0 is not
    emitted; returns (..., T).
    """
    theta = np.asarray(theta, dtype=float)
    th1, th2 = theta[..., 0], theta[..., 1]
    zeta = np.asarray(zeta, dtype=float)
    T = zeta.shape[-1]
    x = np.zeros(zeta.shape)
    prev_x = np.zeros(zeta.shape[:-1])
    prev_e = np.asarray(e0, dtype=float) * np.ones(zeta.shape[:-1])
    for t in range(T):
        e = zeta[..., t] * np.sqrt(ARCH_ALPHA + th2 * prev_e**2)
        xt = th1 * prev_x + e
        x[..., t] = xt
        prev_x, prev_e = xt, e
    return x


def simulate_arch(theta, T: int = 100, rng: RngStream = None) -> TimeSeries:
    """One ARCH series of length T.

    Draw order: e0 (one standard normal), then zeta(1..T) in a single
    standard_normal(T) call.
    """
    values = _theta_values(theta, "arch")
    if values[1] < 0:
        raise DomainError(f"arch requires theta2 >= 0, got {values[1]}")
    gen = rng.generator
    e0 = gen.standard_normal()
    zeta = gen.standard_normal(T)
    return TimeSeries(arch_path(values, e0, zeta)[None, :])




# ---------------------------------------------------------------------------
# Moving average of order two
# ---------------------------------------------------------------------------

def ma2_path(theta, e):
    """x(t) = e(t) + th1 e(t-1) + th2 e(t-2); e has shape (..., T+1) with
    e[..., 0] the unobserved x(0). ``theta`` is (2,) or (..., 2) with
    per-item rows. Returns x(1..T), shape (..., T)."""
    theta = np.asarray(theta, dtype=float)
    th1 = theta[..., 0, None] if theta.ndim > 1 else theta[0]
    th2 = theta[..., 1, None] if theta.ndim > 1 else theta[1]
    e = np.asarray(e, dtype=float)
    x = e[..., 1:] + th1 * e[..., :-1]
    x[..., 1:] += th2 * e[..., :-2]
    return x


def simulate_ma2(theta, T: int = 100, rng: RngStream = None) -> TimeSeries:
    """One MA2 series of length T; x(0) is generated but not emitted.

    Draw order: e(0..T) in a single standard_normal(T+1) call.
    """
    values = _theta_values(theta, "ma2")
    e = rng.generator.standard_normal(T + 1)
    return TimeSeries(ma2_path(values, e)[None, :])




# ---------------------------------------------------------------------------
# Lotka-Volterra continuous-time Markov chain, exact Gillespie simulation
# ---------------------------------------------------------------------------

@njit(cache=True)
def _gillespie_kernel(th1, th2, th3, b1, b2, obs_times, out, gen, max_events):
    """Exact event-driven simulation; records the state holding strictly
    before each observation time. Per event draws two uniforms: waiting
    time by inverse transform, then event type by cumulative rates.
    Returns the event count, or -1 if max_events was exceeded."""
    t = 0.0
    k = 0
    n_obs = obs_times.shape[0]
    events = 0
    t_end = obs_times[n_obs - 1]
    while k < n_obs:
        r1 = th1 * b1
        r2 = th2 * b1 * b2
        r3 = th3 * b2
        gamma = r1 + r2 + r3
        if gamma <= 0.0:
            # absorbing: state persists forever
            while k < n_obs:
                out[0, k] = b1
                out[1, k] = b2
                k += 1
            break
        u = gen.random()
        dt = -np.log1p(-u) / gamma
        t_next = t + dt
        while k < n_obs and obs_times[k] <= t_next:
            out[0, k] = b1
            out[1, k] = b2
            k += 1
        if k >= n_obs or t_next > t_end:
            break
        v = gen.random() * gamma
        if v < r1:
            b1 += 1.0
        elif v < r1 + r2:
            b1 -= 1.0
            b2 += 1.0
        else:
            b2 -= 1.0
        t = t_next
        events += 1
        if events >= max_events:
            return -1
    return events


def gillespie_first_event(theta, init, gen):
    """Waiting time and type of the first event from ``init``; the caller's
    generator is advanced by exactly two uniforms (or none when absorbed).
    Event types: 0 prey birth, 1 predation, 2 predator death, -1 absorbed."""
    b1, b2 = float(init[0]), float(init[1])
    rates = np.array([theta[0] * b1, theta[1] * b1 * b2, theta[2] * b2])
    gamma = rates.sum()
    if gamma <= 0:
        return np.inf, -1
    dt = -np.log1p(-gen.random()) / gamma
    v = gen.random() * gamma
    event = 0 if v < rates[0] else (1 if v < rates[0] + rates[1] else 2)
    return dt, event


def simulate_lotka_volterra(theta, init=(50, 50 * 2), obs_times=None,
                            rng: RngStream = None,
                            max_events: int = 10_000_000) -> TimeSeries:
    """Predator-prey series sampled at ``obs_times`` (default 1..50).

    The recorded value at each observation time is the most recent state
    strictly before it (the state is left-continuous at jump times).
    """
    values = _theta_values(theta, "lotka-volterra")
    if np.any(values <= 0):
        raise DomainError("lotka-volterra rates require theta > 0 componentwise")
    b1, b2 = init
    if b1 < 0 or b2 < 0 or b1 != int(b1) or b2 != int(b2):
        raise ConfigurationError("initial populations must be non-negative integers")
    if obs_times is None:
        obs_times = np.arange(1.0, 51.0)
    obs_times = np.asarray(obs_times, dtype=float)
    out = np.empty((2, len(obs_times)))
    events = _gillespie_kernel(values[0], values[1], values[2],
                               float(b1), float(b2), obs_times, out,
                               rng.generator, max_events)
    if events < 0:
        raise SimulationError(
            f"gillespie event cap {max_events} exceeded (runaway population)",
            step=max_events)
    return TimeSeries(out)




# ---------------------------------------------------------------------------
# Ricker population model with Poisson observations
# ---------------------------------------------------------------------------

def simulate_ricker(theta, T: int = 50, rng: RngStream = None,
                    n0: float = 1.0) -> TimeSeries:
    """Observed counts x(t) ~ Poisson(phi N(t)), t = 1..T.

    theta = (log_r, sigma, phi). The latent log-population follows
    log N(t) = log_r + log N(t-1) - N(t-1) + sigma e(t).
    Draw order: e(1..T) in one standard_normal(T) call, then one Poisson
    draw per step (its mean depends on the realized latent state).
    """
    values = _theta_values(theta, "ricker")
    log_r, sigma, phi = values
    if sigma < 0:
        raise DomainError(f"ricker requires sigma >= 0, got {sigma}")
    if phi <= 0:
        raise DomainError(f"ricker requires phi > 0, got {phi}")
    if n0 <= 0:
        raise ConfigurationError("ricker initial population must be positive")
    gen = rng.generator
    e = gen.standard_normal(T)
    x = np.empty(T)
    log_n = np.log(n0)
    for t in range(T):
        log_n = log_r + log_n - np.exp(log_n) + sigma * e[t]
        x[t] = gen.poisson(phi * np.exp(log_n))
    return TimeSeries(x[None, :])




# ---------------------------------------------------------------------------
# Stochastically forced Lorenz-96 system, RK4 on the frozen-noise drift
# ---------------------------------------------------------------------------

def lorenz96_drift(x, theta, eta=0.0, forcing=LORENZ_FORCING):
    """Cyclic drift -x(k-1)(x(k-2) - x(k+1)) - x(k) + F - (th1 + th2 x) + eta
    over the last axis of x. ``theta`` is (2,) or (..., 2) broadcasting over
    the batch axes of x."""
    theta = np.asarray(theta, dtype=float)
    if theta.ndim == 1:
        th1, th2 = theta[0], theta[1]
    else:
        th1, th2 = theta[..., :1], theta[..., 1:2]
    xm1 = np.roll(x, 1, axis=-1)
    xm2 = np.roll(x, 2, axis=-1)
    xp1 = np.roll(x, -1, axis=-1)
    return -xm1 * (xm2 - xp1) - x + forcing - (th1 + th2 * x) + eta


def rk4_step(f, x, dt):
    """One classical Runge-Kutta step of dx/dt = f(x)."""
    k1 = f(x)
    k2 = f(x + 0.5 * dt * k1)
    k3 = f(x + 0.5 * dt * k2)
    k4 = f(x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def lorenz96_path(theta, x0, z, dt=LORENZ_DT, forcing=LORENZ_FORCING,
                  eta_phi=LORENZ_ETA_PHI, eta_sigma=LORENZ_ETA_SIGMA):
    """Integrate the forced system given the noise table z of shape
    (..., steps, K). The forcing eta is AR(1) across steps and frozen
    within each RK4 step: eta_0 = sigma z_0 (stationary start), then
    eta_s = phi eta_{s-1} + sigma sqrt(1 - phi^2) z_s. ``theta`` may be
    (2,) or carry per-item rows matching the batch axes of z. Returns
    states of shape (..., steps + 1, K) including x0."""
    theta = np.asarray(theta, dtype=float)
    z = np.asarray(z, dtype=float)
    steps = z.shape[-2]
    x = np.broadcast_to(np.asarray(x0, dtype=float), z.shape[:-2] + z.shape[-1:]).copy()
    out = np.empty(z.shape[:-2] + (steps + 1, z.shape[-1]))
    out[..., 0, :] = x
    eta = eta_sigma * z[..., 0, :]
    innov = eta_sigma * np.sqrt(1.0 - eta_phi**2)
    for s in range(steps):
        if s > 0:
            eta = eta_phi * eta + innov * z[..., s, :]
        x = rk4_step(lambda state: lorenz96_drift(state, theta, eta, forcing), x, dt)
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > 1e8:
            raise SimulationError(f"lorenz96 trajectory diverged at step {s + 1}",
                                  step=s + 1)
        out[..., s + 1, :] = x
    return out


def default_lorenz96_x0() -> np.ndarray:
    """The fixed, known initial state: the constant equilibrium F with a
    small perturbation on the first coordinate to break symmetry."""
    x0 = np.full(LORENZ_DIM, LORENZ_FORCING)
    x0[0] += 0.01
    return x0


def simulate_lorenz96(theta, x0=None, rng: RngStream = None) -> TimeSeries:
    """40-channel series over t in [0, 4]: x0 plus 160 RK4 steps.

    Draw order: the full noise table z of shape (steps, 40) in one
    standard_normal call.
    """
    values = _theta_values(theta, "lorenz96")
    if x0 is None:
        x0 = default_lorenz96_x0()
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (LORENZ_DIM,):
        raise ConfigurationError(f"lorenz96 initial state must have shape ({LORENZ_DIM},)")
    z = rng.generator.standard_normal((LORENZ_STEPS, LORENZ_DIM))
    path = lorenz96_path(values, x0, z)
    return TimeSeries(path.T)  # (channels, length)




# ---------------------------------------------------------------------------
# Uniform batch interface and training-set generation
# ---------------------------------------------------------------------------

def _theta_values(theta, model_id):
    if isinstance(theta, ParameterPoint):
        if theta.model_id != model_id:
            raise ConfigurationError(
                f"parameter tagged {theta.model_id!r} passed to {model_id!r}")
        return theta.values
    values = np.asarray(theta, dtype=float)
    spec = model_spec(model_id)
    if values.shape != (spec.dim,):
        raise ConfigurationError(
            f"{model_id} expects {spec.dim} parameters, got shape {values.shape}")
    if not np.all(np.isfinite(values)):
        raise ConfigurationError("non-finite parameter value")
    return values


def simulate(model_id, theta, rng: RngStream, sim_options: dict = None) -> TimeSeries:
    """Simulate a single series from the named model."""
    opts = sim_options or {}
    if model_id == "arch":
        return simulate_arch(theta, opts.get("length", 100), rng)
    if model_id == "ma2":
        return simulate_ma2(theta, opts.get("length", 100), rng)
    if model_id == "lotka-volterra":
        return simulate_lotka_volterra(theta, opts.get("init", (50, 100)),
                                       opts.get("obs_times"), rng,
                                       opts.get("max_events", 10_000_000))
    if model_id == "ricker":
        return simulate_ricker(theta, opts.get("length", 50), rng,
                               n0=opts.get("n0", 1.0))
    if model_id == "lorenz96":
        return simulate_lorenz96(theta, opts.get("x0"), rng)
    raise ConfigurationError(f"unknown model id {model_id!r}")


def simulate_batch(model_id, theta, n: int, rng: RngStream,
                   sim_options: dict = None) -> np.ndarray:
    """n series at a common theta, one child stream per item.

    Equals stacking ``simulate(model_id, theta, rng.child(i))`` for
    i = 0..n-1, bit for bit; the recursions are merely vectorized across
    items where the model allows it.
    """
    values = _theta_values(theta, model_id)
    return simulate_items(model_id, np.tile(values, (n, 1)), rng, sim_options)


def simulate_items(model_id, thetas, rng: RngStream,
                   sim_options: dict = None) -> np.ndarray:
    """One series per row of ``thetas`` (n, d), item i from stream
    ``rng.child(i)``. Recursions are vectorized across items for the
    models that allow it; results equal the per-item loop bit for bit.
    """
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    n = len(thetas)
    opts = sim_options or {}
    if model_id == "arch":
        T = opts.get("length", 100)
        if np.any(thetas[:, 1] < 0):
            raise DomainError("arch requires theta2 >= 0")
        e0 = np.empty(n)
        zeta = np.empty((n, T))
        for i in range(n):
            gen = rng.child(i).generator
            e0[i] = gen.standard_normal()
            zeta[i] = gen.standard_normal(T)
        return arch_path(thetas, e0, zeta)[:, None, :]
    if model_id == "ma2":
        T = opts.get("length", 100)
        e = np.empty((n, T + 1))
        for i in range(n):
            e[i] = rng.child(i).generator.standard_normal(T + 1)
        return ma2_path(thetas, e)[:, None, :]
    if model_id == "lorenz96":
        x0 = opts.get("x0")
        if x0 is None:
            x0 = default_lorenz96_x0()
        z = np.empty((n, LORENZ_STEPS, LORENZ_DIM))
        for i in range(n):
            z[i] = rng.child(i).generator.standard_normal((LORENZ_STEPS, LORENZ_DIM))
        return lorenz96_path(thetas, x0, z).transpose(0, 2, 1)
    out = None
    for i in range(n):
        ts = simulate(model_id, thetas[i], rng.child(i), opts)
        if out is None:
            out = np.empty((n, ts.channels, ts.length))
        out[i] = ts.samples
    return out


def generate_training_set(model_id, prior: PriorSpec = None, m: int = 100_000,
                          rng: RngStream = None, sim_options: dict = None,
                          chunk: int = 2048) -> SimBatch:
    """m prior draws and simulations for network training.

    Item i uses the child stream (master seed, i): the parameter draw
    first, then the simulation, from the same stream. Items are therefore
    reproducible individually and the batch is chunk-size invariant.
    """
    if m < 2:
        raise ConfigurationError("training set needs m >= 2")
    return prior_sim_batch(model_id, prior, m, rng, sim_options, chunk)


def prior_sim_batch(model_id, prior: PriorSpec = None, m: int = 1,
                    rng: RngStream = None, sim_options: dict = None,
                    chunk: int = 2048) -> SimBatch:
    """The generate_training_set core without the minimum-size rule (used
    for observed-task sets, which may hold a single item)."""
    if m < 1:
        raise ConfigurationError("need m >= 1 items")
    spec = model_spec(model_id)
    prior = prior or spec.prior
    opts = sim_options or {}
    params = np.empty((m, spec.dim))
    series = None
    if model_id == "lorenz96":
        # same per-item stream order as the generic loop (theta, then the
        # noise table), with the integration vectorized across each chunk
        x0 = opts.get("x0")
        if x0 is None:
            x0 = default_lorenz96_x0()
        series = np.empty((m, spec.channels, spec.length))
        for start in range(0, m, chunk):
            stop = min(start + chunk, m)
            z = np.empty((stop - start, LORENZ_STEPS, LORENZ_DIM))
            for i in range(start, stop):
                stream = rng.child(i)
                params[i] = prior.sample(1, stream)[0]
                z[i - start] = stream.generator.standard_normal(
                    (LORENZ_STEPS, LORENZ_DIM))
            try:
                path = lorenz96_path(params[start:stop], x0, z)
            except SimulationError:
                for i in range(start, stop):  # re-run serially to name the item
                    try:
                        lorenz96_path(params[i], x0, z[i - start])
                    except SimulationError as err:
                        raise SimulationError(f"item {i}: {err}", step=i) from err
                raise
            series[start:stop] = path.transpose(0, 2, 1)
    else:
        for i in range(m):
            stream = rng.child(i)
            theta_i = prior.sample(1, stream)[0]
            params[i] = theta_i
            try:
                ts = simulate(model_id, theta_i, stream, opts)
            except SimulationError as err:
                raise SimulationError(f"item {i}: {err}", step=i) from err
            if series is None:
                series = np.empty((m, ts.channels, ts.length))
            series[i] = ts.samples
    return SimBatch(model_id=model_id, parameters=params, series=series,
                    prior=prior, master_seed=rng.seed, seed_path=rng.path)
