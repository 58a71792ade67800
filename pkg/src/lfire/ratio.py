"""Log-ratio estimation by L1-penalized logistic regression, and the
grid posterior assembled from per-node ratio fits.

The log ratio log[p(x|theta)/p(x)] at one parameter value is modeled as
beta . Psi(x) and learned by classifying simulations from p(x|theta)
against a pool from the marginal p(x). With the class-ratio constant
nu = n_m / n_theta in the loss, the minimizer estimates the pure density
log-ratio irrespective of the two sample sizes, so exp(h) pi(theta) can
be normalized over a grid directly.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ._solver import cd_path
from .errors import ConfigurationError, FitError
from .grids import PosteriorGrid, grid_axes, grid_nodes
from .priors import PriorSpec
from .rng import RngStream
from .simulators import model_spec, simulate, simulate_batch
from .summaries import expand_features

log = logging.getLogger(__name__)

DEFAULT_N_LAMBDA = 100
DEFAULT_LAMBDA_RATIO = 1e-4
DEFAULT_TOL = 1e-7
DEFAULT_MAX_SWEEPS = 10**5


@dataclass
class ClassificationSets:
    """Expanded feature matrices of the two simulation sets.

    Feature vectors carry the constant 1 in the last position (the
    intercept of the log-ratio model, exempt from the L1 penalty).
    """

    theta_features: np.ndarray   # (n_theta, p)
    marginal_features: np.ndarray  # (n_m, p)

    def __post_init__(self):
        self.theta_features = np.atleast_2d(np.asarray(self.theta_features, float))
        self.marginal_features = np.atleast_2d(np.asarray(self.marginal_features, float))
        if len(self.theta_features) < 1 or len(self.marginal_features) < 1:
            raise ConfigurationError("both classification sets must be nonempty")
        if self.theta_features.shape[1] != self.marginal_features.shape[1]:
            raise ConfigurationError("feature dimension mismatch between classes")
        if not (np.all(np.isfinite(self.theta_features))
                and np.all(np.isfinite(self.marginal_features))):
            raise ConfigurationError("non-finite features")

    @property
    def n_theta(self) -> int:
        return len(self.theta_features)

    @property
    def n_marginal(self) -> int:
        return len(self.marginal_features)

    @property
    def nu(self) -> float:
        return self.n_marginal / self.n_theta


@dataclass
class RatioModel:
    """A fitted log-ratio model at one parameter value."""

    beta: np.ndarray                 # original feature scale
    lambda_selected: float
    standardization: tuple           # (mean, scale) per feature
    cv_curve: list = field(default_factory=list)  # (lambda, mean CV loss)
    theta: np.ndarray = None


def logistic_loss(beta, sets: ClassificationSets, lam: float = 0.0) -> float:
    """The penalized classification loss at beta.

    (1/n) [ sum_theta log(1 + nu e^{-h}) + sum_marg log(1 + e^{h}/nu) ]
    + lam * sum over non-constant features of |beta_j|, with
    n = n_theta + n_m and h = beta . Psi. Evaluated with log1p-exp
    throughout, so extreme h do not overflow.
    """
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (sets.theta_features.shape[1],):
        raise ConfigurationError("beta dimension mismatch")
    log_nu = np.log(sets.nu)
    h_t = sets.theta_features @ beta
    h_m = sets.marginal_features @ beta
    total = (np.logaddexp(0.0, log_nu - h_t).sum()
             + np.logaddexp(0.0, h_m - log_nu).sum())
    n = sets.n_theta + sets.n_marginal
    return total / n + lam * np.abs(beta[:-1]).sum()


def logistic_loss_gradient(beta, sets: ClassificationSets) -> np.ndarray:
    """Gradient of the smooth (unpenalized) part of the loss."""
    beta = np.asarray(beta, dtype=float)
    log_nu = np.log(sets.nu)
    X = np.concatenate([sets.theta_features, sets.marginal_features])
    y = np.concatenate([np.ones(sets.n_theta), np.zeros(sets.n_marginal)])
    s = 1.0 / (1.0 + np.exp(-(X @ beta - log_nu)))
    return X.T @ (s - y) / len(y)


def _standardize(X):
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale = np.where(scale < 1e-12, 1.0, scale)
    # the trailing constant is the intercept: leave it untouched
    mean[-1] = 0.0
    scale[-1] = 1.0
    return (X - mean) / scale, mean, scale


def _fold_assignment(n_theta, n_marginal, folds):
    """Deterministic stratified folds: items of each class are assigned
    round-robin (items are i.i.d. simulations, so order carries nothing)."""
    return np.concatenate([np.arange(n_theta) % folds,
                           np.arange(n_marginal) % folds])


def _cv_losses(X_val, y_val, betas, log_nu):
    H = X_val @ betas.T  # (n_val, n_lam)
    yv = y_val[:, None]
    losses = np.where(yv == 1.0,
                      np.logaddexp(0.0, log_nu - H),
                      np.logaddexp(0.0, H - log_nu))
    return losses.mean(axis=0)


def fit_ratio(sets: ClassificationSets, lambda_path=None, folds: int = 10,
              tol: float = DEFAULT_TOL, max_sweeps: int = DEFAULT_MAX_SWEEPS,
              theta=None) -> RatioModel:
    """Fit the log-ratio model over a warm-started lambda path with
    cross-validated selection of the penalty strength.

    Features are standardized internally (constant column exempt); the
    default path has 100 log-spaced values from lambda_max, the smallest
    penalty that zeroes every penalized coefficient, down to 1e-4 of it.
    With ``folds`` >= 2 the penalty minimizing the mean validation loss is
    selected and the model refit on all data at that value; coefficients
    are returned on the original feature scale.
    """
    X = np.concatenate([sets.theta_features, sets.marginal_features])
    y = np.concatenate([np.ones(sets.n_theta), np.zeros(sets.n_marginal)])
    n, p = X.shape
    log_nu = float(np.log(sets.nu))
    Xs, mean, scale = _standardize(X)
    pen = np.ones(p, dtype=np.bool_)
    pen[-1] = False
    if lambda_path is None:
        pbar = y.mean()
        g0 = np.abs(Xs.T @ (y - pbar)) / n
        lam_max = g0[pen].max() if pen.any() else 0.0
        if lam_max <= 0.0:
            lambda_path = np.array([0.0])
        else:
            # tiny inflation keeps the head of the path at the exact zero
            # solution despite summation-order rounding
            lam_max *= 1.0 + 1e-10
            lambda_path = np.exp(np.linspace(
                np.log(lam_max), np.log(lam_max * DEFAULT_LAMBDA_RATIO),
                DEFAULT_N_LAMBDA))
    lambda_path = np.asarray(lambda_path, dtype=float)
    if np.any(np.diff(lambda_path) > 0):
        raise ConfigurationError("lambda path must be non-increasing")

    do_cv = folds is not None and folds >= 2 and len(lambda_path) > 1
    cv_curve = []
    if do_cv:
        if n < folds:
            raise ConfigurationError(f"need at least {folds} items for {folds}-fold CV")
        fold_of = _fold_assignment(sets.n_theta, sets.n_marginal, folds)
        cv = np.zeros((folds, len(lambda_path)))
        for f in range(folds):
            tr = fold_of != f
            XT_f = np.ascontiguousarray(Xs[tr].T)
            betas, _, status = cd_path(XT_f, y[tr], log_nu, pen,
                                       lambda_path, tol, max_sweeps)
            if status != 0:
                raise FitError(f"fold {f}: no convergence at lambda index {status - 1}",
                               lambda_index=status - 1)
            cv[f] = _cv_losses(Xs[~tr], y[~tr], betas, log_nu)
        mean_cv = cv.mean(axis=0)
        best = int(np.argmin(mean_cv))
        cv_curve = list(zip(lambda_path.tolist(), mean_cv.tolist()))
    else:
        best = len(lambda_path) - 1

    XT = np.ascontiguousarray(Xs.T)
    path_to_best = lambda_path[:best + 1]
    betas, _, status = cd_path(XT, y, log_nu, pen, path_to_best, tol, max_sweeps)
    if status != 0:
        raise FitError(f"final fit: no convergence at lambda index {status - 1}",
                       lambda_index=status - 1)
    beta_std = betas[best]
    beta = beta_std / scale
    beta[-1] = beta_std[-1] - float(np.sum(beta_std[:-1] * mean[:-1] / scale[:-1]))
    return RatioModel(beta=beta, lambda_selected=float(lambda_path[best]),
                      standardization=(mean, scale), cv_curve=cv_curve,
                      theta=None if theta is None else np.asarray(theta, float))


def log_ratio(model: RatioModel, psi) -> float:
    """Evaluate the fitted log-ratio at an expanded feature vector."""
    psi = np.asarray(psi, dtype=float)
    if psi.shape[-1] != len(model.beta):
        raise ConfigurationError(
            f"feature length {psi.shape[-1]} != model dimension {len(model.beta)}")
    return psi @ model.beta


def lfire_posterior(x_obs, model_id: str, summary_fn, rng: RngStream,
                    prior: PriorSpec = None, grid_shape=(20, 20),
                    n_theta: int = 1000, n_m: int = 1000,
                    folds: int = 10, tol: float = DEFAULT_TOL,
                    max_sweeps: int = DEFAULT_MAX_SWEEPS,
                    sim_options: dict = None, marginal_features=None,
                    node_failure_limit: float = 0.01,
                    return_models: bool = False, pool=None):
    """LFIRE posterior on a rectangular grid over the prior support.

    One marginal pool of ``n_m`` simulations (theta' from the prior, then
    x from the model) is shared across all grid nodes; each in-support
    node simulates ``n_theta`` fresh series, fits the penalized logistic
    model on the expanded summaries, and evaluates the estimated log
    ratio at the observed series. Masses are exp(h) times the prior,
    normalized over the grid; out-of-support nodes carry exactly zero.

    A precomputed ``marginal_features`` matrix may be passed to reuse one
    pool across several calls (it must come from the same summary map).
    Individual node fits that fail are given zero mass with a warning,
    unless more than ``node_failure_limit`` of the nodes fail.
    ``pool`` may be a multiprocessing pool; node fits are independent.
    """
    spec = model_spec(model_id)
    prior = prior or spec.prior
    axes = grid_axes(prior, grid_shape)
    nodes = grid_nodes(axes)
    support = prior.contains(nodes)
    if not support.any():
        raise ConfigurationError("no grid node lies in the prior support")

    x_obs_arr = np.asarray(getattr(x_obs, "samples", x_obs), dtype=float)
    psi_obs = expand_features(summary_fn(x_obs_arr[None, ...])[0])

    if marginal_features is None:
        marginal_features = marginal_pool_features(
            model_id, summary_fn, n_m, rng.child(0), prior, sim_options)
    if marginal_features.shape[1] != len(psi_obs):
        raise ConfigurationError("marginal pool features do not match the summary map")

    work = [(int(k), nodes[k]) for k in np.flatnonzero(support)]
    ctx = dict(model_id=model_id, summary_fn=summary_fn, n_theta=n_theta,
               sim_options=sim_options, folds=folds, tol=tol,
               max_sweeps=max_sweeps, seed=rng.seed, path=rng.path,
               marginal_features=marginal_features, psi_obs=psi_obs,
               return_models=return_models)
    if pool is None:
        results = [_fit_node(ctx, item) for item in work]
    else:
        chunk = max(1, len(work) // (8 * pool._processes))
        results = pool.map(_NodeWorker(ctx), work, chunksize=chunk)

    log_mass = np.full(len(nodes), -np.inf)
    models = {}
    failures = []
    log_prior = prior.log_density()
    for (k, _), (h_k, model_k, err) in zip(work, results):
        if err is not None:
            failures.append((k, err))
            continue
        log_mass[k] = h_k + log_prior
        if return_models:
            models[k] = model_k
    if failures:
        if len(failures) > node_failure_limit * len(work):
            raise FitError(
                f"{len(failures)} of {len(work)} grid nodes failed to fit; "
                f"first failure at node {failures[0][0]}: {failures[0][1]}")
        for k, err in failures:
            log.warning("grid node %d failed to fit (%s); assigned zero mass", k, err)

    posterior = PosteriorGrid.from_log_values(
        axes, log_mass.reshape([len(a) for a in axes]), prior, model_id=model_id)
    return (posterior, models) if return_models else posterior


def marginal_pool_features(model_id, summary_fn, n_m, rng, prior=None,
                           sim_options=None) -> np.ndarray:
    """Simulate the shared marginal pool and map it to expanded features."""
    from .simulators import simulate_items  # local to avoid cycle at import
    prior = prior or model_spec(model_id).prior
    thetas = prior.sample(n_m, rng)
    xm = simulate_items(model_id, thetas, rng, sim_options)
    return expand_features(summary_fn(xm))


def _fit_node(ctx, item):
    """Fit one grid node; returns (log_ratio_at_obs, model or None, error)."""
    k, theta_node = item
    rng = RngStream(ctx["seed"], ctx["path"]).child(1 + k)
    try:
        x_t = simulate_batch(ctx["model_id"], theta_node, ctx["n_theta"], rng,
                             ctx["sim_options"])
        feats_t = expand_features(ctx["summary_fn"](x_t))
        sets = ClassificationSets(feats_t, ctx["marginal_features"])
        model = fit_ratio(sets, folds=ctx["folds"], tol=ctx["tol"],
                          max_sweeps=ctx["max_sweeps"], theta=theta_node)
        h_k = float(log_ratio(model, ctx["psi_obs"]))
        return h_k, (model if ctx["return_models"] else None), None
    except Exception as err:  # noqa: BLE001 - reported per node upstream
        return np.nan, None, repr(err)


class _NodeWorker:
    """Top-level callable so pools can pickle the node task."""

    def __init__(self, ctx):
        self.ctx = ctx

    def __call__(self, item):
        return _fit_node(self.ctx, item)
