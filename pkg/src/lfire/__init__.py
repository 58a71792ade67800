"""Likelihood-free inference by ratio estimation for time-series models.

The package simulates five stochastic time-series models, learns summary
statistics by training a small convolutional network to predict the
generating parameters, estimates posterior densities on a grid through
L1-penalized logistic ratio estimation, and scores the results against
exact posteriors where those exist.
"""

from .config import ExperimentConfig
from .errors import (ConfigurationError, DomainError, FitError, LfireError,
                     NumericalError, SimulationError, TrainingError,
                     UndefinedMetricError)
from .grids import PosteriorGrid, grid_axes, grid_nodes
from .metrics import (BootstrapReport, TaskResult, bootstrap_ci, gaussian_kde,
                      kl_divergence, mse, posterior_mean, r_squared,
                      rel_error_difference, relative_error)
from .nnet import (NetworkConfig, SummaryNetwork, TrainConfig, adam_update,
                   default_network_config, network_forward, predict_theta,
                   train_summary_network)
from .oracle import (arch_log_likelihood, exact_posterior, ma2_covariance,
                     ma2_log_likelihood)
from .priors import PriorSpec, sample_prior
from .ratio import (ClassificationSets, RatioModel, fit_ratio, lfire_posterior,
                    log_ratio, logistic_loss)
from .rng import RngStream
from .simulators import (MODELS, ParameterPoint, SimBatch, TimeSeries,
                         generate_training_set, model_spec, simulate,
                         simulate_arch, simulate_batch, simulate_lorenz96,
                         simulate_lotka_volterra, simulate_ma2, simulate_ricker)
from .summaries import (ConstantSummaryMap, ManualSummaryMap, expand_features,
                        manual_summaries)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
