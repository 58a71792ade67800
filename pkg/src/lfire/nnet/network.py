"""The convolutional parameter-prediction network.

Architecture: conv -> ReLU -> maxpool -> conv -> ReLU -> flatten ->
dense(ReLU) -> linear output of the parameter dimension. One
configuration serves every model; multi-channel inputs are handled by
the first convolution spanning all channels (temporal convolutions
only). Inputs are standardized per channel and the regression targets
per dimension, with the constants stored in the network so a saved
checkpoint is self-contained.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import ConfigurationError
from ..rng import RngStream
from ..simulators import TimeSeries, model_spec
from .layers import Conv1D, Dense, Flatten, MaxPool1D, ReLU


@dataclass(frozen=True)
class NetworkConfig:
    in_channels: int
    in_length: int
    out_dim: int
    conv1_filters: int = 8
    conv1_kernel: int = 9
    conv1_stride: int = 1
    pool_width: int = 4
    conv2_filters: int = 8
    conv2_kernel: int = 7
    conv2_stride: int = 2
    dense_units: int = 100
    l2_output: float = 0.001

    def __post_init__(self):
        for name in ("in_channels", "in_length", "out_dim", "conv1_filters",
                     "conv1_kernel", "conv1_stride", "pool_width",
                     "conv2_filters", "conv2_kernel", "conv2_stride",
                     "dense_units"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be positive")

    def to_json(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_json(cls, obj: dict) -> "NetworkConfig":
        return cls(**obj)


def default_network_config(model_id: str, overrides: dict = None) -> NetworkConfig:
    spec = model_spec(model_id)
    cfg = NetworkConfig(in_channels=spec.channels, in_length=spec.length,
                        out_dim=spec.dim)
    return replace(cfg, **overrides) if overrides else cfg


def build_layers(config: NetworkConfig, init_rng: RngStream = None) -> list:
    """Layer stack for a configuration; weights are fan-in-scaled uniform
    when an init stream is given, zeros otherwise."""
    gen = init_rng.generator if init_rng is not None else None
    layers = [
        Conv1D(config.in_channels, config.conv1_filters, config.conv1_kernel,
               config.conv1_stride, rng=gen),
        ReLU(),
        MaxPool1D(config.pool_width),
        Conv1D(config.conv1_filters, config.conv2_filters, config.conv2_kernel,
               config.conv2_stride, rng=gen),
        ReLU(),
        Flatten(),
    ]
    shape = (config.in_channels, config.in_length)
    for layer in layers:
        shape = layer.out_shape(shape)
    if shape[0] < 1:
        raise ConfigurationError("configuration collapses the series to length 0")
    layers += [
        Dense(shape[0], config.dense_units, rng=gen),
        ReLU(),
        Dense(config.dense_units, config.out_dim, rng=gen),
    ]
    return layers


@dataclass
class SummaryNetwork:
    """Weights plus the standardization constants and a training report."""

    config: NetworkConfig
    layers: list
    input_mean: np.ndarray = None   # (channels,)
    input_std: np.ndarray = None
    target_mean: np.ndarray = None  # (out_dim,)
    target_std: np.ndarray = None
    report: dict = field(default_factory=dict)

    def __post_init__(self):
        c, d = self.config.in_channels, self.config.out_dim
        if self.input_mean is None:
            self.input_mean = np.zeros(c)
            self.input_std = np.ones(c)
        if self.target_mean is None:
            self.target_mean = np.zeros(d)
            self.target_std = np.ones(d)

    def parameter_arrays(self):
        """(name, array) pairs in a fixed order, for optimizers and i/o."""
        out = []
        for li, layer in enumerate(self.layers):
            for name in sorted(layer.params):
                out.append((f"layer{li}.{name}", layer.params[name]))
        return out

    def parameter_count(self, include_output=True) -> int:
        arrays = self.parameter_arrays()
        if not include_output:
            arrays = arrays[:-2]  # final Dense W and b
        return int(sum(a.size for _, a in arrays))

    def set_parameters(self, values: dict):
        for li, layer in enumerate(self.layers):
            for name in layer.params:
                layer.params[name] = np.array(values[f"layer{li}.{name}"])

    def standardize_input(self, x: np.ndarray) -> np.ndarray:
        return (x - self.input_mean[None, :, None]) / self.input_std[None, :, None]

    def forward_raw(self, x_std: np.ndarray) -> np.ndarray:
        out = x_std
        for layer in self.layers:
            out = layer.forward(out)
        return out

    def predict_batch(self, x: np.ndarray) -> np.ndarray:
        """Summary statistics: de-standardized predictions for (n, c, L)."""
        x = np.asarray(x, dtype=float)
        out = self.forward_raw(self.standardize_input(x))
        return out * self.target_std + self.target_mean


def new_network(config: NetworkConfig, seed: int = 0) -> SummaryNetwork:
    return SummaryNetwork(config=config,
                          layers=build_layers(config, RngStream(seed).child(1)))


def network_forward(net: SummaryNetwork, x) -> np.ndarray:
    """Forward pass for a single series; returns the d-vector prediction
    in standardized-target units (training-internal view)."""
    x = _single_input(net, x)
    return net.forward_raw(net.standardize_input(x))[0]


def predict_theta(net: SummaryNetwork, x) -> np.ndarray:
    """The learned summary statistic: the parameter prediction for one
    series (deterministic forward pass, de-standardized)."""
    return net.predict_batch(_single_input(net, x))[0]


def network_loss_and_gradients(net: SummaryNetwork, x_std, targets_std):
    """Mean-squared-error (per-element) plus the output-layer L2 penalty;
    gradients for every parameter array via the layers' backward passes.

    Returns (loss, grads dict keyed like parameter_arrays).
    """
    n = len(x_std)
    if n < 1:
        raise ConfigurationError("empty batch")
    pred = net.forward_raw(x_std)
    resid = pred - targets_std
    loss = float(np.mean(resid**2))
    w_out = net.layers[-1].params["W"]
    loss += net.config.l2_output * float(np.sum(w_out**2))
    dpred = (2.0 / resid.size) * resid
    grad_in = dpred
    for layer in reversed(net.layers):
        grad_in = layer.backward(grad_in)
    grads = {}
    for li, layer in enumerate(net.layers):
        for name in layer.params:
            grads[f"layer{li}.{name}"] = layer.grads[name]
    grads[f"layer{len(net.layers) - 1}.W"] = (
        grads[f"layer{len(net.layers) - 1}.W"] + 2.0 * net.config.l2_output * w_out)
    return loss, grads


def _single_input(net, x) -> np.ndarray:
    if isinstance(x, TimeSeries):
        x = x.samples
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise ConfigurationError(f"expected one series, got shape {x.shape}")
    if x.shape != (net.config.in_channels, net.config.in_length):
        raise ConfigurationError(
            f"series shape {x.shape} does not match network input "
            f"({net.config.in_channels}, {net.config.in_length})")
    return x[None, :, :]
