"""Network training: Adam, minibatches, early stopping, resumable state.

The whole loop is deterministic given the config seed: weight
initialization and each epoch's shuffle come from named child streams,
so training for k epochs, checkpointing, and continuing reproduces an
uninterrupted run exactly (the checkpoint carries the optimizer moments,
epoch counter and best-weights bookkeeping).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError, TrainingError
from ..rng import RngStream
from ..simulators import SimBatch
from .network import (NetworkConfig, SummaryNetwork, build_layers,
                      network_loss_and_gradients)


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 256
    max_epochs: int = 100
    patience: int = 30
    split: float = 0.8
    seed: int = 0
    adam: AdamConfig = field(default_factory=AdamConfig)

    def __post_init__(self):
        if not 0.0 < self.split < 1.0:
            raise ConfigurationError("split must be in (0, 1)")
        if self.patience > self.max_epochs:
            raise ConfigurationError("patience cannot exceed max_epochs")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ConfigurationError("batch size and epochs must be positive")

    def to_json(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "adam"}
        d["adam"] = {k: getattr(self.adam, k) for k in self.adam.__dataclass_fields__}
        return d

    @classmethod
    def from_json(cls, obj: dict) -> "TrainConfig":
        obj = dict(obj)
        adam = AdamConfig(**obj.pop("adam", {}))
        return cls(adam=adam, **obj)


def adam_update(weights, gradients, state, hyper: AdamConfig):
    """One bias-corrected Adam step over parallel lists of arrays.

    ``state`` is (m_list, v_list, t) with zero moments at t = 0; returns
    (new_weights, new_state) without mutating the inputs.
    """
    m_list, v_list, t = state
    t = t + 1
    new_w, new_m, new_v = [], [], []
    for w, g, m, v in zip(weights, gradients, m_list, v_list):
        m = hyper.beta1 * m + (1.0 - hyper.beta1) * g
        v = hyper.beta2 * v + (1.0 - hyper.beta2) * g * g
        m_hat = m / (1.0 - hyper.beta1**t)
        v_hat = v / (1.0 - hyper.beta2**t)
        new_w.append(w - hyper.lr * m_hat / (np.sqrt(v_hat) + hyper.eps))
        new_m.append(m)
        new_v.append(v)
    return new_w, (new_m, new_v, t)


def adam_init(weights):
    return ([np.zeros_like(w) for w in weights],
            [np.zeros_like(w) for w in weights], 0)


def split_sizes(m: int, split: float):
    """Train/validation sizes: floor the train share, but keep at least
    one item on each side."""
    n_train = min(max(int(np.floor(m * split)), 1), m - 1)
    return n_train, m - n_train


@dataclass
class TrainState:
    """Resumable optimizer and early-stopping bookkeeping.

    ``current_params`` are the live end-of-epoch weights (the returned
    network holds the best-validation weights instead), so a resumed run
    continues exactly where the interrupted one stopped.
    """

    epoch: int
    adam: tuple
    best_val: float
    best_params: dict
    since_improvement: int
    history: list  # (epoch, train_loss, val_loss)
    current_params: dict = field(default_factory=dict)


def train_summary_network(batch: SimBatch, net_config: NetworkConfig = None,
                          train_config: TrainConfig = None,
                          net: SummaryNetwork = None,
                          state: TrainState = None) -> SummaryNetwork:
    """Fit the parameter-prediction network on a simulation batch.

    Minimizes per-element mean squared error on standardized targets over
    the training split, keeps the weights of the epoch with the best
    validation loss, and stops once ``patience`` epochs pass without
    improvement. Pass the (net, state) pair saved in a checkpoint to
    resume; the continuation is identical to an uninterrupted run.
    """
    from .network import new_network  # cycle-free local import

    if len(batch) < 2:
        raise ConfigurationError("training needs at least two items")
    cfg = train_config or TrainConfig()
    x = np.asarray(batch.series, dtype=float)
    targets = np.asarray(batch.parameters, dtype=float)
    n_train, n_val = split_sizes(len(batch), cfg.split)

    if net is None:
        net_config = net_config or NetworkConfig(
            in_channels=x.shape[1], in_length=x.shape[2],
            out_dim=targets.shape[1])
        net = new_network(net_config, seed=cfg.seed)
        # standardization constants come from the training split only
        xt = x[:n_train]
        net.input_mean = xt.mean(axis=(0, 2))
        net.input_std = np.maximum(xt.std(axis=(0, 2)), 1e-12)
        tt = targets[:n_train]
        net.target_mean = tt.mean(axis=0)
        net.target_std = np.maximum(tt.std(axis=0), 1e-12)
    if x.shape[1:] != (net.config.in_channels, net.config.in_length):
        raise ConfigurationError(
            f"batch series shape {x.shape[1:]} does not match network input")
    if targets.shape[1] != net.config.out_dim:
        raise ConfigurationError("target dimension does not match network output")

    x_std = (x - net.input_mean[None, :, None]) / net.input_std[None, :, None]
    t_std = (targets - net.target_mean) / net.target_std
    x_train, t_train = x_std[:n_train], t_std[:n_train]
    x_val, t_val = x_std[n_train:], t_std[n_train:]

    names = [name for name, _ in net.parameter_arrays()]
    weights = [arr for _, arr in net.parameter_arrays()]
    if state is None:
        state = TrainState(epoch=0, adam=adam_init(weights),
                           best_val=np.inf, best_params={}, since_improvement=0,
                           history=[])
    elif state.current_params:
        net.set_parameters(state.current_params)
    shuffle_root = RngStream(cfg.seed).child(2)

    stopped_early = False
    epoch = state.epoch
    while epoch < cfg.max_epochs:
        epoch += 1
        order = shuffle_root.child(epoch).generator.permutation(n_train)
        train_losses = []
        for start in range(0, n_train, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, grads = network_loss_and_gradients(net, x_train[idx], t_train[idx])
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite training loss at epoch {epoch}",
                                    epoch=epoch)
            train_losses.append(loss)
            weights = [net_param for _, net_param in net.parameter_arrays()]
            new_weights, state.adam = adam_update(
                weights, [grads[name] for name in names], state.adam, cfg.adam)
            net.set_parameters(dict(zip(names, new_weights)))
        val_loss = _validation_loss(net, x_val, t_val)
        if not np.isfinite(val_loss):
            raise TrainingError(f"non-finite validation loss at epoch {epoch}",
                                epoch=epoch)
        state.history.append((epoch, float(np.mean(train_losses)), float(val_loss)))
        if val_loss < state.best_val:
            state.best_val = float(val_loss)
            state.best_params = {name: arr.copy()
                                 for name, arr in net.parameter_arrays()}
            state.since_improvement = 0
        else:
            state.since_improvement += 1
            if state.since_improvement > cfg.patience:
                stopped_early = True
                state.epoch = epoch
                break
        state.epoch = epoch

    state.current_params = {name: arr.copy() for name, arr in net.parameter_arrays()}
    if state.best_params:
        net.set_parameters(state.best_params)
    net.report = {
        "epochs_run": state.epoch,
        "best_val_loss": state.best_val,
        "stopped_early": stopped_early,
        "history": list(state.history),
        "n_train": n_train,
        "n_val": n_val,
    }
    net.report["train_state"] = state
    return net


def _validation_loss(net, x_val, t_val, chunk=1024):
    """Full-split mean squared error on standardized targets (no penalty)."""
    sq_sum = 0.0
    count = 0
    for start in range(0, len(x_val), chunk):
        pred = net.forward_raw(x_val[start:start + chunk])
        resid = pred - t_val[start:start + chunk]
        sq_sum += float(np.sum(resid**2))
        count += resid.size
    return sq_sum / count
