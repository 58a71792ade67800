"""Network layers with hand-written forward and backward passes.

All contractions go through np.einsum in its default (non-BLAS) mode, so
the reduction order for each output element does not depend on the batch
size: a batched forward equals the stacked single-item forwards bit for
bit, and results are reproducible across runs.

Every layer caches what its backward pass needs during forward; backward
consumes the cache, accumulates parameter gradients in ``grads`` and
returns the gradient with respect to its input.
"""
from __future__ import annotations

import numpy as np

from ..errors import ConfigurationError


class Layer:
    """Interface: forward(x), backward(dout); params/grads as dicts."""

    params: dict
    grads: dict
    _cache_attrs = ()

    def forward(self, x):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError

    def out_shape(self, in_shape):
        raise NotImplementedError

    def __getstate__(self):
        # forward caches and gradients are scratch state: don't ship them
        state = dict(self.__dict__)
        for attr in self._cache_attrs:
            state[attr] = None
        state["grads"] = {}
        return state


class Conv1D(Layer):
    """Temporal cross-correlation over all input channels.

    out[n, f, i] = sum_{c,j} W[f, c, j] x[n, c, i*stride + j] + b[f]
    with output length L' = floor((L - k) / stride) + 1.
    """

    def __init__(self, in_channels, filters, kernel, stride=1, rng=None):
        if min(in_channels, filters, kernel, stride) < 1:
            raise ConfigurationError("conv1d sizes must be positive")
        self.in_channels = in_channels
        self.filters = filters
        self.kernel = kernel
        self.stride = stride
        limit = 1.0 / np.sqrt(in_channels * kernel)
        W = (rng.uniform(-limit, limit, size=(filters, in_channels, kernel))
             if rng is not None else np.zeros((filters, in_channels, kernel)))
        self.params = {"W": W, "b": np.zeros(filters)}
        self.grads = {}
        self._x = None

    _cache_attrs = ("_x",)

    def out_shape(self, in_shape):
        c, L = in_shape
        if c != self.in_channels:
            raise ConfigurationError(
                f"conv1d expects {self.in_channels} channels, got {c}")
        if self.kernel > L:
            raise ConfigurationError(
                f"conv1d kernel {self.kernel} exceeds input length {L}")
        return (self.filters, (L - self.kernel) // self.stride + 1)

    def forward(self, x):
        _, Lp = self.out_shape(x.shape[1:])
        windows = np.lib.stride_tricks.sliding_window_view(x, self.kernel, axis=2)
        windows = windows[:, :, ::self.stride][:, :, :Lp]
        self._x = x
        return (np.einsum("nclk,fck->nfl", windows, self.params["W"])
                + self.params["b"][None, :, None])

    def backward(self, dout):
        x = self._x
        Lp = dout.shape[2]
        windows = np.lib.stride_tricks.sliding_window_view(x, self.kernel, axis=2)
        windows = windows[:, :, ::self.stride][:, :, :Lp]
        self.grads["W"] = np.einsum("nclk,nfl->fck", windows, dout)
        self.grads["b"] = np.einsum("nfl->f", dout)
        dx = np.zeros_like(x)
        W = self.params["W"]
        for j in range(self.kernel):
            dx[:, :, j:j + self.stride * Lp:self.stride] += \
                np.einsum("nfl,fc->ncl", dout, W[:, :, j])
        return dx


class MaxPool1D(Layer):
    """Non-overlapping max pooling; a trailing remainder shorter than the
    window is dropped. Argmax indices (first maximum on ties) are kept for
    the backward scatter."""

    def __init__(self, width):
        if width < 1:
            raise ConfigurationError("pool width must be positive")
        self.width = width
        self.params = {}
        self.grads = {}
        self._cache = None

    _cache_attrs = ("_cache",)

    def out_shape(self, in_shape):
        c, L = in_shape
        return (c, L // self.width)

    def forward(self, x):
        n, c, L = x.shape
        nwin = L // self.width
        trunc = x[:, :, :nwin * self.width].reshape(n, c, nwin, self.width)
        idx = trunc.argmax(axis=3)
        self._cache = (x.shape, idx)
        return np.take_along_axis(trunc, idx[..., None], axis=3)[..., 0]

    def backward(self, dout):
        (n, c, L), idx = self._cache
        nwin = dout.shape[2]
        dtrunc = np.zeros((n, c, nwin, self.width))
        np.put_along_axis(dtrunc, idx[..., None], dout[..., None], axis=3)
        dx = np.zeros((n, c, L))
        dx[:, :, :nwin * self.width] = dtrunc.reshape(n, c, nwin * self.width)
        return dx


class ReLU(Layer):
    _cache_attrs = ("_mask",)

    def __init__(self):
        self.params = {}
        self.grads = {}
        self._mask = None

    def out_shape(self, in_shape):
        return in_shape

    def forward(self, x):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, dout):
        return np.where(self._mask, dout, 0.0)


class Flatten(Layer):
    _cache_attrs = ("_shape",)

    def __init__(self):
        self.params = {}
        self.grads = {}
        self._shape = None

    def out_shape(self, in_shape):
        size = 1
        for s in in_shape:
            size *= s
        return (size,)

    def forward(self, x):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._shape)


class Dense(Layer):
    def __init__(self, in_features, out_features, rng=None):
        if min(in_features, out_features) < 1:
            raise ConfigurationError("dense sizes must be positive")
        limit = 1.0 / np.sqrt(in_features)
        W = (rng.uniform(-limit, limit, size=(in_features, out_features))
             if rng is not None else np.zeros((in_features, out_features)))
        self.params = {"W": W, "b": np.zeros(out_features)}
        self.grads = {}
        self._x = None

    _cache_attrs = ("_x",)

    def out_shape(self, in_shape):
        if in_shape[0] != self.params["W"].shape[0]:
            raise ConfigurationError(
                f"dense expects {self.params['W'].shape[0]} inputs, got {in_shape[0]}")
        return (self.params["W"].shape[1],)

    def forward(self, x):
        self._x = x
        return np.einsum("ni,io->no", x, self.params["W"]) + self.params["b"]

    def backward(self, dout):
        self.grads["W"] = np.einsum("ni,no->io", self._x, dout)
        self.grads["b"] = np.einsum("no->o", dout)
        return np.einsum("no,io->ni", dout, self.params["W"])
