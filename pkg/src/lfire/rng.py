"""Deterministic random-number streams.

Streams are backed by the Philox counter-based bit generator keyed via
``numpy.random.SeedSequence``. A stream is identified by a 64-bit master
seed plus an integer path, so per-item child streams can be derived
statelessly: the same (seed, path) always yields the same draws, on any
worker, in any order. That makes batch simulation embarrassingly parallel
while staying bit-reproducible.
"""
from __future__ import annotations

import numpy as np


class RngStream:
    """A named, spawnable random stream.

    Parameters
    ----------
    seed : int
        Master seed (any Python int; hashed by SeedSequence).
    path : tuple of int, optional
        Derivation path relative to the master seed. ``child(i)`` appends
        ``i`` to the path.
    """

    __slots__ = ("seed", "path", "_generator")

    def __init__(self, seed: int, path: tuple = ()):
        self.seed = int(seed)
        self.path = tuple(int(p) for p in path)
        self._generator = None

    def child(self, *indices) -> "RngStream":
        """Derive an independent stream for a sub-task (e.g. item index)."""
        return RngStream(self.seed, self.path + tuple(int(i) for i in indices))

    @property
    def generator(self) -> np.random.Generator:
        """The numpy Generator for this stream (created lazily)."""
        if self._generator is None:
            ss = np.random.SeedSequence([self.seed & 0xFFFFFFFFFFFFFFFF, *self.path])
            self._generator = np.random.Generator(np.random.Philox(ss))
        return self._generator

    def __repr__(self):
        return f"RngStream(seed={self.seed}, path={self.path})"
