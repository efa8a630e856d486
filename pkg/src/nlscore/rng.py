"""Deterministic, splittable random streams.

A stream is identified by a 64-bit key; draw i is a pure function of
(key, i), so streams can be consumed out of order and in parallel without
any shared state. New streams are derived from a parent key plus a label
(int, float or string) by the documented splitting rule

    child_key = mix64(parent_key XOR mix64(label64 + GOLDEN))

where label64 is the label's 64-bit image (ints masked, floats by bit
pattern, strings by FNV-1a of their UTF-8 bytes). The same (seed, label
path) therefore names the same stream on every platform and run.
"""

from __future__ import annotations

import numpy as np

from .kernels import GOLDEN, fnv1a64, gaussian_pairs, mix64, raw_stream

_MASK64 = (1 << 64) - 1

__all__ = ["GaussianStream"]


def _label64(label) -> int:
    if isinstance(label, (bool, np.bool_)):
        raise TypeError("bool labels are ambiguous; use an int or string")
    if isinstance(label, (int, np.integer)):
        return int(label) & _MASK64
    if isinstance(label, (float, np.floating)):
        return int(np.float64(label).view(np.uint64))
    if isinstance(label, str):
        return fnv1a64(label.encode("utf-8"))
    raise TypeError(f"stream labels must be int, float or str, got {type(label)!r}")


class GaussianStream:
    """A counter-based random stream with Gaussian, uniform and integer draws.

    Instances are cheap; the only mutable state is the counter cursor, so a
    stream must not be shared between concurrent consumers. Derive one child
    per task instead.
    """

    __slots__ = ("key", "counter")

    def __init__(self, key: int, counter: int = 0):
        self.key = int(key) & _MASK64
        self.counter = int(counter)

    @classmethod
    def from_seed(cls, seed: int) -> "GaussianStream":
        return cls(mix64(int(seed)))

    def child(self, label) -> "GaussianStream":
        """Independent stream named by (this stream, label)."""
        return GaussianStream(mix64(self.key ^ mix64(_label64(label) + GOLDEN)))

    def normals(self, shape) -> np.ndarray:
        """Standard normal draws. Consumes two counters per Box-Muller pair,
        so a call of odd total size still advances the cursor evenly."""
        if np.isscalar(shape):
            shape = (int(shape),)
        n = 1
        for s in shape:
            n *= int(s)
        n_pairs = (n + 1) // 2
        vals = gaussian_pairs(self.key, self.counter, n_pairs)
        self.counter += 2 * n_pairs
        return vals[:n].reshape(shape)

    def uniforms(self, count: int) -> np.ndarray:
        """Uniform draws in (0, 1]."""
        bits = raw_stream(self.key, self.counter, int(count))
        self.counter += int(count)
        return ((bits >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0**-53

    def integers(self, upper: int, count: int) -> np.ndarray:
        """Uniform integers in [0, upper). Modulo bias is < upper / 2**64."""
        upper = int(upper)
        if upper <= 0:
            raise ValueError("upper must be positive")
        bits = raw_stream(self.key, self.counter, int(count))
        self.counter += int(count)
        return (bits % np.uint64(upper)).astype(np.int64)
