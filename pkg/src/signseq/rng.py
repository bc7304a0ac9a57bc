"""Counter-based deterministic random number generator.

Every stochastic piece of the toolkit (weight init, dropout masks, epoch
shuffles, data splits, synthetic fixtures) draws from this generator so that
a run is reproducible from its seed alone, independent of call order across
modules.

Algorithm (fixed for checkpoint/format version 1): output ``i`` of the stream
``(seed, stream)`` is ``mix64(seed ^ mix64(stream + GAMMA) + (i + 1) * GAMMA)``
where ``GAMMA = 0x9E3779B97F4A7C15`` and ``mix64`` is the splitmix64
finalizer:

    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    return z ^ (z >> 31)

All arithmetic is modulo 2**64. Uniform doubles are the top 53 bits scaled by
2**-53, giving values in [0, 1).
"""

from __future__ import annotations

import numpy as np

GAMMA = 0x9E3779B97F4A7C15
_MASK = (1 << 64) - 1


def _mix64_scalar(z: int) -> int:
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def _mix64(z: np.ndarray) -> np.ndarray:
    # uint64 ops wrap mod 2**64, matching the scalar reference.
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


class CounterRng:
    """Seedable counter-based generator; see module docstring for the algorithm.

    Instances are cheap; derive independent streams with :meth:`spawn` rather
    than sharing one instance across unrelated consumers.
    """

    def __init__(self, seed: int, stream: int = 0):
        self.seed = seed & _MASK
        self.stream = stream & _MASK
        self._base = self.seed ^ _mix64_scalar((self.stream + GAMMA) & _MASK)
        self._counter = 0

    def spawn(self, substream: int) -> "CounterRng":
        """Independent child stream; deterministic in (seed, stream, substream)."""
        return CounterRng(self.seed, _mix64_scalar(self.stream * GAMMA + substream + 1))

    def _next_block(self, n: int) -> np.ndarray:
        idx = np.arange(self._counter + 1, self._counter + n + 1, dtype=np.uint64)
        self._counter += n
        with np.errstate(over="ignore"):
            words = _mix64(np.uint64(self._base) + idx * np.uint64(GAMMA))
        return words

    def uniform(self, shape=None) -> np.ndarray | float:
        """Uniform doubles in [0, 1); scalar when shape is None."""
        if shape is None:
            return float(self._next_block(1)[0] >> np.uint64(11)) * 2.0**-53
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        n = int(np.prod(shape)) if shape else 1
        words = self._next_block(n) >> np.uint64(11)
        return (words.astype(np.float64) * 2.0**-53).reshape(shape)

    def normal(self, shape=None) -> np.ndarray | float:
        """Standard normals via Box-Muller on paired uniforms."""
        scalar = shape is None
        shape = (1,) if scalar else ((shape,) if isinstance(shape, int) else tuple(shape))
        n = int(np.prod(shape)) if shape else 1
        u = self.uniform(2 * n).reshape(2, n)
        r = np.sqrt(-2.0 * np.log1p(-u[0]))  # 1-u[0] in (0,1], log finite
        z = r * np.cos(2.0 * np.pi * u[1])
        return float(z[0]) if scalar else z.reshape(shape)

    def integers(self, bound: int, count: int) -> np.ndarray:
        """count integers uniform in [0, bound) (rejection-free scaling)."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        u = self.uniform(count)
        return np.minimum((u * bound).astype(np.int64), bound - 1)

    def shuffle(self, items: list) -> list:
        """Fisher-Yates shuffle; returns a new list, input untouched."""
        out = list(items)
        for i in range(len(out) - 1, 0, -1):
            j = int(self.uniform() * (i + 1))
            j = min(j, i)
            out[i], out[j] = out[j], out[i]
        return out
