"""Counter-based random streams (Philox4x32-10), vectorized over paths.

Every draw is a pure function of ``(seed, path, stream, step, tag)``, so results
do not depend on how paths are split between workers or processed in batches.
"""

from __future__ import annotations

import numpy as np

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint32(0x9E3779B9)
_W1 = np.uint32(0xBB67AE85)
_MASK = np.uint64(0xFFFFFFFF)
_SHIFT = np.uint64(32)


def philox4x32(counter: np.ndarray, key: np.ndarray, rounds: int = 10) -> np.ndarray:
    """Philox4x32 block function.

    Args:
        counter: ``(..., 4)`` uint32 array.
        key: ``(..., 2)`` uint32 array, broadcast against ``counter``.
    Returns:
        ``(..., 4)`` uint32 array of random words.
    """
    c = np.asarray(counter, dtype=np.uint32)
    k = np.asarray(key, dtype=np.uint32)
    x0, x1, x2, x3 = (c[..., i].astype(np.uint64) for i in range(4))
    k0 = np.broadcast_to(k[..., 0], x0.shape).astype(np.uint32)
    k1 = np.broadcast_to(k[..., 1], x0.shape).astype(np.uint32)
    with np.errstate(over="ignore"):
        for r in range(rounds):
            if r:
                k0 = k0 + _W0
                k1 = k1 + _W1
            p0 = _M0 * x0
            p1 = _M1 * x2
            y0 = (p1 >> _SHIFT) ^ x1 ^ k0.astype(np.uint64)
            y1 = p1 & _MASK
            y2 = (p0 >> _SHIFT) ^ x3 ^ k1.astype(np.uint64)
            y3 = p0 & _MASK
            x0, x1, x2, x3 = y0, y1, y2, y3
    return np.stack([x0, x1, x2, x3], axis=-1).astype(np.uint32)


def words_to_unit(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Two uint32 words to a double in ``(0, 1)`` with 53 random bits."""
    hi = (a >> np.uint32(5)).astype(np.float64)
    lo = (b >> np.uint32(6)).astype(np.float64)
    u = (hi * 67108864.0 + lo) / 9007199254740992.0
    # keep strictly inside (0, 1): inverse-CDF samplers need it
    return np.where(u == 0.0, 0.5 / 9007199254740992.0, u)


class CounterRng:
    """Per-path streams keyed by a 64-bit seed.

    A draw is addressed by ``(path, stream, step, tag)``: ``stream`` separates
    logically different uses (e.g. revival rounds), ``step`` is the event
    counter of the path and ``tag`` the purpose within a step.
    """

    def __init__(self, seed: int, stream: int = 0):
        seed = int(seed)
        if seed < 0 or seed >= 1 << 64:
            raise ValueError("seed must fit in 64 unsigned bits")
        self.seed = seed
        self.stream = int(stream)
        self._key = np.array([seed & 0xFFFFFFFF, seed >> 32], dtype=np.uint32)

    def child(self, stream: int) -> "CounterRng":
        return CounterRng(self.seed, stream)

    def uniform_pair(self, path: np.ndarray, step: np.ndarray, tag: int) -> tuple[np.ndarray, np.ndarray]:
        """Two independent uniforms per ``(path, step)`` for a given tag."""
        path = np.asarray(path, dtype=np.int64)
        step = np.broadcast_to(np.asarray(step, dtype=np.int64), path.shape)
        ctr = np.empty(path.shape + (4,), dtype=np.uint32)
        ctr[..., 0] = (path & 0xFFFFFFFF).astype(np.uint32)
        ctr[..., 1] = np.uint32(self.stream & 0xFFFFFFFF)
        ctr[..., 2] = (step & 0xFFFFFFFF).astype(np.uint32)
        ctr[..., 3] = np.uint32(tag & 0xFFFFFFFF)
        w = philox4x32(ctr, self._key)
        return words_to_unit(w[..., 0], w[..., 1]), words_to_unit(w[..., 2], w[..., 3])

    def uniform(self, path: np.ndarray, step: np.ndarray, tag: int) -> np.ndarray:
        return self.uniform_pair(path, step, tag)[0]

    def scalar(self, path: int, step: int, tag: int) -> float:
        return float(self.uniform(np.array([path]), np.array([step]), tag)[0])


class SequentialRng:
    """Scalar convenience wrapper: successive calls walk the step counter."""

    def __init__(self, rng: CounterRng, path: int = 0):
        self.rng = rng
        self.path = path
        self.step = 0

    def random(self) -> float:
        u = self.rng.scalar(self.path, self.step, 0)
        self.step += 1
        return u

    def random_array(self, n: int) -> np.ndarray:
        steps = np.arange(self.step, self.step + n)
        self.step += n
        return self.rng.uniform(np.full(n, self.path), steps, 0)
