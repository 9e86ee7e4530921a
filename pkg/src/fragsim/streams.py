"""Path-indexed uniform streams.

Paths are grouped in fixed chunks of ``CHUNK`` consecutive indices.  Each
chunk owns one generator seeded from ``(seed, tag, chunk)`` and draws its
uniforms in blocks of shape ``(width, CHUNK, block)``, so the ``n``-th draw of
path ``i`` never depends on which other paths are simulated alongside it,
how many workers are used, or how far other paths have progressed.
"""
from __future__ import annotations

import numpy as np

CHUNK = 1024
BLOCK = 32

# stream tags; one per independent source of randomness
JUMPS = 1
INITIAL = 2
ZINF = 3
XINF = 4
ONE_STEP = 5
FIRST_JUMP = 6
SHATTER = 7
XINF_FRESH = 8

_HALF_ULP = 2.0**-54


def open_uniform(rng: np.random.Generator, shape):
    """Uniforms strictly inside (0, 1)."""
    return rng.random(shape) + _HALF_ULP


def chunk_rng(seed: int, tag: int, chunk: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(tag), int(chunk))))


class PathStreams:
    """Uniform draws ``U[k, i, n]`` for paths ``start <= i < stop``.

    ``draw(n)`` returns an array of shape ``(width, stop - start)`` holding
    the ``n``-th group of ``width`` uniforms of every path.  Calls must use
    non-decreasing ``n``.
    """

    def __init__(self, seed, tag, start, stop, width=2, block=BLOCK):
        if stop <= start:
            raise ValueError("empty path range")
        self.seed, self.tag = int(seed), int(tag)
        self.start, self.stop = int(start), int(stop)
        self.width, self.block = width, block
        self._c0 = self.start // CHUNK
        self._c1 = (self.stop - 1) // CHUNK + 1
        self._rngs = [chunk_rng(seed, tag, c) for c in range(self._c0, self._c1)]
        self._lo = self.start - self._c0 * CHUNK
        self._block_idx = -1
        self._cur = None

    def _advance(self):
        parts = [rng.random((self.width, CHUNK, self.block)) for rng in self._rngs]
        buf = np.concatenate(parts, axis=1) if len(parts) > 1 else parts[0]
        self._cur = buf[:, self._lo : self._lo + (self.stop - self.start), :] + _HALF_ULP
        self._block_idx += 1

    def draw(self, n: int) -> np.ndarray:
        b = n // self.block
        if b < self._block_idx:
            raise ValueError("streams can only be read forwards")
        while self._block_idx < b:
            self._advance()
        return self._cur[:, :, n % self.block]


def batches(n_paths: int, batch_size: int = 64 * CHUNK):
    """Split ``range(n_paths)`` into chunk-aligned ``(start, stop)`` pairs."""
    batch_size = max(CHUNK, (batch_size // CHUNK) * CHUNK)
    return [(s, min(s + batch_size, n_paths)) for s in range(0, n_paths, batch_size)]


def map_batches(fn, n_paths: int, threads: int = 1, batch_size: int = 64 * CHUNK):
    """Apply ``fn(start, stop)`` over path batches and concatenate the results
    in path order.  The output does not depend on ``threads``."""
    jobs = batches(n_paths, batch_size)
    if threads > 1 and len(jobs) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda se: fn(*se), jobs))
    else:
        results = [fn(s, e) for s, e in jobs]
    if isinstance(results[0], tuple):
        return tuple(np.concatenate(r) for r in zip(*results))
    return np.concatenate(results)
