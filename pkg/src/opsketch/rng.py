"""
Reproducible Gaussian streams.

Each stream is a Philox-4x64 counter-based generator keyed by a BLAKE2b
hash of (seed, *names).  Raw 64-bit words are turned into uniforms on
(0, 1) and paired through Box-Muller, so the k-th normal of a stream only
depends on its key and k.  Matrices are filled row-major, which makes a
matrix with more rows extend one with fewer rows: Gaussian test matrices
are nested for free.
"""
from __future__ import annotations

import hashlib

import numpy as np

_TWO_PI = 2.0 * np.pi


def derive_seed(seed: int, *names) -> int:
    """64-bit key for the named sub-stream of `seed`."""
    h = hashlib.blake2b(digest_size=8)
    h.update(int(seed).to_bytes(16, "little", signed=True))
    for name in names:
        h.update(b"\x1f")
        h.update(str(name).encode())
    return int.from_bytes(h.digest(), "little")


def _uniform_open(raw: np.ndarray) -> np.ndarray:
    # top 53 bits, shifted by half an ulp so 0 is never produced
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


class GaussianStream:
    """Sequential standard normals from a keyed counter-based stream."""

    def __init__(self, seed: int, *names):
        self.key = derive_seed(seed, *names)
        self._bitgen = np.random.Philox(key=self.key)
        self._buffer = np.empty(0)
        self.drawn = 0

    def normals(self, count: int) -> np.ndarray:
        """Next `count` standard normals."""
        need = count - self._buffer.size
        if need > 0:
            pairs = (need + 1) // 2
            raw = self._bitgen.random_raw(2 * pairs)
            u1 = _uniform_open(raw[0::2])
            u2 = _uniform_open(raw[1::2])
            r = np.sqrt(-2.0 * np.log(u1))
            z = np.empty(2 * pairs)
            z[0::2] = r * np.cos(_TWO_PI * u2)
            z[1::2] = r * np.sin(_TWO_PI * u2)
            self._buffer = np.concatenate([self._buffer, z])
        out, self._buffer = self._buffer[:count], self._buffer[count:]
        self.drawn += count
        return out

    def matrix(self, rows: int, cols: int) -> np.ndarray:
        return self.normals(rows * cols).reshape(rows, cols)


class NestedGaussianMatrix:
    """Gaussian matrix with a fixed number of columns whose rows are revealed on demand.

    ``rows(n)`` always returns the same leading n rows, so test matrices for
    n_1 < n_2 < ... are nested.
    """

    def __init__(self, cols: int, seed: int, *names):
        self.cols = cols
        self._stream = GaussianStream(seed, *names)
        self._rows = np.empty((0, cols))

    def rows(self, n: int) -> np.ndarray:
        if n > self._rows.shape[0]:
            extra = self._stream.matrix(n - self._rows.shape[0], self.cols)
            self._rows = np.vstack([self._rows, extra])
        return self._rows[:n].copy()


def gaussian_matrix(rows: int, cols: int, seed: int, *names) -> np.ndarray:
    """rows x cols matrix of i.i.d. N(0, 1) entries from stream (seed, *names)."""
    if rows < 1 or cols < 1:
        raise ValueError("gaussian_matrix needs rows, cols >= 1")
    return GaussianStream(seed, *names).matrix(rows, cols)
