"""Scalar math and seeded randomness shared across the package.

Every random draw in dpmult goes through :class:`SeededRng`. A stream is
identified by ``(root_seed, stream_index)``; the pair is mixed with a
SplitMix64 finalizer into the seed of a PCG64 bit generator, so streams for
different model indices never share state.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """One SplitMix64 step: advance by the golden gamma and finalize."""
    z = (x + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def mix_seed(root_seed: int, stream_index: int) -> int:
    """Derive a 64-bit per-stream seed from a root seed and a stream index."""
    return splitmix64(splitmix64(root_seed & MASK64) ^ (stream_index & MASK64))


class SeededRng:
    """Deterministic random stream keyed by ``(root_seed, stream_index)``.

    Uniform doubles come from numpy's PCG64; normals (polar Box-Muller) and
    gamma draws (Marsaglia-Tsang) are built on top of those uniforms here so
    the transform is fixed and independent of numpy's own samplers.

    An instance is single-owner: do not share one between concurrent tasks.
    """

    __slots__ = ("root_seed", "stream_index", "_gen", "_ubuf", "_upos", "_spare")

    _BLOCK = 1024

    def __init__(self, root_seed: int, stream_index: int = 0):
        if root_seed < 0 or stream_index < 0:
            raise ValueError("seeds must be unsigned 64-bit integers")
        self.root_seed = root_seed & MASK64
        self.stream_index = stream_index & MASK64
        self._gen = np.random.Generator(
            np.random.PCG64(mix_seed(self.root_seed, self.stream_index))
        )
        self._ubuf: list[float] = []
        self._upos = 0
        self._spare: float | None = None

    def __repr__(self) -> str:
        return f"SeededRng(root_seed={self.root_seed}, stream_index={self.stream_index})"

    def spawn(self, stream_index: int) -> "SeededRng":
        """A fresh stream sharing this root seed."""
        return SeededRng(self.root_seed, stream_index)

    def uniform(self, size: int | None = None):
        """Uniform draws on [0, 1); a float when ``size`` is None."""
        if size is not None:
            return self._gen.random(size)
        if self._upos == len(self._ubuf):
            self._ubuf = self._gen.random(self._BLOCK).tolist()
            self._upos = 0
        u = self._ubuf[self._upos]
        self._upos += 1
        return u

    def standard_normal(self, size: int) -> np.ndarray:
        """``size`` i.i.d. N(0, 1) draws via the polar Box-Muller method."""
        out = np.empty(size, dtype=np.float64)
        filled = 0
        while filled < size:
            need_pairs = (size - filled + 1) // 2
            # acceptance rate is pi/4; over-draw so one batch almost always suffices
            batch = int(need_pairs / 0.78) + 8
            u = 2.0 * self._gen.random((batch, 2)) - 1.0
            s = u[:, 0] ** 2 + u[:, 1] ** 2
            ok = (s > 0.0) & (s < 1.0)
            u, s = u[ok], s[ok]
            factor = np.sqrt(-2.0 * np.log(s) / s)
            pairs = (u * factor[:, None]).ravel()
            take = min(size - filled, pairs.size)
            out[filled:filled + take] = pairs[:take]
            filled += take
        return out

    def normal(self) -> float:
        """One N(0, 1) draw; scalar polar method, keeping the spare value."""
        if self._spare is not None:
            z, self._spare = self._spare, None
            return z
        while True:
            a = 2.0 * self.uniform() - 1.0
            b = 2.0 * self.uniform() - 1.0
            s = a * a + b * b
            if 0.0 < s < 1.0:
                break
        f = math.sqrt(-2.0 * math.log(s) / s)
        self._spare = b * f
        return a * f


def sigmoid(t):
    """Logistic function 1/(1+exp(-t)), overflow-free for any finite input.

    Works on scalars and numpy arrays.
    """
    t = np.asarray(t, dtype=np.float64)
    e = np.exp(-np.abs(t))
    out = np.where(t >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return float(out) if out.ndim == 0 else out


def std_normal_cdf(z):
    """Standard normal CDF, Phi(z) = erfc(-z/sqrt(2))/2."""
    if np.ndim(z) == 0:
        return 0.5 * math.erfc(-float(z) / math.sqrt(2.0))
    from scipy.special import erfc

    return 0.5 * erfc(-np.asarray(z, dtype=np.float64) / math.sqrt(2.0))


def sample_gaussian_vector(rng: SeededRng, dim: int, scale: float) -> np.ndarray:
    """``dim`` i.i.d. draws from N(0, scale**2)."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if not scale > 0:
        raise ValueError("scale must be positive")
    return scale * rng.standard_normal(dim)


def sample_gamma(rng: SeededRng, shape: float, scale: float) -> float:
    """One Gamma(shape, scale) draw (Marsaglia-Tsang, with the shape<1 boost)."""
    if not shape > 0 or not scale > 0:
        raise ValueError("shape and scale must be positive")
    if shape < 1.0:
        g = sample_gamma(rng, shape + 1.0, 1.0)
        u = rng.uniform()
        while u == 0.0:
            u = rng.uniform()
        return scale * g * u ** (1.0 / shape)
    d = shape - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)
    while True:
        x = rng.normal()
        v = 1.0 + c * x
        if v <= 0.0:
            continue
        v = v * v * v
        u = rng.uniform()
        if u < 1.0 - 0.0331 * x ** 4:
            return scale * d * v
        if u > 0.0 and math.log(u) < 0.5 * x * x + d * (1.0 - v + math.log(v)):
            return scale * d * v


def percentile(values: Sequence[float], q: float) -> float:
    """Nearest-rank percentile: the ``max(1, ceil(q/100 * n))``-th smallest value."""
    if len(values) == 0:
        raise ValueError("empty sample")
    if not 0.0 <= q <= 100.0:
        raise ValueError("q must lie in [0, 100]")
    ordered = np.sort(np.asarray(values, dtype=np.float64))
    n = ordered.size
    rank = max(1, math.ceil(q * n / 100.0))
    return float(ordered[rank - 1])
