"""Shared geometry, randomness, and estimation primitives.

Everything downstream (start rules, local solvers, the multistart driver,
benchmarks) builds on the types here: the box search domain, reproducible
random streams, running objective estimates, and the shrinking critical
radius that decides how large a neighborhood a sampled point must dominate
before a local run is started from it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

__all__ = [
    "BoxDomain",
    "EstimateStats",
    "RngStream",
    "SamplePoint",
    "radius_schedule",
    "uniform_sample",
    "update_estimate",
]


class RngStream:
    """Reproducible random stream keyed by a 64-bit seed and a stream id.

    Two streams with the same (seed, stream_id) replay bit-identical
    sequences; distinct pairs are statistically independent (PCG64 seeded
    through ``SeedSequence`` spawn keys). Exactly one logical task should
    own a stream at a time.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        if seed < 0:
            raise ValueError("seed must be nonnegative")
        if stream_id < 0:
            raise ValueError("stream_id must be nonnegative")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        self._gen = np.random.default_rng(seq)

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def uniform(self, low, high, size=None):
        return self._gen.uniform(low, high, size=size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self._gen.normal(loc, scale, size=size)

    def integers(self, low, high, size=None):
        return self._gen.integers(low, high, size=size)

    def choice(self, a, size=None, p=None):
        return self._gen.choice(a, size=size, p=p)

    def rademacher(self, size: int) -> np.ndarray:
        """Vector of +/-1 entries with equal probability."""
        return self._gen.integers(0, 2, size=size) * 2 - 1

    def __repr__(self) -> str:  # pragma: no cover
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"


def _readonly(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=float, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class BoxDomain:
    """Compact box search region with strictly positive widths."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = _readonly(np.atleast_1d(self.lower))
        hi = _readonly(np.atleast_1d(self.upper))
        if lo.ndim != 1 or hi.shape != lo.shape:
            raise ValueError("lower and upper must be 1-d arrays of equal length")
        if not np.all(lo < hi):
            raise ValueError("domain requires lower[i] < upper[i] for every coordinate")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def min_width(self) -> float:
        return float(np.min(self.widths))

    @property
    def max_width(self) -> float:
        return float(np.max(self.widths))

    def volume(self) -> float:
        return float(np.prod(self.widths))

    def contains(self, x: np.ndarray) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))

    def project(self, x: np.ndarray) -> np.ndarray:
        return np.clip(np.asarray(x, dtype=float), self.lower, self.upper)

    def boundary_distance(self, x: np.ndarray) -> float:
        """Distance from an interior point to the nearest face.

        For a box this is the minimum per-coordinate slack, which equals the
        Euclidean distance to the boundary.
        """
        x = np.asarray(x, dtype=float)
        return float(np.min(np.minimum(x - self.lower, self.upper - x)))


@dataclass(frozen=True)
class EstimateStats:
    """Running estimate of a noisy objective at one point.

    ``mean`` is the sample mean of ``n`` i.i.d. raw measurements and
    ``var_of_mean`` is the unbiased sample variance divided by ``n``.
    With n = 1 the variance is unknown; it is stored as 0.0 and must not be
    consumed (callers that need variance are required to use n >= 2).
    """

    n: int
    mean: float
    var_of_mean: float = 0.0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("estimate requires n >= 1")
        if self.var_of_mean < 0:
            raise ValueError("var_of_mean must be nonnegative")

    @classmethod
    def from_samples(cls, samples: Sequence[float]) -> "EstimateStats":
        return update_estimate(None, samples)

    @property
    def m2(self) -> float:
        """Sum of squared deviations of the raw samples (exact for merging)."""
        if self.n < 2:
            return 0.0
        return self.var_of_mean * self.n * (self.n - 1)


def update_estimate(stats: Optional[EstimateStats], new_samples: Iterable[float]) -> EstimateStats:
    """Fold a batch of raw measurements into an estimate.

    Single-pass merge of (count, mean, M2) triples, so merging is exact and
    associative up to roundoff regardless of how the raw sample multiset is
    partitioned. ``stats=None`` acts as an empty accumulator.
    """
    batch = np.asarray(list(new_samples) if not isinstance(new_samples, np.ndarray) else new_samples, dtype=float)
    if batch.size == 0:
        raise ValueError("new_samples must be nonempty")
    bn = int(batch.size)
    bmean = float(np.mean(batch))
    bm2 = float(np.sum((batch - bmean) ** 2))

    if stats is None:
        n, mean, m2 = bn, bmean, bm2
    else:
        an, amean, am2 = stats.n, stats.mean, stats.m2
        n = an + bn
        delta = bmean - amean
        mean = amean + delta * bn / n
        m2 = am2 + bm2 + delta * delta * an * bn / n

    var_of_mean = (m2 / (n - 1)) / n if n >= 2 else 0.0
    return EstimateStats(n=n, mean=mean, var_of_mean=var_of_mean)


@dataclass(frozen=True)
class SamplePoint:
    """A point with its objective estimate and provenance.

    ``origin`` is "uniform-sample" for points drawn by the outer loop and
    "lso-iterate" for points produced by a local run (``run_id`` set).
    ``eval_index`` is the 1-based global index of the first raw objective
    evaluation spent on this point; ``index`` is the point's position within
    its containing collection.
    """

    x: np.ndarray
    stats: EstimateStats
    origin: str = "uniform-sample"
    run_id: Optional[int] = None
    eval_index: int = 0
    index: int = -1

    def __post_init__(self):
        object.__setattr__(self, "x", _readonly(self.x))
        if self.origin not in ("uniform-sample", "lso-iterate"):
            raise ValueError(f"unknown origin {self.origin!r}")
        if self.origin == "lso-iterate" and self.run_id is None:
            raise ValueError("lso-iterate points must carry a run_id")


def uniform_sample(domain: BoxDomain, rng: RngStream) -> np.ndarray:
    """Draw one point uniformly from the box (coordinates independent)."""
    return rng.uniform(domain.lower, domain.upper)


def radius_schedule(num_sampled: int, d: int, volume: float, sigma: float) -> float:
    """Critical neighborhood radius as a function of the sample count.

    r = (1/sqrt(pi)) * [Gamma(1 + d/2) * volume * sigma * log(s) / s]^(1/d)

    with s = num_sampled. The radius shrinks to zero as s grows, and sigma > 4
    is required so that only finitely many local runs are ever started.
    Evaluated in log space through ``lgamma``, which is exact to machine
    precision for the integer and half-integer arguments arising here.
    """
    if num_sampled < 2:
        raise ValueError("radius schedule requires at least 2 sampled points")
    if sigma <= 4:
        raise ValueError(f"sigma must exceed 4 (got {sigma})")
    if d < 1:
        raise ValueError("dimension must be positive")
    if volume <= 0:
        raise ValueError("volume must be positive")
    s = float(num_sampled)
    log_r = (
        math.lgamma(1.0 + d / 2.0)
        + math.log(volume)
        + math.log(sigma)
        + math.log(math.log(s))
        - math.log(s)
    ) / d - 0.5 * math.log(math.pi)
    return math.exp(log_r)
