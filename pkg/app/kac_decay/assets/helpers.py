from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from app.kac_decay.assets.errors import TailMassError, ValidationError


def require(condition: bool, message: str, field: Optional[str] = None) -> None:
    """Raise ValidationError(message) naming `field` unless `condition` holds."""
    if not condition:
        raise ValidationError(message, field=field)


def substream(seed: int, *key: int) -> np.random.Generator:
    """
    Counter-based random stream for the block identified by `key`.

    The stream depends only on (seed, key), never on which worker draws from
    it, so block results are reproducible under any scheduling.
    """
    require(seed >= 0, f"seed must be non-negative, got {seed}", "seed")
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(seq))


def as_generator(rng) -> np.random.Generator:
    """Accept a Generator, an int seed or None (fresh entropy)."""
    if isinstance(rng, np.random.Generator):
        return rng
    if rng is None:
        return np.random.Generator(np.random.Philox())
    return substream(int(rng))


def block_ranges(total: int, block_size: int) -> list[Tuple[int, int, int]]:
    """
    Split range(total) into fixed-size blocks: [(block_index, start, stop), ...].
    Block boundaries depend only on `block_size`.
    """
    require(block_size >= 1, "block_size must be >= 1", "block_size")
    out = []
    for b, start in enumerate(range(0, total, block_size)):
        out.append((b, start, min(start + block_size, total)))
    return out


@dataclass
class RunningMoments:
    """Count, mean and sum of squared deviations (Chan et al. merge)."""

    count: int
    mean: np.ndarray
    m2: np.ndarray

    @classmethod
    def from_samples(cls, samples: np.ndarray) -> "RunningMoments":
        samples = np.asarray(samples, dtype=float)
        n = samples.shape[0]
        if n == 0:
            zeros = np.zeros(samples.shape[1:])
            return cls(0, zeros, zeros.copy())
        mean = samples.mean(axis=0)
        m2 = ((samples - mean) ** 2).sum(axis=0)
        return cls(n, mean, m2)

    def merge(self, other: "RunningMoments") -> "RunningMoments":
        if other.count == 0:
            return self
        if self.count == 0:
            return other
        n = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * (other.count / n)
        m2 = self.m2 + other.m2 + delta**2 * (self.count * other.count / n)
        return RunningMoments(n, mean, m2)

    @property
    def variance(self) -> np.ndarray:
        if self.count < 2:
            return np.zeros_like(self.mean)
        return self.m2 / (self.count - 1)

    @property
    def stderr(self) -> np.ndarray:
        if self.count < 2:
            return np.zeros_like(self.mean)
        return np.sqrt(self.variance / self.count)


def merge_in_order(parts: Sequence[RunningMoments]) -> RunningMoments:
    """Reduce block moments left to right; block order fixes the rounding."""
    require(len(parts) > 0, "nothing to merge", "parts")
    acc = parts[0]
    for part in parts[1:]:
        acc = acc.merge(part)
    return acc


def poisson_truncation(mean: float, tail: float = 1e-6) -> int:
    """Smallest k with P(K > k) < tail for K ~ Poisson(mean)."""
    require(mean >= 0, f"Poisson mean must be >= 0, got {mean}", "mean")
    require(0 < tail < 1, f"tail must be in (0, 1), got {tail}", "tail")
    if mean == 0:
        return 0
    k = int(stats.poisson.ppf(1.0 - tail, mean))
    while stats.poisson.sf(k, mean) >= tail:
        k += 1
    while k > 0 and stats.poisson.sf(k - 1, mean) < tail:
        k -= 1
    return k


def truncated_poisson_pmf(mean: float, k_max: int, tail: float = 1e-6) -> np.ndarray:
    """Normalised Poisson pmf on {0..k_max}; rejects truncations leaving >= tail mass."""
    mass_beyond = float(stats.poisson.sf(k_max, mean)) if mean > 0 else 0.0
    if mass_beyond >= tail:
        raise TailMassError(
            f"Poisson({mean:.4g}) tail beyond k_max={k_max} is {mass_beyond:.3g} >= {tail:g}",
            field="k_max",
        )
    pmf = stats.poisson.pmf(np.arange(k_max + 1), mean)
    return pmf / pmf.sum()


def fit_exponential_rate(times: np.ndarray, values: np.ndarray, target: float = 0.0) -> float:
    """Least-squares rate r of values - target ~ c * exp(-r t) on the positive part."""
    times = np.asarray(times, dtype=float)
    gap = np.asarray(values, dtype=float) - target
    mask = np.abs(gap) > 0
    require(mask.sum() >= 2, "need at least two nonzero points to fit a rate", "values")
    slope, _ = np.polyfit(times[mask], np.log(np.abs(gap[mask])), 1)
    return float(-slope)


def max_relative_drift(reference: np.ndarray, values: np.ndarray) -> float:
    reference = np.asarray(reference, dtype=float)
    scale = np.maximum(np.abs(reference), np.finfo(float).tiny)
    return float(np.max(np.abs(np.asarray(values) - reference) / scale))


def within_sigma(estimate, expected, stderr, n_sigma: float = 3.0, floor: float = 1e-12) -> bool:
    """|estimate - expected| <= n_sigma * stderr (+ floor) componentwise."""
    diff = np.abs(np.asarray(estimate, dtype=float) - np.asarray(expected, dtype=float))
    return bool(np.all(diff <= n_sigma * np.asarray(stderr, dtype=float) + floor))


def isfinite_all(x) -> bool:
    return bool(np.all(np.isfinite(x)))
