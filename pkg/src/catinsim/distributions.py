"""Loss-severity distributions: truncated Pareto event sizes, beta allocation.

The total damage of a catastrophe is a fraction of the region's insured
value, drawn from a Pareto density ``sigma / D**(sigma+1)`` restricted and
renormalized to [0.25, 1]. The damage is then split over the region's
individual risks with Beta(1, h) draws whose mean reproduces the total:
``h = 1/L - 1`` for total fraction L.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TRUNCATION_LOW = 0.25
TRUNCATION_HIGH = 1.0


@dataclass(frozen=True)
class TruncatedPareto:
    """Pareto density ~ sigma/D^(sigma+1) renormalized to [low, high]."""

    sigma: float
    low: float = TRUNCATION_LOW
    high: float = TRUNCATION_HIGH

    def __post_init__(self) -> None:
        if self.sigma <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not 0 < self.low < self.high:
            raise ValueError(f"invalid truncation bounds [{self.low}, {self.high}]")

    @property
    def _norm(self) -> float:
        # integral of sigma D^-(sigma+1) over [low, high]
        return self.low**-self.sigma - self.high**-self.sigma

    def mean(self) -> float:
        s = self.sigma
        if s == 1.0:
            return float(np.log(self.high / self.low) / self._norm)
        return s / (s - 1) * (self.low ** (1 - s) - self.high ** (1 - s)) / self._norm

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        u = (self.low**-self.sigma - np.clip(x, self.low, self.high) ** -self.sigma) / self._norm
        return np.where(x < self.low, 0.0, np.where(x > self.high, 1.0, u))

    def ppf(self, q):
        """Inverse CDF; q may be scalar or array in [0, 1]."""
        q = np.asarray(q, dtype=float)
        if np.any((q < 0) | (q > 1)):
            raise ValueError("quantile levels must lie in [0, 1]")
        return (self.low**-self.sigma - q * self._norm) ** (-1.0 / self.sigma)

    def sample(self, rng: np.random.Generator, size: int | None = None):
        """Inverse-CDF sampling."""
        return self.ppf(rng.random(size))

    def partial_mean(self, x1: float, x2: float) -> float:
        """integral of L * pdf(L) over [x1, x2] (clipped to the support)."""
        x1 = min(max(x1, self.low), self.high)
        x2 = min(max(x2, self.low), self.high)
        if x2 <= x1:
            return 0.0
        s = self.sigma
        if s == 1.0:
            return float(np.log(x2 / x1) / self._norm)
        return s / (s - 1) * (x1 ** (1 - s) - x2 ** (1 - s)) / self._norm

    def expected_layer_fraction(self, attach_frac: float, limit_frac: float) -> float:
        """E[min(max(L - a, 0), l - a)] for a layer [a, l] in loss-fraction units."""
        if not 0 <= attach_frac < limit_frac:
            raise ValueError(f"invalid layer [{attach_frac}, {limit_frac}]")
        a = attach_frac
        b = min(limit_frac, self.high)
        if b <= self.low and a < self.low:
            return 0.0
        a_eff = max(a, self.low)
        cdf_a = float(self.cdf(a_eff))
        cdf_b = float(self.cdf(b))
        inner = self.partial_mean(a_eff, b) - a * (cdf_b - cdf_a)
        above = (b - a) * (1.0 - cdf_b)
        return inner + above


def allocate_fractions(total_fraction: float, size: int, rng: np.random.Generator) -> np.ndarray:
    """Per-risk damage fractions for one event, each in [0, 1].

    Beta(1, h) with h = 1/total_fraction - 1, so the per-risk mean equals the
    event's total damage fraction. total_fraction = 1 is the degenerate
    total-destruction limit (h -> 0) and returns all ones.
    """
    if not 0.0 < total_fraction <= 1.0:
        raise ValueError(f"total damage fraction must be in (0, 1], got {total_fraction}")
    if total_fraction == 1.0:
        return np.ones(size)
    h = 1.0 / total_fraction - 1.0
    return rng.beta(1.0, h, size=size)
