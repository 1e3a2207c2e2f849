"""Gamma distribution algebra used throughout the toolkit.

All duration distributions (generation times, latent/infectious periods,
delays to death or recovery) are parameterized as Gamma(shape, rate) with
mean shape/rate and variance shape/rate**2.  Besides construction and the
usual density/CDF/moments, the module provides the Laplace transform
E[exp(-r*T)] (the workhorse behind every growth-rate and delayed-observation
formula), random sampling, and discretization to daily probabilities for
renewal-equation computations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats


@dataclass(frozen=True)
class GammaParams:
    """Gamma distribution in shape/rate form (rate in 1/day)."""

    shape: float
    rate: float

    def __post_init__(self):
        if not (self.shape > 0 and np.isfinite(self.shape)):
            raise ValueError(f"shape must be positive, got {self.shape}")
        if not (self.rate > 0 and np.isfinite(self.rate)):
            raise ValueError(f"rate must be positive, got {self.rate}")

    @classmethod
    def from_shape_scale(cls, shape: float, scale: float) -> "GammaParams":
        """Alternate constructor; converts scale to rate immediately."""
        if scale <= 0:
            raise ValueError(f"scale must be positive, got {scale}")
        return cls(shape, 1.0 / scale)

    def mean(self) -> float:
        return self.shape / self.rate

    def variance(self) -> float:
        return self.shape / self.rate**2

    def sd(self) -> float:
        return np.sqrt(self.shape) / self.rate

    def cv(self) -> float:
        """Coefficient of variation, 1/sqrt(shape)."""
        return 1.0 / np.sqrt(self.shape)

    def frozen(self):
        """scipy frozen distribution with the same parameters."""
        return stats.gamma(a=self.shape, scale=1.0 / self.rate)


@dataclass(frozen=True)
class DiscreteDelay:
    """Daily delay probabilities p(s) for s = 1..horizon.

    ``probs[i]`` is the probability of day ``i + 1``.  Entries are
    non-negative and sum to 1 (within 1e-12).
    """

    probs: np.ndarray
    horizon: int

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        probs.flags.writeable = False
        object.__setattr__(self, "probs", probs)
        if self.horizon < 1 or len(probs) != self.horizon:
            raise ValueError("horizon must match the length of probs")
        if np.any(probs < 0):
            raise ValueError("delay probabilities must be non-negative")
        if abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError(f"delay probabilities must sum to 1, got {probs.sum()!r}")

    def mean(self) -> float:
        return float(np.arange(1, self.horizon + 1) @ self.probs)


def gamma_from_moments(mean: float, sd: float) -> GammaParams:
    """Construct GammaParams with the requested mean and standard deviation.

    Uses shape = mean**2/sd**2 and rate = mean/sd**2.
    """
    if mean <= 0:
        raise ValueError(f"mean must be positive, got {mean}")
    if sd <= 0:
        raise ValueError(f"sd must be positive, got {sd}")
    var = sd * sd
    return GammaParams(shape=mean * mean / var, rate=mean / var)


def pdf(params: GammaParams, t):
    """Gamma density at t (days); t must be non-negative."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("density requested at negative time")
    out = stats.gamma.pdf(t, a=params.shape, scale=1.0 / params.rate)
    return out if out.ndim else float(out)


def log_pdf(params: GammaParams, t):
    """Log of the Gamma density at t; -inf outside the support."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("density requested at negative time")
    out = stats.gamma.logpdf(t, a=params.shape, scale=1.0 / params.rate)
    return out if out.ndim else float(out)


def cdf(params: GammaParams, t):
    """Gamma CDF at t (days); t must be non-negative."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("CDF requested at negative time")
    out = stats.gamma.cdf(t, a=params.shape, scale=1.0 / params.rate)
    return out if out.ndim else float(out)


def laplace(params: GammaParams, r: float) -> float:
    """Expected value of exp(-r*T) for T ~ Gamma(shape, rate).

    Closed form (rate/(rate + r))**shape, valid for r > -rate.  This is the
    quantity that links incidence growth at rate r to every delayed or
    discounted observation in the toolkit.
    """
    if r <= -params.rate:
        raise ValueError(
            f"transform diverges: need r > {-params.rate}, got {r}"
        )
    return float((params.rate / (params.rate + r)) ** params.shape)


def sample(params: GammaParams, rng: np.random.Generator, size=None):
    """Draw Gamma variates (supports non-integer shape) from ``rng``."""
    return rng.gamma(params.shape, 1.0 / params.rate, size=size)


def discretize(params: GammaParams, horizon: int) -> DiscreteDelay:
    """Daily probabilities p(s) = CDF(s) - CDF(s-1), s = 1..horizon, renormalized.

    Rejects horizons that truncate more than 0.1% of the probability mass,
    so the renormalization is always a small correction.
    """
    horizon = int(horizon)
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    grid = np.arange(0, horizon + 1, dtype=float)
    cum = cdf(params, grid)
    total = cum[-1]
    if total < 0.999:
        raise ValueError(
            f"horizon {horizon} keeps only {total:.6f} of the mass; extend it"
        )
    probs = np.diff(cum)
    return DiscreteDelay(probs=probs / probs.sum(), horizon=horizon)


def discretize_centered(params: GammaParams, horizon: int) -> DiscreteDelay:
    """Day-lag probabilities for differences of day-binned event times.

    When both endpoints of a delay T are recorded as calendar days, the
    observed day lag is floor(T) or floor(T)+1 with weights set by the
    fractional part, i.e. the tent-kernel binning
    p(k) = integral of (1 - |t - k|)+ * f(t).  Unlike :func:`discretize`
    this preserves the mean instead of shifting it up by half a day, which
    matters for renewal-equation weights.  Lag-0 mass (same-day pairs) is
    dropped and the weights renormalized.
    """
    horizon = int(horizon)
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    grid = np.arange(0, horizon + 2, dtype=float)
    cum0 = cdf(params, grid)
    if cum0[horizon] < 0.999:
        raise ValueError(
            f"horizon {horizon} keeps only {cum0[horizon]:.6f} of the mass; extend it"
        )
    # partial first moments: integral of t*f(t) over (a, b] via the shape+1 CDF
    cum1 = params.mean() * stats.gamma.cdf(grid, a=params.shape + 1.0, scale=1.0 / params.rate)
    k = np.arange(1, horizon + 1, dtype=float)
    rising = cum1[1:-1] - cum1[:-2] - (k - 1.0) * (cum0[1:-1] - cum0[:-2])
    falling = (k + 1.0) * (cum0[2:] - cum0[1:-1]) - (cum1[2:] - cum1[1:-1])
    probs = rising + falling
    return DiscreteDelay(probs=probs / probs.sum(), horizon=horizon)


def discretization_horizon(params: GammaParams, mass: float = 0.9999, cap: int = 500) -> int:
    """Smallest whole-day horizon keeping at least ``mass`` of the distribution."""
    h = int(np.ceil(stats.gamma.ppf(mass, a=params.shape, scale=1.0 / params.rate)))
    return max(1, min(h, cap))
