"""Data-driven growth-rate and reproduction-number estimators.

Five estimators over a daily notification series: log-cumulative regression,
log-daily regression, mean log-ratio of successive cumulatives, a
branching-process ratio estimator, and the Poisson maximum-likelihood
estimator of R0 under the discretized renewal model.  Each can be turned
into a forward prediction of the cumulative count a fixed horizon ahead.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .distributions import DiscreteDelay


@dataclass(frozen=True)
class CaseSeries:
    """Daily counts n(1..K), day 1 being the day of the first notification.

    Counts are whole numbers for observed data; fractional values are
    accepted so expected-value series (renewal-model output) can be fed
    back through the estimators.
    """

    daily: np.ndarray

    def __post_init__(self):
        daily = np.asarray(self.daily, dtype=float)
        if daily.ndim != 1 or len(daily) == 0:
            raise ValueError("daily counts must be a non-empty 1-d sequence")
        if np.any(~np.isfinite(daily)) or np.any(daily < 0):
            raise ValueError("daily counts must be finite and non-negative")
        daily.flags.writeable = False
        object.__setattr__(self, "daily", daily)

    def __len__(self) -> int:
        return len(self.daily)

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.daily)


@dataclass(frozen=True)
class PredictionScore:
    """Forecast against realized value; ratio > 1 means overprediction."""

    predicted: float
    actual: float

    def __post_init__(self):
        if self.actual <= 0:
            raise ValueError("actual count must be positive")

    @property
    def ratio(self) -> float:
        return self.predicted / self.actual


def _window_slice(series: CaseSeries, window: int) -> slice:
    if window < 2:
        raise ValueError("window must cover at least two days")
    if window > len(series):
        raise ValueError(f"window {window} exceeds series length {len(series)}")
    return slice(len(series) - window, len(series))


def _ols_slope(x: np.ndarray, y: np.ndarray) -> float:
    xc = x - x.mean()
    return float(xc @ (y - y.mean()) / (xc @ xc))


def est_a_log_cumulative(series: CaseSeries, window: int = 42) -> float:
    """Slope of log cumulative notifications over the last ``window`` days."""
    sl = _window_slice(series, window)
    cum = series.cumulative[sl]
    if np.any(cum <= 0):
        raise ValueError("cumulative counts in the window must be positive")
    days = np.arange(sl.start + 1, sl.stop + 1, dtype=float)
    return _ols_slope(days, np.log(cum))


def est_b_log_daily(series: CaseSeries, window: int = 42) -> float:
    """Slope of log daily notifications over the window; zero-count days dropped."""
    sl = _window_slice(series, window)
    daily = series.daily[sl].astype(float)
    days = np.arange(sl.start + 1, sl.stop + 1, dtype=float)
    keep = daily > 0
    if keep.sum() < 2:
        raise ValueError("window has fewer than two non-zero days")
    return _ols_slope(days[keep], np.log(daily[keep]))


def est_c_mean_ratio(series: CaseSeries, window: int = 42, log_ratio: bool = True) -> float:
    """Mean daily growth from ratios of successive cumulative counts.

    Averages log(c(t)/c(t-1)) over the last ``window`` steps (the default),
    which is exact on geometric series; ``log_ratio=False`` instead averages
    the plain ratios and returns mean(ratio) - 1.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    if window + 1 > len(series):
        raise ValueError(f"need {window + 1} days for {window} ratios")
    cum = series.cumulative[-(window + 1):].astype(float)
    if np.any(cum <= 0):
        raise ValueError("cumulative counts in the window must be positive")
    ratios = cum[1:] / cum[:-1]
    if log_ratio:
        return float(np.mean(np.log(ratios)))
    return float(np.mean(ratios) - 1.0)


def est_d_branching(series: CaseSeries, window: int = 42) -> float:
    """Log of the lag-one total ratio within the window.

    The daily multiplication factor exp(r) is estimated by
    (n(2)+...+n(K)) / (n(1)+...+n(K-1)) with day 1 the window's first day.
    """
    sl = _window_slice(series, window)
    daily = series.daily[sl].astype(float)
    num = daily[1:].sum()
    den = daily[:-1].sum()
    if num <= 0 or den <= 0:
        raise ValueError("window endpoints leave an empty numerator or denominator")
    return float(np.log(num / den))


def renewal_expected(series_daily: np.ndarray, weights: DiscreteDelay, t: int) -> float:
    """Expected count on day t (1-based) given days 1..t-1 under the renewal model.

    Sum over lags s of p(s) * I(t-s); lags reaching before day 1 contribute
    nothing (their mass is simply absent, no renormalization).
    """
    s_max = min(weights.horizon, t - 1)
    if s_max < 1:
        return 0.0
    lags = np.arange(1, s_max + 1)
    return float(weights.probs[:s_max] @ series_daily[t - 1 - lags])


def est_e_renewal_R0(series: CaseSeries, weights: DiscreteDelay) -> float:
    """Poisson MLE of a constant R0 under the discretized renewal model.

    With expected incidence R0 * Lambda(t), Lambda(t) = sum_s p(s)*I(t-s),
    the estimator is sum I(t) / sum Lambda(t) over days with Lambda(t) > 0.
    """
    daily = series.daily.astype(float)
    lam = np.array([renewal_expected(daily, weights, t) for t in range(2, len(daily) + 1)])
    obs = daily[1:]
    valid = lam > 0
    if not valid.any():
        raise ValueError("renewal weights give zero expectation on every day")
    return float(obs[valid].sum() / lam[valid].sum())


def predict_forward(
    series: CaseSeries,
    method: str,
    horizon: int = 42,
    weights: Optional[DiscreteDelay] = None,
    window: int = 42,
) -> float:
    """Predicted cumulative count ``horizon`` days past the series' end.

    Growth-rate methods (a-d) multiply the last cumulative count by
    exp(r_hat * horizon); the renewal method (e) iterates the fitted model
    forward on expected values.  Rounding to whole cases is left to the
    caller.
    """
    cum_last = float(series.cumulative[-1])
    if method in ("a", "b", "c", "d"):
        r_hat = {
            "a": est_a_log_cumulative,
            "b": est_b_log_daily,
            "c": est_c_mean_ratio,
            "d": est_d_branching,
        }[method](series, window)
        return cum_last * float(np.exp(r_hat * horizon))
    if method == "e":
        if weights is None:
            raise ValueError("method 'e' needs renewal weights")
        R0_hat = est_e_renewal_R0(series, weights)
        daily = series.daily.astype(float)
        extended = np.concatenate([daily, np.zeros(horizon)])
        for t in range(len(daily) + 1, len(daily) + horizon + 1):
            extended[t - 1] = R0_hat * renewal_expected(extended, weights, t)
        return cum_last + float(extended[len(daily):].sum())
    raise ValueError(f"unknown method {method!r}")
