"""The analytic truth: lognormal AR(1) blood-pressure process.

Log blood pressure at gestational age t weeks is normal with mean
mu(t) = c0 + c2*(t/10)^2 + c3*(t/10)^3 and constant standard deviation
sigma; standardized values in adjacent four-week visit intervals follow a
first-order autoregression with correlation rho. Everything here is exact
closed-form math: marginal and conditional percentiles, percentile ranks,
and the conditional ranks traced by drifting or jumping subject paths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numerics import std_normal_cdf, std_normal_quantile

__all__ = [
    "GA_WINDOW",
    "VISIT_INTERVAL_WEEKS",
    "LognormalAR1Model",
    "ConditionalParams",
    "PercentilePath",
    "log_mean",
    "marginal_percentile",
    "marginal_rank",
    "conditional_params",
    "conditional_percentile",
    "drift_conditional_ranks",
    "interval_index",
]

# Gestational-age study window (weeks) and the width of one visit interval.
GA_WINDOW = (16.0, 36.0)
VISIT_INTERVAL_WEEKS = 4.0


@dataclass(frozen=True)
class LognormalAR1Model:
    """Parameters of the generating process; defaults are the study model.

    ``window`` bounds the gestational ages at which the model is defined.
    Tests may widen it to probe degenerate coefficient sets; production code
    should leave the default.
    """

    c0: float = 4.247
    c2: float = -0.019
    c3: float = 0.006
    sigma: float = 0.1
    rho: float = 0.6
    window: tuple[float, float] = GA_WINDOW

    def __post_init__(self):
        if not self.sigma > 0.0:
            raise ValueError(f"sigma must be positive, got {self.sigma!r}")
        if not abs(self.rho) < 1.0:
            raise ValueError(f"rho must lie strictly in (-1, 1), got {self.rho!r}")
        if not self.window[0] < self.window[1]:
            raise ValueError(f"window must be increasing, got {self.window!r}")

    @property
    def sigma_cond(self) -> float:
        """Conditional log-scale SD for adjacent intervals: sigma*sqrt(1-rho^2)."""
        return self.sigma * math.sqrt(1.0 - self.rho * self.rho)


@dataclass(frozen=True)
class ConditionalParams:
    """Log-scale parameters of the distribution given the previous value."""

    mu_cond: float
    sigma_cond: float

    def __post_init__(self):
        if not self.sigma_cond > 0.0:
            raise ValueError("sigma_cond must be positive")


@dataclass(frozen=True)
class PercentilePath:
    """A subject trajectory given as marginal percentile ranks per visit."""

    times: tuple[float, ...]
    marginal_ranks: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "times", tuple(float(t) for t in self.times))
        object.__setattr__(
            self, "marginal_ranks", tuple(float(r) for r in self.marginal_ranks)
        )
        if len(self.times) != len(self.marginal_ranks):
            raise ValueError("times and marginal_ranks must have equal length")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("times must be strictly increasing")
        if any(not 0.0 < r < 1.0 for r in self.marginal_ranks):
            raise ValueError("marginal ranks must lie strictly in (0, 1)")


def _check_window(model: LognormalAR1Model, t) -> np.ndarray:
    arr = np.asarray(t, dtype=float)
    lo, hi = model.window
    if np.any(arr < lo) or np.any(arr > hi):
        raise ValueError(
            f"gestational age {t!r} outside the model window [{lo}, {hi}]"
        )
    return arr


def interval_index(t, window=GA_WINDOW, width=VISIT_INTERVAL_WEEKS):
    """0-based visit-interval index containing gestational age t.

    The final interval is closed on the right so the window's upper endpoint
    maps to the last visit.
    """
    arr = np.asarray(t, dtype=float)
    lo, hi = window
    if np.any(arr < lo) or np.any(arr > hi):
        raise ValueError(f"gestational age {t!r} outside [{lo}, {hi}]")
    n_intervals = int(round((hi - lo) / width))
    idx = np.minimum(np.floor((arr - lo) / width).astype(int), n_intervals - 1)
    return int(idx) if np.isscalar(t) or arr.ndim == 0 else idx


def log_mean(model: LognormalAR1Model, t):
    """Log-scale mean mu(t) = c0 + c2*(t/10)^2 + c3*(t/10)^3."""
    arr = _check_window(model, t)
    s = arr / 10.0
    out = model.c0 + model.c2 * s * s + model.c3 * s * s * s
    return float(out) if np.isscalar(t) or arr.ndim == 0 else out


def marginal_percentile(model: LognormalAR1Model, t, tau: float):
    """Marginal tau-percentile in mmHg: exp(mu(t) + quantile(tau)*sigma)."""
    z = std_normal_quantile(tau)
    out = np.exp(log_mean(model, t) + z * model.sigma)
    return float(out) if np.isscalar(out) or np.ndim(out) == 0 else out


def marginal_rank(model: LognormalAR1Model, t, y):
    """Marginal percentile rank of a value: Phi((ln y - mu(t)) / sigma)."""
    y_arr = np.asarray(y, dtype=float)
    if np.any(y_arr <= 0.0):
        raise ValueError(f"blood pressure must be positive, got {y!r}")
    out = std_normal_cdf((np.log(y_arr) - log_mean(model, t)) / model.sigma)
    return float(out) if np.isscalar(y) and np.isscalar(t) else out


def _check_adjacent(model: LognormalAR1Model, t_prev: float, t_cur: float) -> None:
    if not t_prev < t_cur:
        raise ValueError(f"t_prev={t_prev!r} must precede t_cur={t_cur!r}")
    i_prev = interval_index(t_prev, model.window)
    i_cur = interval_index(t_cur, model.window)
    if i_cur - i_prev != 1:
        raise ValueError(
            f"times {t_prev!r} and {t_cur!r} are {i_cur - i_prev} visit "
            "intervals apart; the conditional model is defined for adjacent "
            "intervals only"
        )


def conditional_params(
    model: LognormalAR1Model, t_prev: float, t_cur: float, y_prev: float
) -> ConditionalParams:
    """Log-scale parameters at t_cur given the adjacent-interval value y_prev."""
    _check_adjacent(model, t_prev, t_cur)
    if not y_prev > 0.0:
        raise ValueError(f"previous blood pressure must be positive, got {y_prev!r}")
    mu_cond = log_mean(model, t_cur) + model.rho * (
        math.log(y_prev) - log_mean(model, t_prev)
    )
    return ConditionalParams(mu_cond=mu_cond, sigma_cond=model.sigma_cond)


def conditional_percentile(
    model: LognormalAR1Model, t_prev: float, t_cur: float, y_prev: float, tau
):
    """Conditional tau-percentile in mmHg at t_cur given y_prev at t_prev."""
    params = conditional_params(model, t_prev, t_cur, y_prev)
    z = std_normal_quantile(tau)
    out = np.exp(params.mu_cond + z * params.sigma_cond)
    return float(out) if np.ndim(out) == 0 else out


def drift_conditional_ranks(model: LognormalAR1Model, path: PercentilePath):
    """Conditional percentile ranks along a path of marginal ranks.

    For visits j >= 2 the rank is Phi((z_j - rho*z_{j-1}) / sqrt(1 - rho^2))
    with z_j the standard normal quantile of the j-th marginal rank; it
    depends only on the standardized path and rho, not on the mean curve.
    Times must sit in consecutive visit intervals.
    """
    if len(path.times) < 2:
        raise ValueError("path needs at least two visits")
    idx = [interval_index(t, model.window) for t in path.times]
    for a, b, ta, tb in zip(idx, idx[1:], path.times, path.times[1:]):
        if b - a != 1:
            raise ValueError(
                f"visits at {ta!r} and {tb!r} weeks are not in adjacent intervals"
            )
    z = std_normal_quantile(np.array(path.marginal_ranks))
    denom = math.sqrt(1.0 - model.rho * model.rho)
    return std_normal_cdf((z[1:] - model.rho * z[:-1]) / denom)
