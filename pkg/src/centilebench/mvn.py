"""Gaussian maximum likelihood on log measurements.

Per-subject vectors of observed log values are jointly normal with mean
B(t) . beta and covariance sigma^2 * rho^|j-k| over visit-interval indices,
so a missed visit simply raises the power on rho. The mean coefficients
are profiled out by generalized least squares and sigma has a closed form
given rho, leaving a one-dimensional profile likelihood that is maximized
by bounded search. Centiles come from back-transforming normal quantiles
to the measurement scale.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .cohort import Cohort
from .errors import FitError
from .model import interval_index
from .numerics import std_normal_quantile
from .splines import SplineSpec, design_matrix

__all__ = [
    "MVNFit",
    "fit_mvn",
    "mvn_marginal_centile",
    "mvn_conditional_centile",
    "gaussian_log_likelihood",
]

_RHO_BOUNDS = (-0.995, 0.995)


@dataclass(frozen=True)
class MVNFit:
    """Fitted mean-curve coefficients (log scale) and covariance parameters."""

    spec: SplineSpec
    mean_coefs: tuple[float, ...]
    sigma_hat: float
    rho_hat: float
    loglik: float = float("nan")
    n_obs: int = 0

    def __post_init__(self):
        if not self.sigma_hat > 0.0:
            raise ValueError("sigma_hat must be positive")
        if not abs(self.rho_hat) < 1.0:
            raise ValueError("rho_hat must lie strictly in (-1, 1)")

    def mean_at(self, t) -> np.ndarray:
        return design_matrix(self.spec, t) @ np.asarray(self.mean_coefs)

    def to_dict(self) -> dict:
        return {
            "knots": list(self.spec.knots),
            "mean_coefs": list(self.mean_coefs),
            "sigma_hat": self.sigma_hat,
            "rho_hat": self.rho_hat,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _pattern_moments(cohort: Cohort, spec: SplineSpec, center: float):
    """Group subjects by missingness pattern and accumulate cross moments.

    For each pattern the per-rho GLS pieces reduce to contractions of the
    inverse correlation matrix with fixed tensors, so the optimizer never
    revisits the data.
    """
    logs = np.log(cohort.values) - center
    by_pattern: dict[tuple[int, ...], list[int]] = {}
    for i in range(cohort.n_subjects):
        key = tuple(np.nonzero(cohort.observed[i])[0])
        if key:
            by_pattern.setdefault(key, []).append(i)
    groups = []
    n_obs = 0
    for key, members in by_pattern.items():
        idx = np.asarray(members)
        k = np.asarray(key)
        bases = np.stack([design_matrix(spec, cohort.times[i, k]) for i in idx])
        ys = logs[np.ix_(idx, k)]
        groups.append(
            {
                "gaps": np.abs(np.subtract.outer(k, k)).astype(float),
                "count": len(idx),
                "sxx": np.einsum("nka,nlb->klab", bases, bases),
                "sxy": np.einsum("nka,nl->kla", bases, ys),
                "syy": np.einsum("nk,nl->kl", ys, ys),
            }
        )
        n_obs += ys.size
    return groups, n_obs


def _profile(rho: float, groups, n_obs: int, n_basis: int):
    """Profile log-likelihood at rho with GLS beta and closed-form sigma."""
    a_mat = np.zeros((n_basis, n_basis))
    c_vec = np.zeros(n_basis)
    log_det = 0.0
    syy = 0.0
    for g in groups:
        corr = rho ** g["gaps"]
        w = np.linalg.inv(corr)
        log_det += g["count"] * np.linalg.slogdet(corr)[1]
        a_mat += np.einsum("kl,klab->ab", w, g["sxx"])
        c_vec += np.einsum("kl,kla->a", w, g["sxy"])
        syy += np.einsum("kl,kl->", w, g["syy"])
    beta = np.linalg.solve(a_mat, c_vec)
    quad = syy - 2.0 * c_vec @ beta + beta @ a_mat @ beta
    sigma2 = quad / n_obs
    ll = -0.5 * (n_obs * math.log(2.0 * math.pi * sigma2) + log_det + n_obs)
    return ll, beta, math.sqrt(sigma2)


def fit_mvn(cohort: Cohort, spec: SplineSpec) -> MVNFit:
    """Maximum likelihood fit of (beta, sigma, rho); empty subjects are skipped."""
    center = float(np.log(cohort.values[cohort.observed]).mean())
    groups, n_obs = _pattern_moments(cohort, spec, center)
    if not groups:
        raise ValueError("cohort has no observed measurements")
    if n_obs < spec.n_basis + 2:
        raise ValueError(f"too few observed measurements ({n_obs}) to fit")

    result = minimize_scalar(
        lambda rho: -_profile(rho, groups, n_obs, spec.n_basis)[0],
        bounds=_RHO_BOUNDS,
        method="bounded",
        options={"xatol": 1e-7},
    )
    if not result.success:
        raise FitError(f"profile-likelihood search failed: {result.message}")
    rho = float(result.x)
    ll, beta, sigma = _profile(rho, groups, n_obs, spec.n_basis)
    # Undo the centering of the log values: the basis sums to one, so the
    # offset moves entirely into the mean coefficients.
    return MVNFit(
        spec=spec,
        mean_coefs=tuple(beta + center),
        sigma_hat=sigma,
        rho_hat=rho,
        loglik=float(ll),
        n_obs=n_obs,
    )


def mvn_marginal_centile(fit: MVNFit, t, tau: float):
    """Marginal tau-centile in mmHg: exp(mean(t) + quantile(tau) * sigma)."""
    out = np.exp(fit.mean_at(t) + std_normal_quantile(tau) * fit.sigma_hat)
    return float(out[0]) if np.ndim(t) == 0 else out


def mvn_conditional_centile(
    fit: MVNFit, t_prev: float, y_prev: float, t_cur: float, tau: float
) -> float:
    """Conditional tau-centile at t_cur given the adjacent-interval y_prev."""
    if y_prev <= 0.0:
        raise ValueError(f"previous measurement must be positive, got {y_prev!r}")
    if interval_index(t_cur, fit.spec.boundary) - interval_index(
        t_prev, fit.spec.boundary
    ) != 1:
        raise ValueError(
            f"times {t_prev!r} and {t_cur!r} are not in adjacent visit intervals"
        )
    mu_cond = float(fit.mean_at(t_cur)[0]) + fit.rho_hat * (
        math.log(y_prev) - float(fit.mean_at(t_prev)[0])
    )
    scale = fit.sigma_hat * math.sqrt(1.0 - fit.rho_hat * fit.rho_hat)
    return float(np.exp(mu_cond + std_normal_quantile(tau) * scale))


def gaussian_log_likelihood(
    cohort: Cohort, spec: SplineSpec, mean_coefs, sigma: float, rho: float
) -> float:
    """Exact joint log-likelihood of the observed data at given parameters.

    Straightforward per-subject evaluation, deliberately independent of the
    moment-based path used by fit_mvn.
    """
    if sigma <= 0.0 or not abs(rho) < 1.0:
        raise ValueError("need sigma > 0 and |rho| < 1")
    beta = np.asarray(mean_coefs, dtype=float)
    total = 0.0
    for i in range(cohort.n_subjects):
        k = np.nonzero(cohort.observed[i])[0]
        if k.size == 0:
            continue
        resid = np.log(cohort.values[i, k]) - design_matrix(
            spec, cohort.times[i, k]
        ) @ beta
        cov = sigma ** 2 * rho ** np.abs(np.subtract.outer(k, k)).astype(float)
        sign, log_det = np.linalg.slogdet(cov)
        total += -0.5 * (
            k.size * math.log(2.0 * math.pi)
            + log_det
            + resid @ np.linalg.solve(cov, resid)
        )
    return float(total)
