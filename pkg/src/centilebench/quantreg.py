"""Centile estimation by quantile regression.

Marginal charts regress the measurement on the spline basis alone; the
conditional chart adds a linear adjustment for the previous measurement
whose slope may vary with the time gap:

    y_j ~ B(t_j) . c + (beta0 + beta1 * (t_j - t_{j-1})) * y_{j-1}

Each fit minimizes the check loss at its quantile level. The minimization
is the classic linear program, solved here in its bounded dual form

    max  y'd   s.t.  X'd = 0,   tau - 1 <= d_i <= tau

with a simplex method, so solutions are vertex-exact; the primal
coefficients are the negated equality multipliers. Every returned fit
carries residual sign counts so the subgradient optimality condition can
be audited, and a fit failing the audit is re-solved on the primal before
being accepted.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .cohort import PairSet
from .errors import FitError
from .numerics import pinball_loss
from .splines import SplineSpec, design_matrix

__all__ = [
    "QuantileFit",
    "fit_marginal_qr",
    "fit_conditional_qr",
    "predict_centile",
    "count_quantile_crossings",
]

# Residuals within this relative tolerance of zero count as interpolated
# when auditing subgradient optimality.
_ZERO_REL_TOL = 1e-7


@dataclass(frozen=True)
class QuantileFit:
    """A fitted quantile model with residual-sign diagnostics.

    Marginal fits have beta0 = beta1 = 0 by construction. ``n_neg`` and
    ``n_pos`` count strictly negative/positive residuals at the solution;
    subgradient optimality requires n_neg <= tau*n and n_pos <= (1-tau)*n.
    """

    tau: float
    spec: SplineSpec
    spline_coefs: tuple[float, ...]
    beta0: float = 0.0
    beta1: float = 0.0
    conditional: bool = False
    objective: float = float("nan")
    n_obs: int = 0
    n_neg: int = 0
    n_pos: int = 0

    @property
    def n_params(self) -> int:
        return self.spec.n_basis + (2 if self.conditional else 0)

    @property
    def subgradient_ok(self) -> bool:
        return (
            self.n_neg <= self.tau * self.n_obs + 1e-9
            and self.n_pos <= (1.0 - self.tau) * self.n_obs + 1e-9
        )

    def to_dict(self) -> dict:
        return {
            "tau": self.tau,
            "knots": list(self.spec.knots),
            "coefficients": list(self.spline_coefs),
            "beta0": self.beta0,
            "beta1": self.beta1,
            "conditional": self.conditional,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _check_design(X: np.ndarray, what: str) -> None:
    rank = np.linalg.matrix_rank(X)
    if rank < X.shape[1]:
        raise ValueError(
            f"{what} design matrix is rank deficient: rank {rank} < "
            f"{X.shape[1]} columns; spread the observation times or reduce n_basis"
        )


def _solve_check_loss(X: np.ndarray, y: np.ndarray, tau: float) -> np.ndarray:
    """Exact check-loss minimizer via the dual LP, with primal fallback."""
    n = y.size
    res = linprog(
        -y,
        A_eq=sp.csr_matrix(X.T),
        b_eq=np.zeros(X.shape[1]),
        bounds=[(tau - 1.0, tau)] * n,
        method="highs",
    )
    if res.status == 0 and res.eqlin is not None:
        beta = -np.asarray(res.eqlin.marginals, dtype=float)
        if _sign_counts_ok(X, y, beta, tau):
            return beta
    # Rare degenerate case: solve the primal split-residual form outright.
    p = X.shape[1]
    c = np.concatenate([np.zeros(p), tau * np.ones(n), (1.0 - tau) * np.ones(n)])
    eye = sp.identity(n, format="csr")
    a_eq = sp.hstack([sp.csr_matrix(X), eye, -eye], format="csr")
    res = linprog(
        c,
        A_eq=a_eq,
        b_eq=y,
        bounds=[(None, None)] * p + [(0, None)] * (2 * n),
        method="highs-ds",
    )
    if res.status != 0:
        raise FitError(
            f"check-loss LP failed at tau={tau}: status {res.status} "
            f"({res.message}) after {res.nit} iterations"
        )
    return np.asarray(res.x[:p], dtype=float)


def _sign_counts(X, y, beta, tau) -> tuple[int, int]:
    resid = y - X @ beta
    tol = _ZERO_REL_TOL * max(1.0, float(np.max(np.abs(y))) if y.size else 1.0)
    return int(np.sum(resid < -tol)), int(np.sum(resid > tol))


def _sign_counts_ok(X, y, beta, tau) -> bool:
    n_neg, n_pos = _sign_counts(X, y, beta, tau)
    n = y.size
    return n_neg <= tau * n + 1e-9 and n_pos <= (1.0 - tau) * n + 1e-9


def fit_marginal_qr(times, values, tau: float, spec: SplineSpec) -> QuantileFit:
    """Fit a marginal centile curve B(t) . c at quantile level tau."""
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must lie strictly in (0, 1), got {tau!r}")
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if t.size != y.size:
        raise ValueError("times and values must have equal length")
    if t.size < spec.n_basis + 1:
        raise ValueError(
            f"need at least n_basis+1={spec.n_basis + 1} observations, got {t.size}"
        )
    X = design_matrix(spec, t)
    _check_design(X, "marginal")
    beta = _solve_check_loss(X, y, tau)
    n_neg, n_pos = _sign_counts(X, y, beta, tau)
    return QuantileFit(
        tau=tau,
        spec=spec,
        spline_coefs=tuple(beta),
        conditional=False,
        objective=float(np.sum(pinball_loss(y - X @ beta, tau))),
        n_obs=t.size,
        n_neg=n_neg,
        n_pos=n_pos,
    )


def fit_conditional_qr(pairs: PairSet, tau: float, spec: SplineSpec) -> QuantileFit:
    """Fit the lag-adjusted conditional model on measurement pairs.

    The regressors are the spline basis at the later time, the earlier
    value, and the earlier value times the time gap.
    """
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must lie strictly in (0, 1), got {tau!r}")
    if len(pairs) < spec.n_basis + 3:
        raise ValueError(
            f"need at least n_basis+3={spec.n_basis + 3} pairs, got {len(pairs)}"
        )
    basis = design_matrix(spec, pairs.t_cur)
    # Only the spline block must be well determined by the data spread; the
    # history columns may be collinear (constant prior, constant gap), in
    # which case the optimum is non-unique and any vertex solution is
    # accepted.
    _check_design(basis, "conditional spline")
    X = np.column_stack(
        [basis, pairs.y_prev, pairs.y_prev * (pairs.t_cur - pairs.t_prev)]
    )
    y = pairs.y_cur
    beta = _solve_check_loss(X, y, tau)
    n_neg, n_pos = _sign_counts(X, y, beta, tau)
    return QuantileFit(
        tau=tau,
        spec=spec,
        spline_coefs=tuple(beta[: spec.n_basis]),
        beta0=float(beta[spec.n_basis]),
        beta1=float(beta[spec.n_basis + 1]),
        conditional=True,
        objective=float(np.sum(pinball_loss(y - X @ beta, tau))),
        n_obs=len(pairs),
        n_neg=n_neg,
        n_pos=n_pos,
    )


def predict_centile(fit: QuantileFit, t, y_prev=None, dt=None):
    """Evaluate the fitted centile: B(t) . c plus the history adjustment.

    Conditional fits require both y_prev and dt; marginal fits accept
    neither.
    """
    if fit.conditional:
        if y_prev is None or dt is None:
            raise ValueError("conditional fit requires y_prev and dt")
    elif y_prev is not None or dt is not None:
        raise ValueError("marginal fit takes no y_prev or dt")
    base = design_matrix(fit.spec, t) @ np.asarray(fit.spline_coefs)
    if fit.conditional:
        base = base + (fit.beta0 + fit.beta1 * np.asarray(dt, dtype=float)) * np.asarray(
            y_prev, dtype=float
        )
    return float(base[0]) if np.ndim(t) == 0 and base.size == 1 else base


def count_quantile_crossings(fits, step: float = 0.5) -> int:
    """Number of grid points where fitted curves violate quantile ordering.

    Curves fitted separately per tau may cross; this reports how often,
    over the spline boundary at the given step, rather than hiding it.
    """
    fits = sorted(fits, key=lambda f: f.tau)
    if len(fits) < 2:
        return 0
    lo, hi = fits[0].spec.boundary
    grid = np.arange(lo, hi + 1e-9, step)
    curves = np.stack(
        [design_matrix(f.spec, grid) @ np.asarray(f.spline_coefs) for f in fits]
    )
    return int(np.sum(np.any(np.diff(curves, axis=0) < 0.0, axis=0)))
