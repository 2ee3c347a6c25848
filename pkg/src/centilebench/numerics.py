"""Shared numerical primitives.

Standard-normal distribution functions, the check (pinball) loss used by
quantile regression, and splittable deterministic random-number streams.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

__all__ = [
    "std_normal_cdf",
    "std_normal_quantile",
    "pinball_loss",
    "RngStream",
    "draw_uniform",
    "draw_normal",
    "PRNG_NAME",
]

# Generator recorded in all output metadata; see RngStream.
PRNG_NAME = "numpy PCG64 seeded via SeedSequence(master_seed, spawn_key=path)"

_SQRT2 = np.sqrt(2.0)

# Uniform draws live on the grid k/2^53 in [0, 1); an exact zero (probability
# 2^-53) is nudged up so the inverse-CDF transform stays finite.
_MIN_UNIFORM = 2.0 ** -55


def _as_float_array(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite, got {x!r}")
    return arr


def std_normal_cdf(z):
    """Standard normal CDF, accurate to well below 1e-12 absolute error.

    Accepts a scalar or array; non-finite input raises ValueError.
    """
    arr = _as_float_array(z, "z")
    out = 0.5 * erfc(-arr / _SQRT2)
    return float(out) if np.isscalar(z) or arr.ndim == 0 else out


# Coefficients of the AS 241 (PPND16) rational approximations to the
# standard normal quantile function; max absolute error below 1e-15.
_P_CENTRAL = (
    3.3871328727963666080e0, 1.3314166789178437745e2, 1.9715909503065514427e3,
    1.3731693765509461125e4, 4.5921953931549871457e4, 6.7265770927008700853e4,
    3.3430575583588128105e4, 2.5090809287301226727e3,
)
_Q_CENTRAL = (
    1.0, 4.2313330701600911252e1, 6.8718700749205790830e2,
    5.3941960214247511077e3, 2.1213794301586595867e4, 3.9307895800092710610e4,
    2.8729085735721942674e4, 5.2264952788528545610e3,
)
_P_MIDTAIL = (
    1.42343711074968357734e0, 4.63033784615654529590e0, 5.76949722146069140550e0,
    3.64784832476320460504e0, 1.27045825245236838258e0, 2.41780725177450611770e-1,
    2.27238449892691845833e-2, 7.74545014278341407640e-4,
)
_Q_MIDTAIL = (
    1.0, 2.05319162663775882187e0, 1.67638483018380384940e0,
    6.89767334985100004550e-1, 1.48103976427480074590e-1, 1.51986665636164571966e-2,
    5.47593808499534494600e-4, 1.05075007164441684324e-9,
)
_P_FARTAIL = (
    6.65790464350110377720e0, 5.46378491116411436990e0, 1.78482653991729133580e0,
    2.96560571828504891230e-1, 2.65321895265761230930e-2, 1.24266094738807843860e-3,
    2.71155556874348757815e-5, 2.01033439929228813265e-7,
)
_Q_FARTAIL = (
    1.0, 5.99832206555887937690e-1, 1.36929880922735805310e-1,
    1.48753612908506148525e-2, 7.86869131145613259100e-4, 1.84631831751005468180e-5,
    1.42151175831644588870e-7, 2.04426310338993978564e-15,
)


def _ratpoly(p_coefs, q_coefs, r: np.ndarray) -> np.ndarray:
    num = np.full_like(r, p_coefs[-1])
    for c in p_coefs[-2::-1]:
        num = num * r + c
    den = np.full_like(r, q_coefs[-1])
    for c in q_coefs[-2::-1]:
        den = den * r + c
    return num / den


def std_normal_quantile(p):
    """Standard normal quantile function (inverse CDF).

    Uses the AS 241 rational approximations (Wichura's PPND16), whose stated
    maximum error is far below the 1e-9 contract. Accepts a scalar or array;
    every element must lie strictly inside (0, 1).
    """
    arr = np.asarray(p, dtype=float)
    with np.errstate(invalid="ignore"):
        bad = ~((arr > 0.0) & (arr < 1.0))
    if np.any(bad):
        raise ValueError(f"probability must lie strictly in (0, 1), got {p!r}")
    scalar = np.isscalar(p) or arr.ndim == 0
    arr = np.atleast_1d(arr)

    q = arr - 0.5
    out = np.empty_like(arr)

    central = np.abs(q) <= 0.425
    if np.any(central):
        r = 0.180625 - q[central] * q[central]
        out[central] = q[central] * _ratpoly(_P_CENTRAL, _Q_CENTRAL, r)

    tail = ~central
    if np.any(tail):
        p_tail = np.where(q[tail] < 0.0, arr[tail], 1.0 - arr[tail])
        r = np.sqrt(-np.log(p_tail))
        val = np.empty_like(r)
        mid = r <= 5.0
        val[mid] = _ratpoly(_P_MIDTAIL, _Q_MIDTAIL, r[mid] - 1.6)
        val[~mid] = _ratpoly(_P_FARTAIL, _Q_FARTAIL, r[~mid] - 5.0)
        out[tail] = np.where(q[tail] < 0.0, -val, val)

    return float(out[0]) if scalar else out


def pinball_loss(residual, tau: float):
    """Check loss residual * (tau - 1{residual < 0}); nonnegative for tau in (0, 1)."""
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must lie strictly in (0, 1), got {tau!r}")
    r = np.asarray(residual, dtype=float)
    out = r * (tau - (r < 0.0))
    return float(out) if np.isscalar(residual) or out.ndim == 0 else out


@dataclass(frozen=True)
class RngStream:
    """Immutable descriptor of a deterministic random-number stream.

    The same (master_seed, path) always materializes the same sample
    sequence; distinct paths give statistically independent streams. Path
    mixing is delegated to numpy's SeedSequence hash, and draws come from
    PCG64, so behaviour is reproducible across platforms and parallelism.
    """

    master_seed: int
    path: tuple[int, ...] = ()

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < 2 ** 64:
            raise ValueError("master_seed must be an unsigned 64-bit integer")
        object.__setattr__(self, "path", tuple(int(k) for k in self.path))

    def child(self, *indices: int) -> "RngStream":
        """Sub-stream descriptor with the given indices appended to the path."""
        return RngStream(self.master_seed, self.path + tuple(indices))

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this stream's sequence."""
        seq = np.random.SeedSequence(self.master_seed, spawn_key=self.path)
        return np.random.Generator(np.random.PCG64(seq))


def draw_uniform(stream: RngStream, size=None):
    """Uniform [0, 1) draws from the start of the stream's sequence.

    Calling twice with the same descriptor replays the same values; take a
    child stream (or a larger size) for fresh variates.
    """
    return stream.generator().random(size)


def draw_normal(stream: RngStream, size=None):
    """Standard normal draws: the inverse-CDF transform of draw_uniform.

    Normal variates are a pure function of the uniform sequence, which makes
    them directly comparable across implementations of the same stream.
    """
    u = np.maximum(stream.generator().random(size), _MIN_UNIFORM)
    return std_normal_quantile(u)
