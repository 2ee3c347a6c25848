"""Clamped cubic B-spline basis over gestational age.

All three estimators express their smooth age terms in this basis. The knot
vector is open uniform: boundary knots repeated degree+1 times and the
remaining interior knots spread evenly (for the default five cubic basis
functions that is a single interior knot at the window midpoint, week 26).
The upper boundary is included, so measurements at the right endpoint
evaluate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["SplineSpec", "basis_row", "design_matrix"]


@dataclass(frozen=True)
class SplineSpec:
    """B-spline basis specification.

    ``interior_knots`` may be given explicitly; by default the
    n_basis - degree - 1 interior knots are equally spaced strictly inside
    the boundary.
    """

    degree: int = 3
    boundary: tuple[float, float] = (16.0, 36.0)
    n_basis: int = 5
    interior_knots: tuple[float, ...] | None = None

    def __post_init__(self):
        lo, hi = self.boundary
        if not lo < hi:
            raise ValueError(f"boundary must be increasing, got {self.boundary!r}")
        if self.degree < 0:
            raise ValueError("degree must be nonnegative")
        if self.n_basis < self.degree + 1:
            raise ValueError(
                f"n_basis={self.n_basis} needs at least degree+1={self.degree + 1} "
                "basis functions"
            )
        n_interior = self.n_basis - self.degree - 1
        if self.interior_knots is None:
            interior = tuple(np.linspace(lo, hi, n_interior + 2)[1:-1])
        else:
            interior = tuple(float(k) for k in self.interior_knots)
            if len(interior) != n_interior:
                raise ValueError(
                    f"expected {n_interior} interior knots, got {len(interior)}"
                )
        if any(b < a for a, b in zip(interior, interior[1:])):
            raise ValueError("interior knots must be nondecreasing")
        if any(not lo < k < hi for k in interior):
            raise ValueError("interior knots must lie strictly inside the boundary")
        object.__setattr__(self, "interior_knots", interior)

    @property
    def knots(self) -> tuple[float, ...]:
        """Full knot vector with boundary knots at multiplicity degree+1."""
        lo, hi = self.boundary
        return (
            (lo,) * (self.degree + 1) + self.interior_knots + (hi,) * (self.degree + 1)
        )


def design_matrix(spec: SplineSpec, times) -> np.ndarray:
    """Basis matrix with one row per time, by Cox-de Boor recursion.

    Rows are nonnegative, sum to one, and have at most degree+1 nonzero
    entries. Times outside the boundary raise ValueError.
    """
    t = np.asarray(times, dtype=float)
    if t.ndim == 0:
        t = t[np.newaxis]
    lo, hi = spec.boundary
    if t.size and (t.min() < lo or t.max() > hi):
        raise ValueError(
            f"times outside the spline boundary [{lo}, {hi}]: "
            f"min={t.min() if t.size else None}, max={t.max() if t.size else None}"
        )
    knots = np.asarray(spec.knots)
    n_spans = len(knots) - 1

    # Degree-0 seed: indicator of the half-open knot span, except the last
    # nonempty span which also owns the upper boundary.
    last_nonempty = max(j for j in range(n_spans) if knots[j] < knots[j + 1])
    basis = np.zeros((t.size, n_spans))
    for j in range(n_spans):
        if j == last_nonempty:
            basis[:, j] = (knots[j] <= t) & (t <= knots[j + 1])
        else:
            basis[:, j] = (knots[j] <= t) & (t < knots[j + 1])

    for d in range(1, spec.degree + 1):
        nxt = np.zeros((t.size, n_spans - d))
        for j in range(n_spans - d):
            den_left = knots[j + d] - knots[j]
            den_right = knots[j + d + 1] - knots[j + 1]
            term = np.zeros(t.size)
            if den_left > 0.0:
                term += (t - knots[j]) / den_left * basis[:, j]
            if den_right > 0.0:
                term += (knots[j + d + 1] - t) / den_right * basis[:, j + 1]
            nxt[:, j] = term
        basis = nxt

    return basis[:, : spec.n_basis]


def basis_row(spec: SplineSpec, t: float) -> np.ndarray:
    """Basis values at a single gestational age."""
    return design_matrix(spec, [t])[0]
