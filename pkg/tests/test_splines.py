import numpy as np
import pytest
from scipy.interpolate import BSpline

from centilebench.splines import SplineSpec, basis_row, design_matrix


class TestSplineSpec:
    def test_default_knots(self, spec5):
        assert spec5.knots == (16.0,) * 4 + (26.0,) + (36.0,) * 4

    def test_interior_count_derived(self):
        spec = SplineSpec(n_basis=7)
        assert len(spec.interior_knots) == 3
        assert spec.interior_knots == (21.0, 26.0, 31.0)

    def test_explicit_interior_knots(self):
        spec = SplineSpec(interior_knots=(24.0,))
        assert spec.knots[4] == 24.0

    def test_n_basis_floor(self):
        with pytest.raises(ValueError):
            SplineSpec(n_basis=3)

    def test_interior_strictly_inside(self):
        with pytest.raises(ValueError):
            SplineSpec(interior_knots=(16.0,))

    def test_wrong_interior_count(self):
        with pytest.raises(ValueError):
            SplineSpec(interior_knots=(20.0, 30.0))


class TestBasisRow:
    def test_partition_of_unity(self, spec5):
        rng = np.random.default_rng(31)
        t = 16.0 + 20.0 * rng.random(10_000)
        rows = design_matrix(spec5, t)
        assert np.max(np.abs(rows.sum(axis=1) - 1.0)) <= 1e-12
        assert rows.min() >= 0.0

    def test_clamped_left_end(self, spec5):
        assert np.allclose(basis_row(spec5, 16.0), [1, 0, 0, 0, 0], atol=1e-15)

    def test_clamped_right_end(self, spec5):
        assert np.allclose(basis_row(spec5, 36.0), [0, 0, 0, 0, 1], atol=1e-15)

    def test_local_support(self, spec5):
        rng = np.random.default_rng(7)
        t = 16.0 + 20.0 * rng.random(500)
        rows = design_matrix(spec5, t)
        assert int(np.max(np.sum(rows > 0.0, axis=1))) <= spec5.degree + 1

    def test_out_of_range(self, spec5):
        with pytest.raises(ValueError):
            basis_row(spec5, 36.5)
        with pytest.raises(ValueError):
            design_matrix(spec5, [20.0, 15.0])

    def test_matches_scipy_bspline(self, spec5):
        rng = np.random.default_rng(5)
        t = 16.0 + (36.0 - 16.0 - 1e-9) * rng.random(400)
        ours = design_matrix(spec5, t)
        knots = np.asarray(spec5.knots)
        for i in range(spec5.n_basis):
            coef = np.zeros(spec5.n_basis)
            coef[i] = 1.0
            ref = BSpline(knots, coef, spec5.degree, extrapolate=False)(t)
            assert np.max(np.abs(ours[:, i] - ref)) <= 1e-10


class TestDesignMatrix:
    def test_empty(self, spec5):
        assert design_matrix(spec5, []).shape == (0, 5)

    def test_duplicate_rows(self, spec5):
        rows = design_matrix(spec5, [24.0, 24.0])
        assert np.array_equal(rows[0], rows[1])

    def test_full_rank_for_spread_times(self, spec5):
        mat = design_matrix(spec5, [17.0, 22.0, 26.0, 30.0, 35.0])
        assert np.linalg.matrix_rank(mat) == 5

    def test_constant_function_representable(self, spec5):
        rng = np.random.default_rng(13)
        t = 16.0 + 20.0 * rng.random(300)
        values = design_matrix(spec5, t) @ np.full(5, 2.75)
        assert np.max(np.abs(values - 2.75)) <= 1e-12

    def test_cubic_in_span(self, spec5):
        # a global cubic lies in the clamped-cubic space with one interior knot
        t = np.linspace(16.0, 36.0, 201)
        target = 1.0 - 0.2 * t + 0.03 * t**2 - 0.0004 * t**3
        coefs, *_ = np.linalg.lstsq(design_matrix(spec5, t), target, rcond=None)
        assert np.max(np.abs(design_matrix(spec5, t) @ coefs - target)) <= 1e-9

    def test_intercept_only_spec(self):
        spec = SplineSpec(degree=0, n_basis=1)
        rows = design_matrix(spec, [16.0, 25.3, 36.0])
        assert np.array_equal(rows, np.ones((3, 1)))
