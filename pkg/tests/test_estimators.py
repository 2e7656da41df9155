"""Bounded scalar and simplex minimization, and the closed-form amplitude."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hkf.estimators import (
    AllNonFiniteError,
    NonFiniteStartError,
    ParamSpace,
    default_param_space,
    minimize_scalar,
    minimize_simplex,
    regularity_bounds,
    sigma_eb_closed_form,
)
from hkf.gram import TorusSpectralKernel, gram_matrix
from hkf.torus import MaternLikeParams, TorusLattice, default_truncation_limit, kl_sample


class TestMinimizeScalar:
    def test_quadratic(self):
        res = minimize_scalar(lambda t: (t - 2) ** 2, (0, 4))
        assert res.value == pytest.approx(2.0, abs=1e-4)
        assert res.hit_boundary == (False,)
        assert res.min_loss <= np.min(res.loss_curve[:, 1])

    def test_two_basins_finds_global(self):
        res = minimize_scalar(lambda t: min((t - 1) ** 2, (t - 3) ** 2 + 0.1), (0, 4))
        assert res.value == pytest.approx(1.0, abs=1e-3)

    def test_monotone_hits_boundary(self):
        res = minimize_scalar(lambda t: -t, (0, 4))
        assert res.value == pytest.approx(4.0, abs=1e-4)
        assert res.hit_boundary == (True,)

    def test_nonfinite_values_excluded_with_warning(self):
        fn = lambda t: (t - 1) ** 2 if t < 2.5 else float("inf")
        with pytest.warns(RuntimeWarning, match="non-finite"):
            res = minimize_scalar(fn, (0, 4))
        assert res.value == pytest.approx(1.0, abs=1e-3)
        assert res.n_nonfinite > 0

    def test_all_nonfinite_raises(self):
        with pytest.raises(AllNonFiniteError):
            minimize_scalar(lambda t: float("nan"), (0, 1))

    def test_deterministic(self):
        fn = lambda t: np.sin(5 * t) + 0.1 * t
        a = minimize_scalar(fn, (0, 4))
        b = minimize_scalar(fn, (0, 4))
        assert a.argmin == b.argmin and a.evaluations == b.evaluations

    @given(st.floats(0.3, 3.7))
    @settings(max_examples=25, deadline=None)
    def test_invariant_under_increasing_transform(self, center):
        base = lambda t: (t - center) ** 2
        warped = lambda t: np.expm1(2 * base(t))
        a = minimize_scalar(base, (0, 4), tol=1e-5)
        b = minimize_scalar(warped, (0, 4), tol=1e-5)
        assert a.value == pytest.approx(b.value, abs=2e-5)

    def test_tie_breaks_to_smaller_parameter(self):
        res = minimize_scalar(lambda t: 0.0, (0, 4), coarse_n=11, tol=1e-6)
        assert res.value <= 1e-6


class TestMinimizeSimplex:
    SPACE = ParamSpace(("a", "b"), ((-2, 2), (-2, 2)))

    def test_quadratic(self):
        res = minimize_simplex(lambda p: (p[0] - 1.2) ** 2 + (p[1] + 0.4) ** 2,
                               np.zeros(2), self.SPACE)
        assert np.allclose(res.argmin, [1.2, -0.4], atol=1e-3)
        assert res.hit_boundary == (False, False)

    def test_separable_matches_scalar(self):
        fn = lambda p: np.cosh(p[0] - 0.7) + (p[1] - 0.3) ** 4
        res = minimize_simplex(fn, np.zeros(2), self.SPACE)
        ra = minimize_scalar(lambda a: fn(np.array([a, 0.3])), (-2, 2))
        rb = minimize_scalar(lambda b: fn(np.array([0.7, b])), (-2, 2))
        assert abs(res.argmin[0] - ra.value) < 1e-2
        assert abs(res.argmin[1] - rb.value) < 1e-2

    def test_flat_coordinate_flagged(self):
        res = minimize_simplex(lambda p: (p[0] - 1.2) ** 2, np.zeros(2), self.SPACE)
        assert res.indeterminate == (False, True)
        assert res.restart_spread[1] > res.restart_spread[0]

    def test_nonfinite_start_rejected(self):
        with pytest.raises(NonFiniteStartError):
            minimize_simplex(lambda p: float("nan"), np.zeros(2), self.SPACE)

    def test_boundary_flag(self):
        res = minimize_simplex(lambda p: -p[0] + p[1] ** 2, np.zeros(2), self.SPACE)
        assert res.hit_boundary[0]

    def test_too_many_parameters_rejected(self):
        space = ParamSpace(tuple("abcde"), tuple((-1, 1) for _ in range(5)))
        with pytest.raises(ValueError):
            minimize_simplex(lambda p: float(p @ p), np.zeros(5), space)


class TestParamSpace:
    def test_defaults(self):
        space = default_param_space(d=1)
        assert space.names == ("s", "log_sigma", "log_tau", "theta")
        assert space.bounds[0] == regularity_bounds(1)
        assert space.bounds[2] == (-2.0, 2.0)
        assert space.bounds[3] == (0.3, 0.7)

    def test_invalid_bounds_rejected(self):
        with pytest.raises(ValueError):
            ParamSpace(("a",), ((2.0, 1.0),))
        with pytest.raises(ValueError):
            ParamSpace(("a",), ((0.0, float("inf")),))


class TestSigmaClosedForm:
    def setup_method(self):
        self.q = 5
        self.lat = TorusLattice(self.q, 1)
        self.ker = TorusSpectralKernel(params=MaternLikeParams(1.0, 0.0, 2.5), d=1)
        self.fact = gram_matrix(self.ker, self.lat)
        fld = kl_sample(MaternLikeParams(1.0, 0.0, 2.5), self.lat,
                        default_truncation_limit(self.q), 3)
        self.y = fld.values

    def test_homogeneous_in_data(self):
        a = sigma_eb_closed_form(self.y, self.fact)
        b = sigma_eb_closed_form(-3.0 * self.y, self.fact)
        assert b == pytest.approx(3.0 * a, rel=1e-12)

    def test_matches_numeric_minimizer(self):
        qf = self.fact.quad_form(self.y)
        n = self.lat.size
        loss = lambda lg: qf * np.exp(-2 * lg) + self.fact.log_det + 2 * n * lg
        res = minimize_scalar(loss, (-5, 5), tol=1e-6)
        closed = sigma_eb_closed_form(self.y, self.fact)
        assert closed == pytest.approx(np.exp(res.value), abs=1e-3)
