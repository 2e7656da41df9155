"""Elliptic discretizations, fractional powers, composite covariances,
Gaussian sampling, and the Green-function truth."""

import numpy as np
import pytest

from hkf.operators import (
    CoefficientField,
    IntervalGrid,
    OffGridSourceError,
    OperatorEigensystem,
    assemble_elliptic,
    composite_covariance,
    fractional_covariance,
    green_truth,
    sample_matrix_gaussian,
)


@pytest.fixture(scope="module")
def lap_eig():
    grid = IntervalGrid(100)
    return OperatorEigensystem.from_coefficient(CoefficientField.constant(1.0), grid)


class TestAssembleElliptic:
    def test_unit_coefficient_stencil(self):
        grid = IntervalGrid(3)
        A = assemble_elliptic(CoefficientField.constant(1.0), grid)
        want = np.array([[2, -1, 0], [-1, 2, -1], [0, -1, 2]]) / grid.h**2
        assert np.array_equal(A, want)

    def test_laplacian_eigenvalues_closed_form(self, lap_eig):
        n = 100
        h = IntervalGrid(n).h
        k = np.arange(1, n + 1)
        want = 4 / h**2 * np.sin(k * np.pi * h / 2) ** 2
        assert np.allclose(lap_eig.eigenvalues, want, rtol=1e-10)

    def test_piecewise_coefficient_spd(self):
        grid = IntervalGrid(64)
        a = CoefficientField.piecewise(1.0, 2.0, 0.37)
        A = assemble_elliptic(a, grid)
        assert np.array_equal(A, A.T)
        assert np.min(np.linalg.eigvalsh(A)) > 0

    def test_breakpoint_between_grid_points_uses_midpoints(self):
        # flux coefficients live at odd multiples of 1/16; breakpoints that do
        # not cross a midpoint give identical matrices, crossing one does not
        grid = IntervalGrid(7)
        same = [assemble_elliptic(CoefficientField.piecewise(1, 2, th), grid)
                for th in (0.20, 0.30)]
        assert np.array_equal(same[0], same[1])
        other = assemble_elliptic(CoefficientField.piecewise(1, 2, 0.34), grid)
        assert not np.array_equal(same[0], other)

    def test_eigenvector_h_orthonormality(self, lap_eig):
        G = lap_eig.grid.h * lap_eig.eigenvectors.T @ lap_eig.eigenvectors
        assert np.max(np.abs(G - np.eye(100))) < 1e-10

    def test_operator_reconstruction(self, lap_eig):
        A = assemble_elliptic(CoefficientField.constant(1.0), lap_eig.grid)
        rel = np.linalg.norm(lap_eig.operator_matrix() - A) / np.linalg.norm(A)
        assert rel < 1e-8


class TestFractionalCovariance:
    def test_power_zero_is_identity(self, lap_eig):
        C = fractional_covariance(lap_eig, 0.0)
        assert np.max(np.abs(C.matrix - np.eye(100))) < 1e-12

    def test_power_one_is_inverse(self, lap_eig):
        A = assemble_elliptic(CoefficientField.constant(1.0), lap_eig.grid)
        C = fractional_covariance(lap_eig, 1.0)
        assert np.allclose(C.matrix, np.linalg.inv(A), atol=1e-8)

    def test_semigroup_matrix_product(self, lap_eig):
        C1 = fractional_covariance(lap_eig, 1.0).matrix
        C2 = fractional_covariance(lap_eig, 2.0).matrix
        assert np.allclose(C1 @ C1, C2, rtol=1e-8)

    def test_semigroup_on_probe_vectors(self, lap_eig):
        rng = np.random.default_rng(0)
        Ca = fractional_covariance(lap_eig, 0.7).matrix
        Cb = fractional_covariance(lap_eig, 1.6).matrix
        Cab = fractional_covariance(lap_eig, 2.3).matrix
        for _ in range(5):
            v = rng.normal(size=100)
            lhs = Ca @ (Cb @ v)
            assert np.allclose(lhs, Cab @ v, rtol=1e-8)


class TestCompositeCovariance:
    def test_halfway_breakpoint_matches_product(self):
        grid = IntervalGrid(127)
        C = composite_covariance(0.5, 1.0, grid)
        A = assemble_elliptic(CoefficientField.piecewise(1, 2, 0.5), grid)
        L = assemble_elliptic(CoefficientField.constant(1.0), grid)
        want = np.linalg.inv(A) @ np.linalg.inv(L) @ np.linalg.inv(A)
        assert np.allclose(C.matrix, want, rtol=1e-10)

    def test_symmetric(self):
        C = composite_covariance(0.41, 2.0, IntervalGrid(63))
        assert np.max(np.abs(C.matrix - C.matrix.T)) < 1e-12

    def test_large_exponent_spd_small_grid(self):
        # condition grows like n^{4s+4}; verified on a grid where float64
        # still resolves the smallest eigenvalue
        grid = IntervalGrid(15)
        C = composite_covariance(0.5, 5.0, grid)
        vals = np.linalg.eigvalsh(C.matrix)
        assert vals[0] > 0
        assert np.isfinite(vals[-1] / vals[0])

    def test_exponent_monotone_traces(self):
        grid = IntervalGrid(63)
        t1 = np.trace(composite_covariance(0.5, 1.0, grid).matrix)
        t2 = np.trace(composite_covariance(0.5, 2.0, grid).matrix)
        assert t2 < t1

    def test_sqrt_factor_consistent(self):
        grid = IntervalGrid(63)
        C = composite_covariance(0.42, 1.5, grid)
        assert np.allclose(C.sqrt_factor @ C.sqrt_factor.T, C.matrix, atol=1e-12)


class TestSampling:
    def test_reproducible(self):
        C = composite_covariance(0.5, 1.0, IntervalGrid(63))
        a = sample_matrix_gaussian(C, 11)
        b = sample_matrix_gaussian(C, 11)
        assert np.array_equal(a.values, b.values)

    def test_covariance_monte_carlo(self):
        grid = IntervalGrid(31)
        eig = OperatorEigensystem.from_coefficient(CoefficientField.constant(1.0), grid)
        C = fractional_covariance(eig, 1.0)
        n = 10_000
        draws = np.array([sample_matrix_gaussian(C, s).values for s in range(n)])
        probes = [(5, 5), (5, 20), (12, 25)]
        emp = np.cov(draws.T, bias=True)
        for i, j in probes:
            se = np.sqrt((C.matrix[i, i] * C.matrix[j, j] + C.matrix[i, j] ** 2) / n)
            assert abs(emp[i, j] - C.matrix[i, j]) < 3 * se

    def test_amplitude_scaling(self):
        grid = IntervalGrid(63)
        eig = OperatorEigensystem.from_coefficient(CoefficientField.constant(1.0), grid)
        base = fractional_covariance(eig, 1.0)
        from hkf.operators import MatrixCovariance
        scaled = MatrixCovariance(grid, 4.0 * base.matrix,
                                  sqrt_factor=2.0 * base.sqrt_factor)
        a = sample_matrix_gaussian(base, 7)
        b = sample_matrix_gaussian(scaled, 7)
        assert np.allclose(b.values, 2.0 * a.values, atol=1e-14)


class TestGreenTruth:
    def test_tent_function(self):
        grid = IntervalGrid(1023)
        out = green_truth(1.0, 0.5, grid)
        x = grid.points
        tent = np.where(x <= 0.5, x / 2, (1 - x) / 2)
        assert np.max(np.abs(out.values - tent)) < 1e-10

    def test_symmetric_about_center(self):
        out = green_truth(1.3, 0.5, IntervalGrid(255))
        assert np.max(np.abs(out.values - out.values[::-1])) < 1e-11

    def test_fractional_peak_at_source(self):
        grid = IntervalGrid(1023)
        out = green_truth(1.2, 0.5, grid)
        assert grid.points[np.argmax(out.values)] == pytest.approx(0.5)

    def test_off_grid_source_rejected(self):
        with pytest.raises(OffGridSourceError):
            green_truth(1.0, 0.5 + 1e-5, IntervalGrid(255))


class TestIntervalGrid:
    def test_dyadic_observation_indices(self):
        grid = IntervalGrid(1023)
        obs = grid.dyadic_observation_indices(9)
        assert len(obs) == 511
        assert np.allclose(grid.points[obs], np.arange(1, 512) / 512)
        assert 0.5 in grid.points[obs]

    def test_dyadic_nesting(self):
        grid = IntervalGrid(1023)
        fine = grid.dyadic_observation_indices(9)
        coarse = grid.dyadic_observation_indices(8)
        assert set(coarse).issubset(set(fine))

    def test_incompatible_level_rejected(self):
        with pytest.raises(ValueError):
            IntervalGrid(1000).dyadic_observation_indices(9)
