"""Frequency boxes, periodized symbols, Mercer sums, sampling, aliasing."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hkf.torus import (
    DivergentExponentError,
    FrequencyBox,
    GridField,
    InsufficientTruncationError,
    MaternLikeParams,
    TorusLattice,
    alias_representative,
    default_truncation_limit,
    dft_alias,
    frequency_box,
    kl_sample,
    mercer_kernel,
    mercer_tail_bound,
    periodized_eigenvalues,
    periodized_symbol,
    periodized_symbol_box,
)

PI2 = np.pi**2


class TestFrequencyBox:
    def test_q1_d1_members(self):
        assert frequency_box(1, 1).members[:, 0].tolist() == [-1, 0]

    def test_q2_d1_members(self):
        assert frequency_box(2, 1).members[:, 0].tolist() == [-2, -1, 0, 1]

    def test_q1_d2_members(self):
        box = frequency_box(1, 2)
        assert box.members.shape == (4, 2)
        assert set(map(tuple, box.members)) == {(-1, -1), (-1, 0), (0, -1), (0, 0)}

    @pytest.mark.parametrize("q,d", [(0, 1), (3, 1), (2, 2), (1, 3)])
    def test_cardinality_and_zero(self, q, d):
        box = frequency_box(q, d)
        assert box.members.shape == (2 ** (q * d), d)
        assert any(np.all(m == 0) for m in box.members)

    @given(st.integers(-200, 200), st.integers(0, 8))
    @settings(max_examples=40, deadline=None)
    def test_alias_cell_closure(self, m, q):
        r = alias_representative(m, q)[0, 0]
        half = (1 << q) // 2
        lo = -half if q >= 1 else 0
        assert lo <= r <= lo + (1 << q) - 1
        assert (m - r) % (1 << q) == 0
        # reduction is idempotent
        assert alias_representative(r, q)[0, 0] == r

    def test_lattice_nested(self):
        fine = TorusLattice(4, 1)
        coarse_pts = fine.points[fine.coarsen_indices()]
        assert np.allclose(coarse_pts, TorusLattice(3, 1).points)

    def test_lattice_d2_count(self):
        lat = TorusLattice(2, 2)
        assert lat.points.shape == (16, 2)
        assert len(lat.coarsen_indices()) == 4


class TestPeriodizedSymbol:
    def test_zero_mode_closed_form(self):
        # sum_{b != 0} (8b)^{-2} = 2 zeta(2) / 64
        assert periodized_symbol(0, 3, 1.0) == pytest.approx(2**-6 * PI2 / 3, rel=1e-12)

    def test_nonzero_mode_closed_form(self):
        want = 2**-6 * PI2 / np.sin(np.pi / 8) ** 2
        assert periodized_symbol(1, 3, 1.0) == pytest.approx(want, rel=1e-12)

    def test_periodic_in_m(self):
        assert periodized_symbol(9, 3, 1.7) == periodized_symbol(1, 3, 1.7)

    @given(st.integers(-100, 100), st.integers(1, 8),
           st.floats(0.6, 5.0, allow_nan=False))
    @settings(max_examples=40, deadline=None)
    def test_shift_periodicity_exact(self, m, q, t):
        assert periodized_symbol(m + (1 << q), q, t) == periodized_symbol(m, q, t)

    @pytest.mark.parametrize("q", range(1, 11))
    def test_cotangent_closed_form(self, q):
        ms = np.arange(-(1 << (q - 1)), 1 << (q - 1))
        ms = ms[ms != 0]
        got = periodized_symbol(ms, q, 1.0)
        want = 2.0 ** (-2 * q) * PI2 / np.sin(np.pi * ms * 2.0**-q) ** 2
        assert np.allclose(got, want, rtol=1e-10)

    def test_quartic_closed_form(self):
        # sum_n (x+n)^{-4} = pi^4 (1 + 2 cos^2(pi x)) / (3 sin^4(pi x))
        q = 5
        ms = np.arange(1, 16)
        x = ms * 2.0**-q
        got = periodized_symbol(ms, q, 2.0)
        want = 2.0 ** (-4 * q) * np.pi**4 * (1 + 2 * np.cos(np.pi * x) ** 2) \
            / (3 * np.sin(np.pi * x) ** 4)
        assert np.allclose(got, want, rtol=1e-10)

    def test_divergent_exponent_raises(self):
        with pytest.raises(DivergentExponentError):
            periodized_symbol(1, 3, 0.5)
        with pytest.raises(DivergentExponentError):
            periodized_symbol(np.array([1, 1]), 3, 1.0, d=2)

    def test_bracket_properties(self):
        # M(0)/2^{-2qt} is q-independent; M(m)/|m|^{-2t} in [1, 1+C(|m|/2^q)^{2t}];
        # (M(m)-|m|^{-2t})/2^{-2qt} lies in a q-independent bracket
        t = 1.3
        ratios0, ratios_gap = [], []
        for q in range(2, 9):
            M = periodized_symbol_box(q, t)
            m = FrequencyBox(q, 1).members[:, 0]
            ratios0.append(M[m == 0][0] / 2.0 ** (-2 * q * t))
            nz = m != 0
            rel = M[nz] / np.abs(m[nz]).astype(float) ** (-2 * t)
            assert np.all(rel >= 1.0)
            assert np.all(rel <= 1.0 + 9.0 * (np.abs(m[nz]) / 2.0**q) ** (2 * t))
            gap = (M[nz] - np.abs(m[nz]).astype(float) ** (-2 * t)) / 2.0 ** (-2 * q * t)
            ratios_gap.extend([gap.min(), gap.max()])
        assert np.ptp(ratios0) < 1e-10  # exactly 2 zeta(2t) for every q
        assert 0.5 < min(ratios_gap) and max(ratios_gap) < 10.0

    def test_d2_symbol_against_wide_reference(self):
        # independent reference: exhaustive sum to |beta| <= 4000 plus the
        # analytic integral over the remaining far field
        from scipy.integrate import quad
        t = 1.5
        m = np.array([3, -2])
        got = periodized_symbol(m, 3, t, d=2, tol=1e-9)
        B = 4000
        b = np.arange(-B, B + 1)
        bx, by = np.meshgrid(b, b, indexing="ij")
        u = (m[0] / 8 + bx) ** 2 + (m[1] / 8 + by) ** 2
        ang, _ = quad(lambda th: np.cos(th) ** (2 * t - 2), 0, np.pi / 4)
        tail = (B + 0.5) ** (2 - 2 * t) / (2 * t - 2) * 8 * ang
        want = (np.sum(u ** (-t)) + tail) * 2.0 ** (-6 * t)
        assert got == pytest.approx(want, rel=1e-9)

    def test_d2_symbol_periodicity(self):
        m = np.array([3, -2])
        shifted = m + np.array([8, -16])
        a = periodized_symbol(m, 3, 1.5, d=2)
        b = periodized_symbol(shifted, 3, 1.5, d=2)
        assert a == b

    def test_matern_periodization_tau0_reduces_to_power(self):
        p = MaternLikeParams(2.0, 0.0, 1.3)
        got = periodized_eigenvalues(3, p)
        want = 4.0 * (4 * PI2) ** -1.3 * periodized_symbol_box(3, 1.3)
        assert np.allclose(got, want, rtol=1e-14)

    def test_matern_periodization_tau_positive(self):
        p = MaternLikeParams(1.0, 2.5, 1.2)
        got = periodized_eigenvalues(3, p)
        beta = np.arange(-200000, 200001)
        for i, m in enumerate(FrequencyBox(3, 1).members[:, 0]):
            u = m + 8.0 * beta
            if m == 0:
                u = u[u != 0]
            brute = np.sum((4 * PI2 * u**2 + p.tau**2) ** -1.2)
            assert got[i] == pytest.approx(brute, rel=1e-7)


class TestMercerKernel:
    def test_diagonal_closed_form(self):
        p = MaternLikeParams(1.0, 0.0, 1.0)
        k = mercer_kernel(0.3, 0.3, p, 200000, tol=1e-5)
        assert k == pytest.approx(1 / 12, abs=3e-6)

    def test_antipodal_closed_form(self):
        p = MaternLikeParams(1.0, 0.0, 1.0)
        k = mercer_kernel(0.75, 0.25, p, 200000, tol=1e-5)
        assert k == pytest.approx(-1 / 24, abs=3e-6)

    def test_stationarity_under_shift(self):
        p = MaternLikeParams(1.3, 0.7, 1.4)
        h = 0.1234567
        a = mercer_kernel(0.2 + h, 0.5 + h, p, 4096, tol=1e-8)
        b = mercer_kernel(0.2, 0.5, p, 4096, tol=1e-8)
        assert abs(a - b) <= 1e-12

    def test_insufficient_truncation_raises(self):
        p = MaternLikeParams(1.0, 0.0, 0.8)
        with pytest.raises(InsufficientTruncationError):
            mercer_kernel(0.0, 0.0, p, 16, tol=1e-10)

    def test_tail_bound_decreases(self):
        p = MaternLikeParams(1.0, 0.0, 1.5)
        bounds = [mercer_tail_bound(p, limit, 1) for limit in (8, 64, 512)]
        assert bounds[0] > bounds[1] > bounds[2] > 0

    @pytest.mark.parametrize("q", [2, 4, 6])
    def test_lattice_gram_positive_definite(self, q):
        from hkf.gram import TorusSpectralKernel
        ker = TorusSpectralKernel(params=MaternLikeParams(1.0, 0.0, 1.5), d=1)
        lat = TorusLattice(q, 1)
        K = ker.pairwise(lat, lat)
        assert np.min(np.linalg.eigvalsh(K)) > 0


class TestKlSample:
    def test_reproducible(self):
        p = MaternLikeParams(1.0, 0.0, 1.0)
        lat = TorusLattice(3, 1)
        a = kl_sample(p, lat, 64, 7)
        b = kl_sample(p, lat, 64, 7)
        assert np.array_equal(a.values, b.values)

    def test_amplitude_linearity(self):
        lat = TorusLattice(3, 1)
        a = kl_sample(MaternLikeParams(1.0, 0.0, 1.0), lat, 64, 7)
        b = kl_sample(MaternLikeParams(3.0, 0.0, 1.0), lat, 64, 7)
        assert np.allclose(b.values, 3 * a.values, atol=1e-13)

    def test_mean_zero_invariant(self):
        lat = TorusLattice(4, 1)
        fld = kl_sample(MaternLikeParams(1.0, 0.5, 1.2), lat, 128, 11)
        assert abs(fld.values.mean()) < 1e-12

    def test_pointwise_variance_matches_mercer(self):
        # smaller companion of the acceptance Monte Carlo check
        p = MaternLikeParams(1.0, 0.0, 1.0)
        lat = TorusLattice(3, 1)
        n = 2000
        vals = np.array([kl_sample(p, lat, 64, s).values for s in range(n)])
        k0 = mercer_kernel(0.0, 0.0, p, 64, tol=1e-2)
        se = k0 * np.sqrt(2.0 / n)
        assert np.all(np.abs(vals.var(axis=0) - k0) < 4 * se)

    def test_d2_sample_variance(self):
        p = MaternLikeParams(1.0, 0.0, 1.5)
        lat = TorusLattice(2, 2)
        n = 1500
        vals = np.array([kl_sample(p, lat, 8, s).values for s in range(n)])
        k0 = mercer_kernel(np.zeros(2), np.zeros(2), p, 8, d=2, tol=1.0)
        se = k0 * np.sqrt(2.0 / n)
        assert np.all(np.abs(vals.var(axis=0) - k0) < 5 * se)


class TestDftAlias:
    def test_single_mode(self):
        lat = TorusLattice(3, 1)
        fld = GridField(lat, np.cos(2 * np.pi * lat.points[:, 0]))
        sf = dft_alias(fld)
        assert sf.coeff_at(1) == pytest.approx(0.5, abs=1e-14)
        assert sf.coeff_at(-1) == pytest.approx(0.5, abs=1e-14)
        assert abs(sf.coeff_at(2)) < 1e-14

    def test_aliasing_folds_high_mode(self):
        lat = TorusLattice(3, 1)
        fld = GridField(lat, np.cos(2 * np.pi * 9 * lat.points[:, 0]))
        sf = dft_alias(fld)
        # 9 = 1 + 8: mass lands on m = +-1, verified against direct summation
        direct = np.mean(fld.values * np.exp(-2j * np.pi * lat.points[:, 0]))
        assert sf.coeff_at(1) == pytest.approx(direct, abs=1e-14)
        assert sf.coeff_at(1) == pytest.approx(0.5, abs=1e-12)

    def test_zero_field(self):
        lat = TorusLattice(2, 1)
        assert np.all(dft_alias(GridField(lat, np.zeros(4))).coeffs == 0)

    def test_hermitian_for_real_field(self):
        lat = TorusLattice(3, 1)
        fld = kl_sample(MaternLikeParams(1.0, 0.0, 1.5), lat, 32, 5)
        assert dft_alias(fld).hermitian_defect() < 1e-14

    @pytest.mark.parametrize("seed", [0, 1])
    def test_roundtrip_recovers_periodization(self, seed):
        # evaluate a truncated series on the grid; its DFT equals the folded
        # coefficients of the input
        rng = np.random.default_rng(seed)
        q, limit = 3, 20
        lat = TorusLattice(q, 1)
        ms = np.arange(1, limit + 1)
        c = rng.normal(size=limit) + 1j * rng.normal(size=limit)
        x = lat.points[:, 0]
        vals = np.zeros_like(x)
        for m, cm in zip(ms, c):
            vals += 2 * np.real(cm * np.exp(2j * np.pi * m * x))
        sf = dft_alias(GridField(lat, vals))
        for mbar in range(-4, 4):
            folded = 0.0
            for m, cm in zip(ms, c):
                if (m - mbar) % 8 == 0:
                    folded += cm
                if (-m - mbar) % 8 == 0:
                    folded += np.conj(cm)
            assert sf.coeff_at(mbar) == pytest.approx(folded, abs=1e-12)

    def test_fine_sample_restriction_aliases(self):
        # dft of a restriction equals the fold of the fine-level dft
        from hkf.oracle import fold_coeffs
        lat = TorusLattice(5, 1)
        fld = kl_sample(MaternLikeParams(1.0, 0.0, 2.0),
                        lat, default_truncation_limit(5), 3)
        coarse = fld.restrict(lat.coarsen_indices(), lat.coarse())
        direct = dft_alias(coarse)
        folded = fold_coeffs(dft_alias(fld), 5)
        assert np.allclose(direct.coeffs, folded.coeffs, atol=1e-14)


class TestParams:
    @given(st.floats(0.7, 4.0), st.floats(0.0, 5.0))
    @settings(max_examples=25, deadline=None)
    def test_eigenvalue_map_positive_nonincreasing(self, s, tau):
        p = MaternLikeParams(1.0, tau, s)
        lam = p.eigenvalue(np.arange(1, 40))
        assert np.all(lam > 0)
        assert np.all(np.diff(lam) <= 0)

    def test_invalid_params_raise(self):
        with pytest.raises(ValueError):
            MaternLikeParams(-1.0, 0.0, 1.0)
        with pytest.raises(ValueError):
            MaternLikeParams(1.0, -0.1, 1.0)
