import numpy as np
import pytest

from psifno.errors import (
    BadParameters,
    BadTruncation,
    DimensionMismatch,
    HermitianViolation,
)
from psifno.spectral import (
    Grid,
    GridField,
    SobolevIndex,
    SpectralCoeffs,
    constant_field,
    dealiased_product,
    derivative,
    dft,
    divergence,
    evaluate,
    field_from_function,
    gradient,
    helmholtz_inverse,
    hermitian_defect,
    idft,
    inverse_laplacian,
    l2_norm,
    leray_project,
    mean,
    project,
    random_field,
    resample,
    sobolev_norm,
)

from helpers import convolution_truncated, naive_dft, rel_err


def centered_index(grid, *k):
    return tuple(grid.N + ki for ki in k)


class TestGrid:
    def test_odd_points(self):
        g = Grid(2, 4)
        assert g.npoints == 9
        assert g.shape == (9, 9)
        assert g.size == 81

    @pytest.mark.parametrize("d,N", [(0, 3), (1, 0), (2, -1)])
    def test_rejects_bad_parameters(self, d, N):
        with pytest.raises(BadParameters):
            Grid(d, N)

    def test_coordinates(self):
        g = Grid(1, 2)
        x = g.axis_coordinates()
        assert np.allclose(x, 2 * np.pi * np.arange(5) / 5)


class TestDft:
    def test_constant_field(self):
        g = Grid(2, 3)
        c = dft(constant_field(g, 2.5))
        expected = np.zeros(g.shape + (1,), dtype=complex)
        expected[centered_index(g, 0, 0) + (0,)] = 2.5
        assert np.max(np.abs(c.coeffs - expected)) < 1e-14

    def test_cosine_coefficients(self):
        g = Grid(1, 3)
        f = field_from_function(g, np.cos)
        c = dft(f)
        assert abs(c.coeffs[centered_index(g, 1) + (0,)] - 0.5) < 1e-14
        assert abs(c.coeffs[centered_index(g, -1) + (0,)] - 0.5) < 1e-14
        other = c.coeffs.copy()
        other[centered_index(g, 1)] = 0
        other[centered_index(g, -1)] = 0
        assert np.max(np.abs(other)) < 1e-14

    def test_matches_naive_dft(self):
        rng = np.random.default_rng(0)
        for d, N in [(1, 5), (2, 3), (3, 2)]:
            f = random_field(Grid(d, N), rng, channels=2)
            assert rel_err(dft(f).coeffs, naive_dft(f)) < 1e-12

    @pytest.mark.parametrize("d,N", [(1, 1), (1, 7), (2, 4), (3, 2)])
    def test_round_trip(self, d, N):
        rng = np.random.default_rng(d * 100 + N)
        f = random_field(Grid(d, N), rng, channels=3)
        back = idft(dft(f))
        assert rel_err(back.values, f.values) < 1e-12

    def test_coefficient_round_trip(self):
        rng = np.random.default_rng(7)
        g = Grid(2, 5)
        from psifno.spectral import random_hermitian_coeffs

        c = random_hermitian_coeffs(g, rng)
        again = dft(idft(c))
        assert rel_err(again.coeffs, c.coeffs) < 1e-12

    def test_hermitian_symmetry_of_real_dft(self):
        rng = np.random.default_rng(1)
        f = random_field(Grid(2, 6), rng)
        c = dft(f)
        assert hermitian_defect(c.coeffs, 2) <= 1e-12 * np.max(np.abs(c.coeffs))

    def test_idft_rejects_asymmetric_coeffs(self):
        g = Grid(1, 2)
        bad = np.zeros(g.shape + (1,), dtype=complex)
        bad[centered_index(g, 1) + (0,)] = 1.0  # no conjugate partner
        with pytest.raises(HermitianViolation):
            SpectralCoeffs(g, bad, real_field=True)
        c = SpectralCoeffs(g, bad, real_field=False)
        with pytest.raises(HermitianViolation):
            idft(c)

    def test_idft_of_single_mode_pair(self):
        g = Grid(1, 3)
        coeffs = np.zeros(g.shape + (1,), dtype=complex)
        coeffs[centered_index(g, 1) + (0,)] = 0.5
        coeffs[centered_index(g, -1) + (0,)] = 0.5
        f = idft(SpectralCoeffs(g, coeffs))
        expected = np.cos(g.axis_coordinates())[:, None]
        assert rel_err(f.values, expected) < 1e-13


class TestProject:
    def test_identity_at_full_radius(self):
        rng = np.random.default_rng(2)
        f = random_field(Grid(2, 4), rng)
        c = dft(f)
        assert np.array_equal(project(c, 4).coeffs, c.coeffs)

    def test_truncates_modes(self):
        g = Grid(1, 2)
        f = field_from_function(g, lambda x: 1.0 + np.cos(x) + np.cos(2 * x))
        kept = project(dft(f), 1)
        vals = idft(kept).values
        expected = field_from_function(g, lambda x: 1.0 + np.cos(x)).values
        assert rel_err(vals, expected) < 1e-13

    def test_zero_mean_variant_kills_constants(self):
        g = Grid(2, 3)
        c = project(dft(constant_field(g, 4.0)), 3, zero_mean=True)
        assert np.max(np.abs(c.coeffs)) < 1e-14

    def test_rejects_overlarge_radius(self):
        g = Grid(1, 2)
        with pytest.raises(BadTruncation):
            project(dft(constant_field(g, 1.0)), 3)


class TestResample:
    def test_noop_at_same_radius(self):
        rng = np.random.default_rng(3)
        f = random_field(Grid(2, 3), rng)
        assert rel_err(resample(f, 3).values, f.values) < 1e-14

    def test_band_limited_upsampling_exact(self):
        g = Grid(1, 2)
        f = field_from_function(g, np.cos)
        up = resample(f, 4)
        expected = np.cos(Grid(1, 4).axis_coordinates())[:, None]
        assert rel_err(up.values, expected) < 1e-12

    def test_downsample_is_pointwise_sampling(self):
        # I_M of the interpolant == evaluating it at the coarse points.
        rng = np.random.default_rng(4)
        f = random_field(Grid(1, 6), rng)
        down = resample(f, 2)
        coarse = Grid(1, 2)
        pts = coarse.axis_coordinates()[:, None]
        assert rel_err(down.values[:, 0], evaluate(f, pts)[:, 0]) < 1e-12

    def test_projection_error_decays_spectrally(self):
        # ||(1-P_M) f||_L2 <= C M^-s for |coeffs| = (1+|k|)^-(s+d/2+0.5)
        s = 1.5
        rng = np.random.default_rng(55)
        fine = Grid(1, 256)
        from psifno.spectral import random_hermitian_coeffs

        c = random_hermitian_coeffs(
            fine, rng, decay=lambda kk: (1.0 + kk) ** -(s + 0.5 + 0.5)
        )
        f = idft(c)
        errs = []
        Ms = [8, 16, 32, 64]
        for M in Ms:
            tail = dft(f).coeffs.copy()
            kept = project(dft(f), M).coeffs
            errs.append(
                l2_norm(idft(SpectralCoeffs(fine, tail - kept, real_field=True)))
            )
        slope = -np.polyfit(np.log(Ms), np.log(errs), 1)[0]
        assert slope >= s - 0.1

    def test_interpolation_error_decays_spectrally(self):
        # |coeffs| ~ (1+|k|)^-(s+d/2+1/2) has H^s-type decay: L2 interpolation
        # error should fall at least like M^-s (slope fitted over a dyad).
        s = 2.0
        rng = np.random.default_rng(5)
        fine = Grid(1, 256)
        from psifno.spectral import random_hermitian_coeffs

        c = random_hermitian_coeffs(
            fine, rng, decay=lambda kk: (1.0 + kk) ** -(s + 0.5 + 0.5)
        )
        f = idft(c)
        errs = []
        Ms = [8, 16, 32, 64]
        for M in Ms:
            back = resample(resample(f, M), 256)
            errs.append(l2_norm(GridField(fine, back.values - f.values)))
        slopes = np.diff(np.log(errs)) / np.diff(np.log(Ms))
        assert -np.mean(slopes) >= s - 0.1


class TestDerivative:
    def test_sin_to_cos(self):
        g = Grid(1, 5)
        f = field_from_function(g, np.sin)
        df = derivative(f, 0)
        assert rel_err(df.values, np.cos(g.axis_coordinates())[:, None]) < 1e-12

    def test_constant_derivative_zero(self):
        g = Grid(2, 3)
        df = derivative(constant_field(g, 3.3), 0)
        assert np.max(np.abs(df.values)) < 1e-13

    def test_2d_mixed_mode(self):
        g = Grid(2, 3)
        f = field_from_function(g, lambda x, y: np.cos(x + y))
        df = derivative(f, 0)
        expected = field_from_function(g, lambda x, y: -np.sin(x + y))
        assert rel_err(df.values, expected.values) < 1e-12

    def test_axis_out_of_range(self):
        g = Grid(2, 2)
        with pytest.raises(DimensionMismatch):
            derivative(constant_field(g, 1.0), 2)


class TestDealiasedProduct:
    def test_cosine_squared_truncates(self):
        g = Grid(1, 1)
        f = field_from_function(g, np.cos)
        p = dealiased_product(f, f)
        # cos^2 = 1/2 + cos(2x)/2; the 2x term leaves K_1.
        assert rel_err(p.values, np.full(g.shape + (1,), 0.5)) < 1e-13

    def test_identity_factor(self):
        rng = np.random.default_rng(6)
        g = Grid(2, 4)
        v = random_field(g, rng)
        p = dealiased_product(constant_field(g, 1.0), v)
        assert rel_err(p.values, v.values) < 1e-13

    @pytest.mark.parametrize("d,N", [(1, 3), (1, 16), (2, 3), (2, 16), (3, 2)])
    def test_matches_direct_convolution(self, d, N):
        rng = np.random.default_rng(10 * d + N)
        g = Grid(d, N)
        u = random_field(g, rng)
        v = random_field(g, rng)
        got = dft(dealiased_product(u, v)).coeffs[..., 0]
        want = convolution_truncated(dft(u).coeffs[..., 0], dft(v).coeffs[..., 0], N)
        assert rel_err(got, want) < 1e-10


class TestLerayProjection:
    def test_gradient_fields_annihilated(self):
        g = Grid(2, 4)
        phi = field_from_function(g, lambda x, y: np.cos(x))
        u = GridField(g, np.concatenate([d.values for d in gradient(phi)], axis=-1))
        proj = leray_project(u)
        assert np.max(np.abs(proj.values)) < 1e-12

    def test_divergence_free_field_fixed(self):
        g = Grid(2, 4)
        u = field_from_function(g, lambda x, y: (np.sin(y), np.zeros_like(x + y)))
        proj = leray_project(u)
        assert rel_err(proj.values, u.values) < 1e-12

    def test_idempotent_and_divergence_free(self):
        rng = np.random.default_rng(8)
        g = Grid(2, 5)
        u = random_field(g, rng, channels=2)
        p1 = leray_project(u)
        p2 = leray_project(p1)
        assert rel_err(p2.values, p1.values) < 1e-12
        div = divergence(p1)
        assert np.max(np.abs(div.values)) <= 1e-10 * max(l2_norm(u), 1e-30)

    def test_3d_idempotent(self):
        rng = np.random.default_rng(9)
        g = Grid(3, 2)
        u = random_field(g, rng, channels=3)
        p1 = leray_project(u)
        assert rel_err(leray_project(p1).values, p1.values) < 1e-12
        assert np.max(np.abs(divergence(p1).values)) <= 1e-10 * l2_norm(u)


class TestSobolevNorm:
    def test_two_cos_has_norm_two_sqrt_pi_all_orders(self):
        # Oracle: coefficients +-1 at |k|=1; ((2pi)/2 * 2*(1+1))^(1/2) = 2 sqrt(pi).
        g = Grid(1, 4)
        f = field_from_function(g, lambda x: 2.0 * np.cos(x))
        for s in [0.0, 0.5, 1.0, 2.0, 3.7]:
            assert abs(sobolev_norm(f, s) - 2.0 * np.sqrt(np.pi)) < 1e-12

    def test_zero_field(self):
        assert sobolev_norm(constant_field(Grid(2, 2), 0.0), 1.0) == 0.0

    def test_parseval_matches_grid_quadrature(self):
        rng = np.random.default_rng(11)
        for d in (1, 2, 3):
            g = Grid(d, 3)
            f = random_field(g, rng)
            quad = np.sqrt((2 * np.pi) ** d / g.size * np.sum(f.values**2))
            assert abs(sobolev_norm(f, 0.0) - quad) <= 1e-10 * quad

    def test_homogeneous_ignores_mean(self):
        g = Grid(1, 3)
        f = field_from_function(g, lambda x: 5.0 + np.sin(x))
        f0 = field_from_function(g, np.sin)
        a = sobolev_norm(f, SobolevIndex(1.0, homogeneous=True))
        b = sobolev_norm(f0, SobolevIndex(1.0, homogeneous=True))
        assert abs(a - b) < 1e-12

    def test_rejects_negative_order(self):
        with pytest.raises(BadParameters):
            SobolevIndex(-1.0)


class TestInverseLaplacian:
    def test_single_modes(self):
        g = Grid(2, 3)
        f = field_from_function(g, lambda x, y: np.cos(x))
        assert rel_err(inverse_laplacian(f).values, f.values) < 1e-12
        f2 = field_from_function(g, lambda x, y: np.cos(2 * x))
        assert rel_err(inverse_laplacian(f2).values, 0.25 * f2.values) < 1e-12

    def test_inverse_pair_on_zero_mean(self):
        rng = np.random.default_rng(12)
        g = Grid(2, 4)
        f = random_field(g, rng)
        u = inverse_laplacian(f)
        lap = sum(derivative(derivative(u, ax), ax).values for ax in range(2))
        centered = f.values - mean(f)
        assert rel_err(-lap, centered) < 1e-12


class TestHelmholtzInverse:
    def test_alpha_zero_is_identity(self):
        rng = np.random.default_rng(13)
        f = random_field(Grid(2, 4), rng)
        assert rel_err(helmholtz_inverse(f, 0.0).values, f.values) < 1e-13

    def test_single_mode(self):
        g = Grid(1, 2)
        f = field_from_function(g, np.cos)
        assert rel_err(helmholtz_inverse(f, 1.0).values, 0.5 * f.values) < 1e-13

    def test_contraction(self):
        rng = np.random.default_rng(14)
        f = random_field(Grid(2, 5), rng)
        assert l2_norm(helmholtz_inverse(f, 0.7)) <= l2_norm(f) + 1e-12

    def test_rejects_negative_alpha(self):
        with pytest.raises(BadParameters):
            helmholtz_inverse(constant_field(Grid(1, 1), 1.0), -0.1)


class TestEvaluate:
    def test_off_grid_cosine(self):
        g = Grid(1, 3)
        f = field_from_function(g, np.cos)
        pts = np.array([[0.3], [1.1], [4.5]])
        assert rel_err(evaluate(f, pts)[:, 0], np.cos(pts[:, 0])) < 1e-12

    def test_on_grid_matches_values(self):
        rng = np.random.default_rng(15)
        g = Grid(2, 3)
        f = random_field(g, rng)
        x = g.axis_coordinates()
        pts = np.array([[x[1], x[2]], [x[0], x[4]]])
        got = evaluate(f, pts)[:, 0]
        assert rel_err(got, [f.values[1, 2, 0], f.values[0, 4, 0]]) < 1e-12


class TestRoundTripSweep:
    @pytest.mark.parametrize("d", [1, 2, 3])
    def test_all_resolutions(self, d):
        rng = np.random.default_rng(16)
        for N in range(1, 17):
            if (2 * N + 1) ** d > 40_000:
                continue
            f = random_field(Grid(d, N), rng)
            assert rel_err(idft(dft(f)).values, f.values) < 1e-12
