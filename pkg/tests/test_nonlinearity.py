import numpy as np
import pytest

from ctista.errors import DivergenceError
from ctista.nonlinearity import (
    analytic_map,
    central_wirtinger,
    clip_map,
    grad_lms,
    gradient_descent,
    identity_map,
    lms_objective,
    wirtinger_fd,
)
from ctista.numerics import rng_stream, sample_cgaussian


def random_points(rng, count, scale=1.5):
    return sample_cgaussian(0.0, scale**2, rng, count)


class TestWirtingerFd:
    def test_identity_derivatives(self):
        rng = rng_stream(11, 0)
        z = random_points(rng, 100)
        f = identity_map()
        fd_z, fd_zc = wirtinger_fd(f, z)
        assert np.allclose(fd_z, 1.0, atol=1e-5)
        assert np.allclose(fd_zc, 0.0, atol=1e-5)

    def test_analytic_square_map(self):
        # f(z) = z^2 has df/dz = 2z and df/dz* = 0
        f = analytic_map("square", lambda z: z**2, lambda z: 2 * z)
        rng = rng_stream(11, 1)
        z = random_points(rng, 100)
        fd_z, fd_zc = wirtinger_fd(f, z)
        assert np.max(np.abs(fd_z - 2 * z) / np.maximum(1, np.abs(2 * z))) < 1e-5
        assert np.allclose(fd_zc, 0.0, atol=1e-5)

    def test_conjugate_pair_identity(self):
        # d(f*)/dz* = conj(df/dz) for every componentwise map
        f = clip_map(1.0)
        rng = rng_stream(11, 2)
        z = random_points(rng, 50)
        z = z[f.nonsmooth_distance(z) > 1e-2]
        assert np.allclose(f.d_fconj_dzc(z), np.conj(f.d_f_dz(z)), atol=1e-12)

    def test_real_objective_gradient_direction(self):
        # g(z) = |z|^2 has dg/dz* = z: central differences on a real scalar
        g_z, g_zc = central_wirtinger(lambda z: np.abs(z) ** 2, 0.7 - 0.2j, 1e-6)
        assert np.isclose(g_zc, 0.7 - 0.2j, atol=1e-6)
        assert np.isclose(g_z, 0.7 + 0.2j, atol=1e-6)


class TestClipMap:
    def test_interior_is_identity(self):
        f = clip_map(2.0)
        z = np.array([0.3 + 0.4j, -1.0j, 0.0])
        assert np.allclose(f.eval(z), z)
        assert np.allclose(f.d_f_dz(z), 1.0)
        assert np.allclose(f.d_f_dzc(z), 0.0)

    def test_exterior_magnitude_clamped(self):
        f = clip_map(1.2)
        rng = rng_stream(11, 3)
        z = 3.0 * random_points(rng, 64)
        out = f.eval(z[np.abs(z) > 1.2])
        assert np.allclose(np.abs(out), 1.2, atol=1e-12)
        # phase preserved
        inp = z[np.abs(z) > 1.2]
        assert np.allclose(np.angle(out), np.angle(inp), atol=1e-12)

    def test_exterior_first_derivatives_frozen_oracle(self):
        # high-precision oracle values at z0 = 1.5 exp(0.7i), alpha = 1.2
        f = clip_map(1.2)
        z0 = 1.5 * np.exp(0.7j)
        assert np.isclose(f.d_f_dz(z0), 0.4, atol=1e-12)
        assert np.isclose(
            f.d_f_dzc(z0), -0.067986857160096375 - 0.394179891995384072j, atol=1e-12
        )

    def test_exterior_second_derivatives_frozen_oracle(self):
        f = clip_map(1.2)
        z0 = 1.5 * np.exp(0.7j)
        assert np.isclose(
            f.d2_dz2(z0), -0.101978958304598457 + 0.085895691631692140j, atol=1e-12
        )
        assert np.isclose(
            f.d2_dzdzc(z0), -0.101978958304598457 - 0.085895691631692140j, atol=1e-12
        )
        assert np.isclose(
            f.d2_dzc2(z0), -0.201938441839942981 + 0.345283746659549508j, atol=1e-12
        )

    def test_derivatives_match_fd_away_from_circle(self):
        rng = rng_stream(11, 4)
        for alpha in (0.5, 1.0, 2.3):
            f = clip_map(alpha)
            z = random_points(rng, 100)
            z = z[f.nonsmooth_distance(z) > 1e-2]
            fd_z, fd_zc = wirtinger_fd(f, z)
            scale = np.maximum(1.0, np.abs(fd_z))
            assert np.max(np.abs(fd_z - f.d_f_dz(z)) / scale) < 1e-5
            assert np.max(np.abs(fd_zc - f.d_f_dzc(z)) / scale) < 1e-5

    def test_second_derivatives_match_fd(self):
        # FD of the closed-form first derivatives confirms the second ones
        f = clip_map(1.1)
        rng = rng_stream(11, 5)
        z = random_points(rng, 60)
        z = z[np.abs(z) > 1.2]
        h = 1e-6
        d_dz_x = (f.d_f_dzc(z + h) - f.d_f_dzc(z - h)) / (2 * h)
        d_dz_y = (f.d_f_dzc(z + 1j * h) - f.d_f_dzc(z - 1j * h)) / (2 * h)
        h11_fd = (d_dz_x - 1j * d_dz_y) / 2  # d/dz of df/dz*
        h02_fd = (d_dz_x + 1j * d_dz_y) / 2
        assert np.allclose(h11_fd, f.d2_dzdzc(z), atol=1e-6)
        assert np.allclose(h02_fd, f.d2_dzc2(z), atol=1e-6)

    def test_boundary_uses_interior_branch(self):
        f = clip_map(1.0)
        z = np.exp(0.3j)  # exactly on the circle
        assert np.isclose(f.eval(z), z)
        assert np.isclose(f.d_f_dz(z), 1.0)

    def test_invalid_level_rejected(self):
        with pytest.raises(ValueError):
            clip_map(0.0)
        with pytest.raises(ValueError):
            clip_map(-1.0)


class TestLmsGradient:
    def _instance(self, rng, f, m=6, n=4):
        a = sample_cgaussian(0.0, 1.0, rng, m * n).reshape(m, n)
        x_true = sample_cgaussian(0.0, 1.0, rng, n)
        y = f.eval(a @ x_true) + sample_cgaussian(0.0, 0.01, rng, m)
        x = sample_cgaussian(0.0, 1.0, rng, n)
        return a, y, x

    def test_directional_derivative_falloff(self):
        # grad_lms returns half the Wirtinger derivative dg/dx*, so the
        # derivative of g(x + eps d) along d is 4 Re<grad, d>; the one-sided
        # remainder must fall off as eps^2, and a central difference (which
        # cancels the quadratic term) must match the slope to 1e-4 relative
        rng = rng_stream(11, 6)
        for trial in range(20):
            f = clip_map(1.0) if trial % 2 else identity_map()
            a, y, x = self._instance(rng, f)
            grad = grad_lms(a, y, f, x)
            d = sample_cgaussian(0.0, 1.0, rng, x.size)
            slope = 4 * np.sum((np.conj(grad) * d).real)
            abs_errs = []
            for eps in (1e-3, 1e-4):
                diff = lms_objective(a, y, f, x + eps * d) - lms_objective(a, y, f, x)
                abs_errs.append(abs(diff - eps * slope))
            # shrinking eps by 10 shrinks the remainder by roughly 100
            if abs_errs[0] > 1e-10:  # unless already at rounding noise
                assert abs_errs[1] < abs_errs[0] * 0.05
            eps = 1e-4
            central = (
                lms_objective(a, y, f, x + eps * d)
                - lms_objective(a, y, f, x - eps * d)
            ) / (2 * eps)
            assert abs(central - slope) / max(abs(central), abs(slope), 1e-10) < 1e-4

    def test_zero_residual_zero_gradient(self):
        rng = rng_stream(11, 7)
        a = sample_cgaussian(0.0, 1.0, rng, 12).reshape(4, 3)
        x = sample_cgaussian(0.0, 1.0, rng, 3)
        y = a @ x
        assert np.allclose(grad_lms(a, y, identity_map(), x), 0.0, atol=1e-14)

    def test_identity_matches_least_squares_gradient(self):
        # linear case collapses to -(1/2) A^H (y - Ax)
        rng = rng_stream(11, 8)
        a, y, x = self._instance(rng, identity_map())
        expected = -0.5 * np.conj(a).T @ (y - a @ x)
        assert np.allclose(grad_lms(a, y, identity_map(), x), expected, atol=1e-12)


class TestGradientDescent:
    def test_converges_on_overdetermined_linear(self):
        rng = rng_stream(11, 9)
        a = sample_cgaussian(0.0, 1.0, rng, 24).reshape(8, 3)
        x_true = sample_cgaussian(0.0, 1.0, rng, 3)
        y = a @ x_true
        x0 = np.zeros(3, dtype=np.complex128)
        out = gradient_descent(a, y, identity_map(), beta=0.05, iterations=4000, x0=x0)
        assert np.allclose(out, x_true, atol=1e-6)

    def test_divergence_raises_with_iteration(self):
        rng = rng_stream(11, 10)
        a = sample_cgaussian(0.0, 1.0, rng, 24).reshape(8, 3)
        y = sample_cgaussian(0.0, 1.0, rng, 8)
        with pytest.raises(DivergenceError) as info, \
                np.errstate(over="ignore", invalid="ignore"):
            gradient_descent(a, y, identity_map(), beta=50.0, iterations=500,
                             x0=np.ones(3, dtype=np.complex128))
        assert info.value.iteration >= 1
