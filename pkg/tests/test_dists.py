"""Unit tests for grids, discrete distributions, kernels and cumulants."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from factorbp.dists import (Grid, DiscreteDist, Kernel, compose, convolve,
                            cumulants, delta, from_mass, gaussian_on_grid,
                            kernel_cumulants, kl_to_gaussian_fit, normalize,
                            perturbed_gaussian_on_grid, product, uniform,
                            uniform_window)
from factorbp.errors import DegenerateVarianceError, ZeroMassError

GRID = Grid(64, 0.0, 63.0)


class TestGrid:
    def test_step_and_centers(self):
        g = Grid(5, 0.0, 8.0)
        assert g.step == 2.0
        np.testing.assert_allclose(g.centers(), [0, 2, 4, 6, 8])

    def test_index_of_rounds_to_nearest(self):
        assert GRID.index_of(10.4) == 10
        assert GRID.index_of(10.6) == 11

    def test_rejects_bad_shapes(self):
        with pytest.raises(ValueError):
            Grid(1, 0.0, 1.0)
        with pytest.raises(ValueError):
            Grid(8, 2.0, 2.0)


class TestConstructors:
    def test_uniform_and_delta_normalized(self):
        assert uniform(GRID).mass.sum() == pytest.approx(1.0)
        d = delta(GRID, 7)
        assert d.mass[7] == 1.0 and d.mass.sum() == 1.0

    def test_uniform_window_stays_on_grid(self):
        d = uniform_window(GRID, 8, center=2)
        support = np.nonzero(d.mass)[0]
        assert support[0] == 0 and len(support) == 8

    def test_uniform_window_width_bounds(self):
        with pytest.raises(ValueError):
            uniform_window(GRID, 0)
        with pytest.raises(ValueError):
            uniform_window(GRID, GRID.n_bins + 1)

    def test_negative_mass_rejected(self):
        m = np.zeros(GRID.n_bins)
        m[3] = -1.0
        with pytest.raises(ValueError):
            DiscreteDist(GRID, m)

    def test_normalize_zero_mass(self):
        with pytest.raises(ZeroMassError):
            normalize(DiscreteDist(GRID, np.zeros(GRID.n_bins)))

    def test_from_mass(self):
        d = from_mass(GRID, np.ones(GRID.n_bins) * 5.0)
        np.testing.assert_allclose(d.mass, uniform(GRID).mass)


class TestProductConvolve:
    def test_product_is_pointwise(self):
        a = uniform_window(GRID, 16)
        b = gaussian_on_grid(30.0, 9.0, GRID)
        c = product(a, b)
        expect = a.mass * b.mass
        np.testing.assert_allclose(c.mass, expect / expect.sum())

    def test_product_disjoint_support(self):
        with pytest.raises(ZeroMassError):
            product(delta(GRID, 0), delta(GRID, 10))

    def test_convolve_matches_numpy_in_interior(self):
        d = gaussian_on_grid(30.0, 4.0, GRID)
        k = Kernel(np.array([-1, 0, 1]), np.array([0.25, 0.5, 0.25]))
        out = convolve(d, k)
        ref = np.convolve(d.mass, [0.25, 0.5, 0.25], mode="same")
        np.testing.assert_allclose(out.mass, ref / ref.sum(), atol=1e-12)

    def test_convolve_shifts_mean(self):
        d = delta(GRID, 20)
        k = Kernel(np.array([3]), np.array([1.0]))
        assert convolve(d, k).mean() == pytest.approx(23.0)

    def test_convolve_truncates_and_renormalizes(self):
        d = delta(GRID, GRID.n_bins - 1)
        k = Kernel(np.array([0, 5]), np.array([0.5, 0.5]))
        out = convolve(d, k)
        assert out.mass.sum() == pytest.approx(1.0)
        assert out.mass[GRID.n_bins - 1] == pytest.approx(1.0)

    def test_convolve_all_mass_off_grid(self):
        d = delta(GRID, 0)
        k = Kernel(np.array([-5]), np.array([1.0]))
        with pytest.raises(ZeroMassError):
            convolve(d, k)

    def test_compose_equals_sequential_convolution(self):
        d = gaussian_on_grid(30.0, 4.0, GRID)
        k1 = Kernel(np.array([-1, 0, 2]), np.array([0.2, 0.5, 0.3]))
        k2 = Kernel(np.array([0, 1]), np.array([0.6, 0.4]))
        a = convolve(convolve(d, k1), k2)
        b = convolve(d, compose(k1, k2))
        np.testing.assert_allclose(a.mass, b.mass, atol=1e-12)


class TestKernel:
    def test_weights_normalized(self):
        k = Kernel(np.array([0, 1]), np.array([2.0, 2.0]))
        np.testing.assert_allclose(k.weights, [0.5, 0.5])

    def test_validation(self):
        with pytest.raises(ValueError):
            Kernel(np.array([1, 0]), np.array([0.5, 0.5]))
        with pytest.raises(ValueError):
            Kernel(np.array([0, 1]), np.array([-0.5, 1.5]))
        with pytest.raises(ZeroMassError):
            Kernel(np.array([0, 1]), np.array([0.0, 0.0]))

    def test_reflected_is_involution(self):
        k = Kernel(np.array([-2, 0, 3]), np.array([0.3, 0.5, 0.2]))
        r = k.reflected().reflected()
        np.testing.assert_array_equal(r.offsets, k.offsets)
        np.testing.assert_allclose(r.weights, k.weights)

    def test_reflected_negates_mean(self):
        k = Kernel(np.array([-1, 0, 3]), np.array([0.2, 0.5, 0.3]))
        mu = kernel_cumulants(k, 1.0)[0]
        mu_r = kernel_cumulants(k.reflected(), 1.0)[0]
        assert mu_r == pytest.approx(-mu)


class TestCumulants:
    def test_binomial_oracle(self):
        # Binomial(n, p) on the grid: known skew and excess kurtosis.
        n, p = 20, 0.3
        ks = np.arange(n + 1)
        from math import comb
        mass = np.array([comb(n, int(k)) * p**k * (1 - p) ** (n - k) for k in ks])
        g = Grid(n + 1, 0.0, float(n))
        s = cumulants(DiscreteDist(g, mass))
        q = 1 - p
        assert s.mu == pytest.approx(n * p)
        assert s.var == pytest.approx(n * p * q)
        assert s.skew == pytest.approx((q - p) / np.sqrt(n * p * q), rel=1e-9)
        assert s.exkurt == pytest.approx((1 - 6 * p * q) / (n * p * q), rel=1e-9)

    def test_gaussian_is_nearly_gaussian(self):
        g = Grid(1024, 0.0, 63.0)
        s = cumulants(gaussian_on_grid(30.0, 9.0, g))
        assert s.eps < 1e-6
        assert s.kl_gauss < 1e-9

    def test_delta_degenerate(self):
        with pytest.raises(DegenerateVarianceError):
            cumulants(delta(GRID, 5))

    def test_kernel_cumulants_scale_with_step(self):
        k = Kernel(np.array([-1, 0, 2]), np.array([0.3, 0.4, 0.3]))
        mu1, k2_1 = kernel_cumulants(k, 1.0)[:2]
        mu2, k2_2 = kernel_cumulants(k, 2.0)[:2]
        assert mu2 == pytest.approx(2 * mu1)
        assert k2_2 == pytest.approx(4 * k2_1)

    def test_perturbed_gaussian_hits_requested_cumulants(self):
        g = Grid(1024, 0.0, 63.0)
        d = perturbed_gaussian_on_grid(30.0, 3.0, 0.1, 0.05, g)
        s = cumulants(d)
        assert s.skew == pytest.approx(0.1, abs=1e-3)
        assert s.exkurt == pytest.approx(0.05, abs=1e-3)

    def test_kl_zero_for_own_fit(self):
        g = Grid(1024, 0.0, 63.0)
        assert kl_to_gaussian_fit(gaussian_on_grid(25.0, 16.0, g)) < 1e-9

    def test_kl_positive_for_bimodal(self):
        m = np.zeros(GRID.n_bins)
        m[10] = m[50] = 0.5
        assert kl_to_gaussian_fit(DiscreteDist(GRID, m)) > 0.5

    @given(st.lists(st.floats(0.01, 10.0), min_size=64, max_size=64),
           )
    @settings(max_examples=30, deadline=None)
    def test_kl_nonnegative_and_finite(self, raw):
        d = from_mass(GRID, np.array(raw))
        kl = kl_to_gaussian_fit(d)
        assert np.isfinite(kl) and kl >= 0.0
