import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kmshrink._errors import InputError
from kmshrink.estimators import (
    KernelMeanEstimate,
    f_kmse,
    f_kmse_estimate,
    f_kmse_spectral,
    filter_factors,
    kme,
    rkhs_dist_sq,
    rkhs_inner,
    s_kmse,
    s_kmse_weights,
    shrink_toward,
    shrinkage_amount,
    spectral_coefficients,
    uniform_weights,
)
from kmshrink.kernels import KernelSpec, eval_kernel, gram
from kmshrink.spectral import sym_eig

from conftest import ALL_KERNELS, KERNEL_IDS, random_gram


class TestKme:
    def test_uniform_weights(self, rng):
        est = kme(rng.normal(size=(4, 2)), KernelSpec.lin())
        np.testing.assert_array_equal(est.weights, np.full(4, 0.25))

    def test_evaluate_linear(self):
        X = np.array([[1.0, 0.0], [0.0, 2.0]])
        est = kme(X, KernelSpec.lin())
        assert est.evaluate(np.array([[2.0, 2.0]]))[0] == pytest.approx(3.0)

    def test_serialization(self, rng):
        est = kme(rng.normal(size=(3, 2)), KernelSpec.rbf(1.5))
        back = KernelMeanEstimate.from_dict(est.to_dict())
        np.testing.assert_array_equal(back.points, est.points)
        np.testing.assert_array_equal(back.weights, est.weights)
        assert back.kernel == est.kernel

    def test_weight_count(self):
        with pytest.raises(InputError):
            KernelMeanEstimate(np.ones((3, 1)), np.ones(2), KernelSpec.lin())


class TestSKmse:
    def test_weights(self):
        np.testing.assert_allclose(s_kmse_weights(4, 1.0), np.full(4, 0.125))
        np.testing.assert_array_equal(s_kmse_weights(3, np.inf), np.zeros(3))

    def test_zero_lambda_is_kme(self, rng):
        X = rng.normal(size=(5, 2))
        np.testing.assert_array_equal(s_kmse(X, KernelSpec.lin(), 0.0).weights, kme(X, KernelSpec.lin()).weights)

    def test_negative(self):
        with pytest.raises(InputError):
            s_kmse_weights(3, -0.1)

    def test_equals_shrink_toward_zero(self, rng):
        X = rng.normal(size=(5, 2))
        lam = 0.7
        shrunk = shrink_toward(kme(X, KernelSpec.lin()), None, shrinkage_amount(lam))
        np.testing.assert_allclose(shrunk.weights, s_kmse_weights(5, lam), rtol=1e-15)

    def test_shrinkage_amount(self):
        assert shrinkage_amount(1.0) == 0.5
        assert shrinkage_amount(np.inf) == 1.0


class TestFKmse:
    @pytest.mark.parametrize("kernel", ALL_KERNELS, ids=KERNEL_IDS)
    @pytest.mark.parametrize("lam", [1e-3, 0.1, 10.0])
    def test_dense_and_spectral_agree(self, kernel, lam, rng):
        K = random_gram(rng, 8, kernel)
        a = f_kmse(K, lam)
        b = f_kmse_spectral(sym_eig(K), lam)
        np.testing.assert_allclose(a, b, rtol=1e-8, atol=1e-10 * np.abs(a).max())

    def test_decomposition_route(self, rng):
        dec = sym_eig(random_gram(rng, 6))
        np.testing.assert_allclose(f_kmse(dec, 0.5), f_kmse_spectral(dec, 0.5), atol=1e-13)

    def test_zero_lambda_nonsingular(self, rng):
        K = random_gram(rng, 5)
        np.testing.assert_allclose(f_kmse(K, 0.0), uniform_weights(5), atol=1e-8)

    @settings(max_examples=40, deadline=None)
    @given(st.floats(1e-8, 1e6), st.integers(2, 10))
    def test_filter_factors_below_one(self, lam, n):
        dec = sym_eig(random_gram(np.random.default_rng(n), n))
        f = filter_factors(dec, lam)
        assert np.all(f < 1) and np.all(f >= 0)

    def test_spectral_coefficients_shrink(self, rng):
        dec = sym_eig(random_gram(rng, 7))
        full = spectral_coefficients(dec, uniform_weights(7))
        shrunk = spectral_coefficients(dec, f_kmse_spectral(dec, 0.2))
        np.testing.assert_allclose(shrunk, filter_factors(dec, 0.2) * full, atol=1e-13)

    def test_large_lambda_tends_to_zero(self, rng):
        dec = sym_eig(random_gram(rng, 5))
        assert np.abs(f_kmse_spectral(dec, 1e12)).max() < 1e-10

    def test_estimate_object(self, rng):
        X = rng.normal(size=(5, 2))
        est = f_kmse_estimate(X, KernelSpec.rbf(1.0), 0.1)
        np.testing.assert_allclose(est.weights, f_kmse(gram(KernelSpec.rbf(1.0), X), 0.1), atol=1e-12)


class TestRkhsGeometry:
    def test_two_points_rbf(self):
        x, y = np.array([0.0, 1.0]), np.array([1.5, -1.0])
        k = KernelSpec.rbf(1.3)
        a = KernelMeanEstimate(x[None], [1.0], k)
        b = KernelMeanEstimate(y[None], [1.0], k)
        assert rkhs_dist_sq(a, b) == pytest.approx(2 - 2 * eval_kernel(k, x, y))

    def test_kernel_mismatch(self):
        a = KernelMeanEstimate(np.ones((1, 1)), [1.0], KernelSpec.lin())
        b = KernelMeanEstimate(np.ones((1, 1)), [1.0], KernelSpec.poly(2))
        with pytest.raises(InputError):
            rkhs_inner(a, b)

    def test_dist_nonneg_self(self, rng):
        est = kme(rng.normal(size=(4, 3)), KernelSpec.rbf(0.7))
        assert rkhs_dist_sq(est, est) == 0.0


class TestShrinkToward:
    def test_alpha_zero_identity(self, rng):
        est = kme(rng.normal(size=(3, 2)), KernelSpec.lin())
        assert shrink_toward(est, None, 0.0) is est

    def test_rejects_alpha_one(self, rng):
        est = kme(rng.normal(size=(3, 2)), KernelSpec.lin())
        with pytest.raises(InputError):
            shrink_toward(est, None, 1.0)

    def test_merges_shared_points(self):
        k = KernelSpec.lin()
        a = KernelMeanEstimate(np.array([[0.0], [1.0]]), [0.5, 0.5], k)
        b = KernelMeanEstimate(np.array([[-0.0], [2.0]]), [1.0, 0.0], k)
        out = shrink_toward(a, b, 0.25)
        np.testing.assert_array_equal(out.points, [[0.0], [1.0], [2.0]])
        np.testing.assert_allclose(out.weights, [0.625, 0.375, 0.0])

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0.0, 0.99))
    def test_convex_combination_distance(self, alpha):
        rng = np.random.default_rng(1)
        k = KernelSpec.rbf(1.0)
        a = kme(rng.normal(size=(4, 2)), k)
        b = kme(rng.normal(size=(3, 2)), k)
        out = shrink_toward(a, b, alpha)
        # |out - a| = alpha |b - a| for a point on the segment
        assert rkhs_dist_sq(out, a) == pytest.approx(alpha**2 * rkhs_dist_sq(a, b), abs=1e-12)
