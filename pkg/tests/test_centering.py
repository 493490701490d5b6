import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kmshrink._errors import InputError
from kmshrink.centering import center_test, center_train, centered_test_diag
from kmshrink.estimators import uniform_weights
from kmshrink.kernels import KernelSpec, cross_gram, gram

from conftest import random_gram


def explicit_center(K, beta):
    n = K.shape[0]
    B = np.tile(beta, (n, 1))
    return K - B @ K - K @ B.T + B @ K @ B.T


class TestTrainCentering:
    def test_hand_example(self):
        Kc = center_train(np.eye(2), [0.5, 0.5]).values
        np.testing.assert_allclose(Kc, [[0.5, -0.5], [-0.5, 0.5]], atol=1e-15)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(2, 15), st.integers(0, 10_000))
    def test_uniform_is_hkh(self, n, seed):
        K = random_gram(np.random.default_rng(seed), n)
        H = np.eye(n) - np.full((n, n), 1.0 / n)
        np.testing.assert_allclose(center_train(K, uniform_weights(n)).values, H @ K @ H, atol=1e-12, rtol=0)

    def test_matches_stacked_form(self, rng):
        K = random_gram(rng, 6)
        beta = rng.uniform(0, 0.3, 6)
        np.testing.assert_allclose(center_train(K, beta).values, explicit_center(K, beta), atol=1e-12)

    def test_symmetric(self, rng):
        Kc = center_train(random_gram(rng, 7), rng.uniform(size=7)).values
        assert np.array_equal(Kc, Kc.T)

    def test_zero_weights_no_change(self, rng):
        K = random_gram(rng, 4)
        np.testing.assert_array_equal(center_train(K, np.zeros(4)).values, K)

    def test_weight_length(self, rng):
        with pytest.raises(InputError):
            center_train(random_gram(rng, 4), np.ones(3))


class TestTestCentering:
    def test_feature_space_identity(self, rng):
        # with LIN features are the points, so centering is subtracting the weighted mean
        X, Z = rng.normal(size=(5, 3)), rng.normal(size=(2, 3))
        beta = rng.uniform(0, 0.4, 5)
        m = beta @ X
        k = KernelSpec.lin()
        Lc = center_test(cross_gram(k, Z, X), gram(k, X), beta)
        np.testing.assert_allclose(Lc, (Z - m) @ (X - m).T, atol=1e-12)
        assert centered_test_diag(Z[0], X, k, beta) == pytest.approx(np.sum((Z[0] - m) ** 2))

    def test_train_points_reproduce_train_centering(self, rng):
        X = rng.normal(size=(5, 2))
        k = KernelSpec.rbf(1.0)
        K = gram(k, X)
        beta = rng.uniform(0, 0.3, 5)
        cg = center_train(K, beta)
        np.testing.assert_allclose(cg.center_test(K), cg.values, atol=1e-12)
        np.testing.assert_allclose(cg.test_diag(np.ones(5), K), np.diag(cg.values), atol=1e-12)

    def test_column_mismatch(self, rng):
        cg = center_train(random_gram(rng, 4), uniform_weights(4))
        with pytest.raises(InputError):
            cg.center_test(np.ones((2, 3)))
