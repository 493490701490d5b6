import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from kmshrink._errors import DegenerateSampleError, InputError
from kmshrink.kernels import (
    KernelFamily,
    KernelSpec,
    as_data_matrix,
    cross_gram,
    eval_kernel,
    gram,
    kernel_diag,
    median_heuristic,
)

from conftest import ALL_KERNELS, KERNEL_IDS

finite = st.floats(-5, 5, allow_nan=False, allow_infinity=False)


class TestKernelSpec:
    def test_rbf_needs_positive_bandwidth(self):
        with pytest.raises(InputError):
            KernelSpec.rbf(0.0)
        with pytest.raises(InputError):
            KernelSpec(KernelFamily.RBF)

    def test_bandwidth_dropped_for_polynomials(self):
        assert KernelSpec(KernelFamily.POLY2, 3.0).bandwidth_sq is None

    @pytest.mark.parametrize("spec", ALL_KERNELS, ids=KERNEL_IDS)
    def test_dict_round_trip(self, spec):
        assert KernelSpec.from_dict(spec.to_dict()) == spec

    def test_median_from_dict(self):
        X = np.array([[0.0], [1.0], [3.0]])
        spec = KernelSpec.from_dict({"family": "rbf", "bandwidth": "median"}, sample=X)
        # squared distances 1, 4, 9
        assert spec.bandwidth_sq == 4.0

    def test_median_needs_sample(self):
        with pytest.raises(InputError):
            KernelSpec.from_dict({"family": "rbf", "bandwidth": "median"})

    def test_unknown_family(self):
        with pytest.raises(ValueError):
            KernelSpec.from_dict({"family": "laplace"})


class TestEvaluation:
    def test_closed_forms(self):
        x, y = np.array([1.0, 2.0]), np.array([0.5, -1.0])
        assert eval_kernel(KernelSpec.lin(), x, y) == -1.5
        assert eval_kernel(KernelSpec.poly(2), x, y) == pytest.approx(0.25)
        assert eval_kernel(KernelSpec.poly(3), x, y) == pytest.approx(-0.125)
        assert eval_kernel(KernelSpec.rbf(0.5), x, y) == pytest.approx(math.exp(-9.25))

    @pytest.mark.parametrize("spec", ALL_KERNELS, ids=KERNEL_IDS)
    def test_gram_matches_pointwise(self, spec, rng):
        X = rng.normal(size=(6, 3))
        G = gram(spec, X)
        ref = np.array([[eval_kernel(spec, a, b) for b in X] for a in X])
        np.testing.assert_allclose(G, ref, rtol=1e-12, atol=1e-12)
        assert np.array_equal(G, G.T)

    @pytest.mark.parametrize("spec", ALL_KERNELS, ids=KERNEL_IDS)
    def test_cross_gram_and_diag(self, spec, rng):
        X, Z = rng.normal(size=(5, 2)), rng.normal(size=(3, 2))
        L = cross_gram(spec, Z, X)
        assert L.shape == (3, 5)
        np.testing.assert_allclose(L[1, 2], eval_kernel(spec, Z[1], X[2]), rtol=1e-12)
        np.testing.assert_allclose(kernel_diag(spec, X), np.diag(gram(spec, X)), rtol=1e-12)

    def test_rbf_duplicates_exactly_one(self):
        X = np.array([[1e8, 3.0], [1e8, 3.0], [0.0, 0.0]])
        G = gram(KernelSpec.rbf(1.0), X)
        assert G[0, 1] == 1.0 and np.all(np.diag(G) == 1.0)

    def test_dimension_mismatch(self):
        with pytest.raises(InputError):
            cross_gram(KernelSpec.lin(), np.ones((2, 3)), np.ones((2, 2)))

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, (5, 2), elements=finite))
    def test_gram_psd(self, X):
        for spec in ALL_KERNELS:
            G = gram(spec, X)
            scale = max(np.abs(G).max(), 1.0)
            assert np.linalg.eigvalsh(G).min() >= -1e-9 * scale


class TestDataMatrix:
    def test_vector_becomes_column(self):
        assert as_data_matrix([1.0, 2.0]).shape == (2, 1)

    @pytest.mark.parametrize("bad", [np.empty((0, 2)), np.array([[np.nan]]), np.ones((2, 2, 2))])
    def test_rejects(self, bad):
        with pytest.raises(InputError):
            as_data_matrix(bad)


class TestMedianHeuristic:
    def test_lower_median_even_count(self):
        X = np.array([[0.0], [1.0], [2.0], [4.0]])
        # squared distances sorted: 1, 1, 4, 4, 9, 16 -> lower median 4
        assert median_heuristic(X) == 4.0

    def test_degenerate(self):
        with pytest.raises(DegenerateSampleError, match="degenerate"):
            median_heuristic(np.ones((4, 2)))

    def test_single_point(self):
        with pytest.raises(InputError):
            median_heuristic(np.ones((1, 2)))

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0.1, 10.0))
    def test_scales_quadratically(self, c):
        X = np.random.default_rng(0).normal(size=(7, 2))
        assert median_heuristic(c * X) == pytest.approx(c * c * median_heuristic(X), rel=1e-12)
