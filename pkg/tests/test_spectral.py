import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kmshrink._errors import DegenerateGramError, InputError, SingularSystemError
from kmshrink.kernels import KernelSpec, gram
from kmshrink.spectral import generalized_kpca_eig, shifted_solve, sym_eig

from conftest import random_gram


class TestSymEig:
    def test_reconstruction_and_order(self, rng):
        K = random_gram(rng, 8)
        dec = sym_eig(K)
        assert np.all(np.diff(dec.eigvals) <= 0)
        np.testing.assert_allclose(dec.reconstruct(), K, atol=1e-12)
        np.testing.assert_allclose(dec.eigvecs.T @ dec.eigvecs, np.eye(8), atol=1e-12)

    def test_sign_convention(self, rng):
        dec = sym_eig(random_gram(rng, 6))
        idx = np.argmax(np.abs(dec.eigvecs), axis=0)
        assert np.all(dec.eigvecs[idx, np.arange(6)] > 0)

    def test_deterministic(self, rng):
        K = random_gram(rng, 7)
        a, b = sym_eig(K), sym_eig(K.copy())
        assert np.array_equal(a.eigvecs, b.eigvecs) and np.array_equal(a.eigvals, b.eigvals)

    def test_clamps_round_off(self):
        X = np.array([[1.0, 0.0], [2.0, 0.0], [3.0, 0.0]])
        dec = sym_eig(gram(KernelSpec.lin(), X))
        assert dec.rank() == 1
        assert np.count_nonzero(dec.eigvals) == 1

    def test_keeps_genuinely_negative(self):
        dec = sym_eig(np.array([[0.0, 1.0], [1.0, 0.0]]))
        np.testing.assert_allclose(dec.eigvals, [1.0, -1.0])

    @pytest.mark.parametrize(
        "M", [np.ones((2, 3)), np.array([[1.0, 2.0], [0.0, 1.0]]), np.array([[np.inf, 0], [0, 1.0]])]
    )
    def test_rejects(self, M):
        with pytest.raises(InputError):
            sym_eig(M)

    def test_smallest_nonzero(self):
        dec = sym_eig(np.diag([3.0, 1e-20, 0.5]))
        assert dec.smallest_nonzero() == 0.5
        with pytest.raises(DegenerateGramError):
            sym_eig(np.zeros((3, 3))).smallest_nonzero()


class TestShiftedSolve:
    @settings(max_examples=40, deadline=None)
    @given(st.floats(1e-6, 1e3), st.integers(2, 12))
    def test_matches_dense(self, lam, n):
        rng = np.random.default_rng(n)
        K = random_gram(rng, n)
        b = rng.normal(size=n)
        x = shifted_solve(sym_eig(K), lam, b)
        np.testing.assert_allclose((K + lam * np.eye(n)) @ x, b, rtol=1e-8, atol=1e-10)

    def test_matrix_rhs(self, rng):
        K = random_gram(rng, 5)
        B = rng.normal(size=(5, 2))
        X = shifted_solve(sym_eig(K), 0.3, B)
        np.testing.assert_allclose((K + 0.3 * np.eye(5)) @ X, B, atol=1e-10)

    def test_singular(self):
        with pytest.raises(SingularSystemError):
            shifted_solve(sym_eig(np.diag([1.0, 0.0])), 0.0, np.ones(2))

    def test_negative_lambda(self, rng):
        with pytest.raises(InputError):
            shifted_solve(sym_eig(random_gram(rng, 3)), -1.0, np.ones(3))


class TestGeneralizedKpca:
    def test_uniform_weights_reduce_to_eigenproblem(self, rng):
        K = random_gram(rng, 9)
        n = K.shape[0]
        H = np.eye(n) - 1.0 / n
        Kc = H @ K @ H
        sol = generalized_kpca_eig(Kc, np.full(n, 1.0 / n))
        ref = np.sort(np.linalg.eigvalsh(Kc / n))[::-1][: sol.eigvals.shape[0]]
        np.testing.assert_allclose(sol.eigvals, ref, rtol=1e-8, atol=1e-14)

    def test_solves_generalized_problem(self, rng):
        K = random_gram(rng, 7)
        w = rng.uniform(0.1, 1.0, 7)
        sol = generalized_kpca_eig(K, w)
        A, D = sol.coefficients, sol.eigvals
        np.testing.assert_allclose(K @ np.diag(w) @ K @ A, K @ A * D, atol=1e-9)
        np.testing.assert_allclose(A.T @ K @ A, np.eye(A.shape[1]), atol=1e-8)

    def test_zero_matrix(self):
        with pytest.raises(DegenerateGramError, match="degenerate"):
            generalized_kpca_eig(np.zeros((3, 3)), np.ones(3))
