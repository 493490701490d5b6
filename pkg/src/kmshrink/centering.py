"""Centering kernel matrices about a weighted (possibly shrunk) mean.

With the mean m = sum_k beta_k phi(x_k), centered features are
phi(x) - m and the centered kernel is

    Kc_ij = K_ij - (K beta)_i - (K beta)_j + beta^T K beta.

Uniform beta = 1/n recovers the classical H K H centering.  Everything is
done with rank-one corrections; the n x n matrix of stacked betas is never
formed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from kmshrink._errors import InputError
from kmshrink.kernels import KernelSpec, as_data_matrix, cross_gram, eval_kernel, gram


def _mirror(M: NDArray) -> NDArray:
    return np.triu(M) + np.triu(M, 1).T


def _check_weights(beta: ArrayLike, n: int) -> NDArray[np.float64]:
    beta = np.asarray(beta, dtype=float).ravel()
    if beta.shape[0] != n:
        raise InputError(f"weight vector has length {beta.shape[0]}, expected {n}")
    if not np.all(np.isfinite(beta)):
        raise InputError("weights must be finite")
    return beta


@dataclass(frozen=True, eq=False)
class CenteredGram:
    """A centered training Gram together with the weights that centered it.

    Test-side centering goes through :meth:`center_test` so it always uses the
    same mean as the training side.
    """

    values: NDArray[np.float64]
    weights_used: NDArray[np.float64]
    k_beta: NDArray[np.float64]
    beta_k_beta: float

    def center_test(self, L: ArrayLike) -> NDArray[np.float64]:
        L = np.asarray(L, dtype=float)
        if L.ndim != 2 or L.shape[1] != self.weights_used.shape[0]:
            raise InputError(f"test kernel must have {self.weights_used.shape[0]} columns, got shape {L.shape}")
        return L - self.k_beta[None, :] - (L @ self.weights_used)[:, None] + self.beta_k_beta

    def test_diag(self, k_zz: ArrayLike, L: ArrayLike) -> NDArray[np.float64]:
        """Centered self-kernel |phi(z) - m|^2 from k(z, z) and the test kernel rows."""
        L = np.asarray(L, dtype=float)
        return np.asarray(k_zz, dtype=float) - 2.0 * (L @ self.weights_used) + self.beta_k_beta


def center_train(K: ArrayLike, beta: ArrayLike) -> CenteredGram:
    K = np.asarray(K, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise InputError(f"expected a square Gram matrix, got shape {K.shape}")
    beta = _check_weights(beta, K.shape[0])
    kb = K @ beta
    bkb = float(beta @ kb)
    Kc = _mirror(K - kb[:, None] - kb[None, :] + bkb)
    return CenteredGram(Kc, beta, kb, bkb)


def center_test(L: ArrayLike, K: ArrayLike, beta: ArrayLike) -> NDArray[np.float64]:
    """Centered test kernel L - B_t K - L B + B_t K B, B_t = 1_m beta^T.

    Entry (i, j) is L_ij - (K beta)_j - (L beta)_i + beta^T K beta.
    """
    K = np.asarray(K, dtype=float)
    beta = _check_weights(beta, K.shape[0])
    kb = K @ beta
    return CenteredGram(K, beta, kb, float(beta @ kb)).center_test(L)


def centered_test_diag(z: ArrayLike, X: ArrayLike, kernel: KernelSpec, beta: ArrayLike, K: ArrayLike | None = None) -> float:
    """|phi(z) - sum_j beta_j phi(x_j)|^2 = k(z,z) - 2 k_z^T beta + beta^T K beta."""
    X = as_data_matrix(X)
    z = np.asarray(z, dtype=float).ravel()
    beta = _check_weights(beta, X.shape[0])
    kz = cross_gram(kernel, z[None, :], X)[0]
    if K is None:
        K = gram(kernel, X)
    return eval_kernel(kernel, z, z) - 2.0 * float(kz @ beta) + float(beta @ np.asarray(K) @ beta)
