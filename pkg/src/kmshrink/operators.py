"""Shrinkage covariance operators, weighted kernel PCA and distribution kernels.

A (cross-)covariance operator is the kernel mean of centered product
features phi~(x) (x) psi~(y) in the tensor-product RKHS, whose Gram matrix is
the Hadamard product Kc_X * Kc_Y.  Running a shrinkage estimator on that Gram
gives per-sample weights beta, and kernel PCA under the weighted covariance
solves Kc diag(beta) Kc a = d Kc a.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from kmshrink._errors import DegenerateGramError, InputError
from kmshrink.centering import CenteredGram, center_train
from kmshrink.estimators import KernelMeanEstimate, f_kmse_spectral, s_kmse_weights, uniform_weights
from kmshrink.kernels import KernelSpec, as_data_matrix, cross_gram, gram, kernel_diag
from kmshrink.model_selection import LoocvMethod, SearchConfig, f_kmse_select, gram_stats, s_kmse_select
from kmshrink.spectral import generalized_kpca_eig, sym_eig


class CovOpSource(str, Enum):
    STANDARD = "standard"
    S_COSE = "s_cose"
    F_COSE = "f_cose"


@dataclass(frozen=True, eq=False)
class CovOpWeights:
    beta: NDArray[np.float64]
    source: CovOpSource
    lam: float = 0.0


def product_gram(K_X: ArrayLike, K_Y: ArrayLike | None = None) -> NDArray[np.float64]:
    """Gram of the centered product kernel, Kc_X * Kc_Y (or Kc_X * Kc_X)."""
    K_X = np.asarray(K_X, dtype=float)
    n = K_X.shape[0]
    Kc_X = center_train(K_X, uniform_weights(n)).values
    if K_Y is None:
        return Kc_X * Kc_X
    K_Y = np.asarray(K_Y, dtype=float)
    if K_Y.shape != K_X.shape:
        raise InputError(f"Gram size mismatch: {K_X.shape} vs {K_Y.shape}")
    return Kc_X * center_train(K_Y, uniform_weights(n)).values


def cose_weights(
    K_X: ArrayLike,
    K_Y: ArrayLike | None = None,
    method: CovOpSource | str = CovOpSource.STANDARD,
    lam: float | None = None,
    search: SearchConfig | None = None,
    criterion: LoocvMethod | str = LoocvMethod.F_CLOSED_FORM,
) -> CovOpWeights:
    """Covariance-operator weights from a shrinkage estimator on the product Gram.

    Without ``lam`` the shrinkage parameter is chosen by leave-one-out
    (closed form for S_COSE, search for F_COSE).
    """
    method = CovOpSource(method)
    n = np.asarray(K_X).shape[0]
    if method is CovOpSource.STANDARD:
        return CovOpWeights(uniform_weights(n), method, 0.0)
    P = product_gram(K_X, K_Y)
    if not np.any(P):
        raise DegenerateGramError("degenerate product Gram")
    if method is CovOpSource.S_COSE:
        if lam is None:
            lam = s_kmse_select(gram_stats(P)).lam
        return CovOpWeights(s_kmse_weights(n, lam), method, lam)
    dec = sym_eig(P)
    if lam is None:
        lam = f_kmse_select(dec, search, criterion).selected_lambda
    return CovOpWeights(f_kmse_spectral(dec, lam), method, lam)


@dataclass(frozen=True, eq=False)
class KpcaModel:
    coefficients: NDArray[np.float64]
    eigenvalues: NDArray[np.float64]
    centering: CenteredGram
    train_points: NDArray[np.float64]
    kernel: KernelSpec
    covop: CovOpWeights

    @property
    def n_components(self) -> int:
        return self.coefficients.shape[1]

    @property
    def centering_beta(self) -> NDArray[np.float64]:
        return self.centering.weights_used

    def to_dict(self) -> dict[str, Any]:
        return {
            "kernel": self.kernel.to_dict(),
            "n_components": self.n_components,
            "eigenvalues": self.eigenvalues.tolist(),
            "coefficients": self.coefficients.tolist(),
            "centering_beta": self.centering_beta.tolist(),
            "covop": {"source": self.covop.source.value, "lambda": _json_float(self.covop.lam), "beta": self.covop.beta.tolist()},
            "train_points": self.train_points.tolist(),
        }


def _json_float(x: float) -> float | str:
    return "inf" if math.isinf(x) else x


def kpca_fit(
    X: ArrayLike,
    kernel: KernelSpec,
    centering_beta: ArrayLike,
    covop: CovOpWeights,
    n_components: int,
    *,
    K: ArrayLike | None = None,
) -> KpcaModel:
    """Kernel PCA with a weighted mean for centering and weighted covariance.

    Components are normalised to unit norm in feature space
    (a_j^T Kc a_k = delta_jk).
    """
    X = as_data_matrix(X)
    K = gram(kernel, X) if K is None else np.asarray(K, dtype=float)
    centered = center_train(K, centering_beta)
    if covop.beta.shape[0] != X.shape[0]:
        raise InputError("covariance weights do not match the training set")
    if not np.any(covop.beta):
        raise DegenerateGramError("covariance weights vanish (fully shrunk operator)")
    sol = generalized_kpca_eig(centered.values, covop.beta)
    rank = sol.eigvals.shape[0]
    if n_components < 0 or n_components > rank:
        raise InputError(f"requested {n_components} components but the centered Gram has rank {rank}")
    return KpcaModel(
        coefficients=sol.coefficients[:, :n_components],
        eigenvalues=sol.eigvals[:n_components],
        centering=centered,
        train_points=X,
        kernel=kernel,
        covop=covop,
    )


def kpca_rank(K: ArrayLike, centering_beta: ArrayLike) -> int:
    """Number of components available after centering."""
    return sym_eig(center_train(K, centering_beta).values).rank()


def kpca_reconstruction_error(model: KpcaModel, Z: ArrayLike, n_components: int | None = None) -> NDArray[np.float64]:
    """|phi~(z) - P phi~(z)|^2 for each test row, using the leading components.

    phi~ is centered with the model's mean; errors are clamped at zero.
    """
    Z = as_data_matrix(Z, "Z")
    ell = model.n_components if n_components is None else n_components
    if not 0 <= ell <= model.n_components:
        raise InputError(f"n_components must lie in [0, {model.n_components}]")
    L = cross_gram(model.kernel, Z, model.train_points)
    Lc = model.centering.center_test(L)
    diag = model.centering.test_diag(kernel_diag(model.kernel, Z), L)
    proj = Lc @ model.coefficients[:, :ell]
    return np.maximum(diag - np.sum(proj**2, axis=1), 0.0)


class Level2(str, Enum):
    LINEAR = "linear"
    GAUSSIAN = "gaussian"


def fit_group_estimate(X: ArrayLike, kernel: KernelSpec, estimator: str) -> KernelMeanEstimate:
    """KME, or a shrinkage estimate with its parameter chosen by leave-one-out."""
    X = as_data_matrix(X)
    n = X.shape[0]
    est = estimator.lower().replace("_", "-")
    if est == "kme" or n < 2:
        return KernelMeanEstimate(X, uniform_weights(n), kernel)
    K = gram(kernel, X)
    if est == "s-kmse":
        return KernelMeanEstimate(X, s_kmse_weights(n, s_kmse_select(gram_stats(K)).lam), kernel)
    if est == "f-kmse":
        dec = sym_eig(K)
        return KernelMeanEstimate(X, f_kmse_spectral(dec, f_kmse_select(dec).selected_lambda), kernel)
    raise InputError(f"unknown estimator {estimator!r}")


def distribution_gram(
    groups: Sequence[ArrayLike],
    kernel: KernelSpec,
    estimator: str = "kme",
    level2: Level2 | str = Level2.LINEAR,
    sigma_sq: float | None = None,
) -> NDArray[np.float64]:
    """Kernel matrix between samples via their (shrunk) kernel mean embeddings.

    LINEAR gives <mu_i, mu_j>; GAUSSIAN gives exp(-|mu_i - mu_j|^2 / (2 sigma_sq)).
    """
    level2 = Level2(level2)
    if not groups:
        raise InputError("need at least one group")
    if level2 is Level2.GAUSSIAN and not (sigma_sq and sigma_sq > 0):
        raise InputError("Gaussian level-2 kernel needs sigma_sq > 0")
    ests = []
    for idx, g in enumerate(groups):
        g = np.asarray(g, dtype=float)
        if g.size == 0:
            raise InputError(f"group {idx} is empty")
        ests.append(fit_group_estimate(g, kernel, estimator))
    m = len(ests)
    G = np.empty((m, m))
    for i in range(m):
        for j in range(i, m):
            G[i, j] = G[j, i] = float(ests[i].weights @ cross_gram(kernel, ests[i].points, ests[j].points) @ ests[j].weights)
    if level2 is Level2.LINEAR:
        return G
    d = np.diag(G)
    dist = np.maximum(d[:, None] + d[None, :] - 2.0 * G, 0.0)
    np.fill_diagonal(dist, 0.0)
    return np.exp(-dist / (2.0 * sigma_sq))
