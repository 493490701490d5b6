"""Kernel mean estimators: the empirical mean and its two shrinkage variants.

An estimate is stored as an expansion ``sum_j weights[j] * k(points[j], .)``;
feature vectors are never materialised, so every geometric quantity goes
through (cross-)Gram evaluations.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Mapping, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.linalg import LinAlgError, solve

from kmshrink._errors import InputError, SingularSystemError
from kmshrink.kernels import KernelSpec, as_data_matrix, cross_gram, gram
from kmshrink.spectral import SpectralDecomposition, shifted_solve, sym_eig

GramLike = Union[NDArray[np.float64], SpectralDecomposition]


@dataclass(frozen=True, eq=False)
class KernelMeanEstimate:
    points: NDArray[np.float64]
    weights: NDArray[np.float64]
    kernel: KernelSpec

    def __post_init__(self):
        pts = as_data_matrix(self.points, "points")
        w = np.asarray(self.weights, dtype=float).ravel()
        if w.shape[0] != pts.shape[0]:
            raise InputError(f"{w.shape[0]} weights for {pts.shape[0]} points")
        if not np.all(np.isfinite(w)):
            raise InputError("weights must be finite")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    def evaluate(self, Y: ArrayLike) -> NDArray[np.float64]:
        """Evaluate the expansion as a function at the rows of ``Y``."""
        return cross_gram(self.kernel, Y, self.points) @ self.weights

    def to_dict(self) -> dict[str, Any]:
        return {
            "kernel": self.kernel.to_dict(),
            "points": self.points.tolist(),
            "weights": self.weights.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "KernelMeanEstimate":
        return cls(
            np.asarray(data["points"], dtype=float),
            np.asarray(data["weights"], dtype=float),
            KernelSpec.from_dict(data["kernel"]),
        )


def uniform_weights(n: int) -> NDArray[np.float64]:
    return np.full(n, 1.0 / n)


def kme(X: ArrayLike, kernel: KernelSpec) -> KernelMeanEstimate:
    X = as_data_matrix(X)
    return KernelMeanEstimate(X, uniform_weights(X.shape[0]), kernel)


def s_kmse_weights(n: int, lam: float) -> NDArray[np.float64]:
    """Weights 1/(n(1+lam)); ``lam = inf`` gives the zero function."""
    if not lam >= 0:
        raise InputError(f"shrinkage parameter must be non-negative, got {lam}")
    if np.isinf(lam):
        return np.zeros(n)
    return np.full(n, 1.0 / (n * (1.0 + lam)))


def s_kmse(X: ArrayLike, kernel: KernelSpec, lam: float) -> KernelMeanEstimate:
    X = as_data_matrix(X)
    return KernelMeanEstimate(X, s_kmse_weights(X.shape[0], lam), kernel)


def shrinkage_amount(lam: float) -> float:
    """alpha = lam / (1 + lam), with alpha = 1 at lam = inf."""
    return 1.0 if np.isinf(lam) else lam / (1.0 + lam)


def _as_decomposition(K: GramLike) -> SpectralDecomposition:
    return K if isinstance(K, SpectralDecomposition) else sym_eig(K)


def f_kmse(K: GramLike, lam: float) -> NDArray[np.float64]:
    """F-KMSE weights, the solution of (K + lam I) beta = K 1_n / n.

    A dense Gram matrix is solved directly; a :class:`SpectralDecomposition`
    goes through :func:`shifted_solve`.  The two routes are independent, which
    the tests rely on.
    """
    if not lam >= 0 or not np.isfinite(lam):
        raise InputError(f"shrinkage parameter must be finite and non-negative, got {lam}")
    if isinstance(K, SpectralDecomposition):
        return shifted_solve(K, lam, K.matvec(uniform_weights(K.n)))
    K = np.asarray(K, dtype=float)
    n = K.shape[0]
    rhs = K @ uniform_weights(n)
    try:
        return solve(K + lam * np.eye(n), rhs, assume_a="sym")
    except LinAlgError as exc:
        raise SingularSystemError(f"K + {lam} I is singular") from exc


def filter_factors(dec: SpectralDecomposition, lam: float) -> NDArray[np.float64]:
    """Per-mode shrinkage gamma_i / (gamma_i + lam)."""
    if not lam > 0:
        raise InputError(f"filter factors need lam > 0, got {lam}")
    return dec.eigvals / (dec.eigvals + lam)


def f_kmse_spectral(dec: SpectralDecomposition, lam: float) -> NDArray[np.float64]:
    """F-KMSE weights as a spectral filter.

    beta = sum_i u_i (gamma_i + lam)^-1 u_i^T K 1_n, and since
    u_i^T K 1_n = gamma_i u_i^T 1_n this is sum_i f_i u_i u_i^T 1_n with
    filter factors f_i = gamma_i / (gamma_i + lam).
    """
    U = dec.eigvecs
    return U @ (filter_factors(dec, lam) * (U.T @ uniform_weights(dec.n)))


def spectral_coefficients(dec: SpectralDecomposition, beta: ArrayLike) -> NDArray[np.float64]:
    """Coordinates <sum_j beta_j phi(x_j), v_i> along the empirical covariance eigenfunctions.

    With v_i = gamma_i^{-1/2} sum_j u_ij phi(x_j) this is sqrt(gamma_i) u_i^T beta;
    null modes get coordinate 0.
    """
    return np.sqrt(dec.eigvals) * (dec.eigvecs.T @ np.asarray(beta, dtype=float))


def f_kmse_estimate(X: ArrayLike, kernel: KernelSpec, lam: float, K: GramLike | None = None) -> KernelMeanEstimate:
    X = as_data_matrix(X)
    dec = _as_decomposition(gram(kernel, X) if K is None else K)
    return KernelMeanEstimate(X, f_kmse_spectral(dec, lam), kernel)


def _check_same_kernel(a: KernelMeanEstimate, b: KernelMeanEstimate):
    if a.kernel != b.kernel:
        raise InputError(f"kernel mismatch: {a.kernel} vs {b.kernel}")
    if a.points.shape[1] != b.points.shape[1]:
        raise InputError("estimates live on inputs of different dimension")


def shrink_toward(
    estimate: KernelMeanEstimate, target: KernelMeanEstimate | None, alpha: float
) -> KernelMeanEstimate:
    """alpha * target + (1 - alpha) * estimate, as a merged expansion.

    ``target=None`` is the zero function.  Coincident support points are
    merged by summing their weights, keeping first-appearance order.
    """
    if not 0.0 <= alpha < 1.0:
        raise InputError(f"alpha must lie in [0, 1), got {alpha}")
    if alpha == 0.0:
        return estimate
    if target is None:
        return KernelMeanEstimate(estimate.points, (1.0 - alpha) * estimate.weights, estimate.kernel)
    _check_same_kernel(estimate, target)
    pts = np.vstack([estimate.points, target.points])
    w = np.concatenate([(1.0 - alpha) * estimate.weights, alpha * target.weights])
    # +0.0 folds -0.0 into 0.0 so the byte keys agree
    keys = [row.tobytes() for row in pts + 0.0]
    order: dict[bytes, int] = {}
    for i, key in enumerate(keys):
        order.setdefault(key, i)
    first = np.array(list(order.values()))
    slot = {key: j for j, key in enumerate(order)}
    merged = np.zeros(first.shape[0])
    np.add.at(merged, [slot[key] for key in keys], w)
    return KernelMeanEstimate(pts[first], merged, estimate.kernel)


def rkhs_inner(a: KernelMeanEstimate, b: KernelMeanEstimate) -> float:
    _check_same_kernel(a, b)
    return float(a.weights @ cross_gram(a.kernel, a.points, b.points) @ b.weights)


def rkhs_dist_sq(a: KernelMeanEstimate, b: KernelMeanEstimate) -> float:
    """Squared RKHS distance, clamped at zero against round-off."""
    d = rkhs_inner(a, a) - 2.0 * rkhs_inner(a, b) + rkhs_inner(b, b)
    return max(d, 0.0)
