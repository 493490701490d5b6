"""Symmetric eigendecompositions and the solves built on them."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from kmshrink._errors import DegenerateGramError, InputError, NumericalError, SingularSystemError

SYMMETRY_RTOL = 1e-10
CLAMP_RTOL = 1e-12
RANK_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """M = U diag(gamma) U^T with eigenvalues sorted in descending order."""

    eigvecs: NDArray[np.float64]
    eigvals: NDArray[np.float64]

    @property
    def n(self) -> int:
        return self.eigvals.shape[0]

    @property
    def gamma_max(self) -> float:
        return float(self.eigvals[0]) if self.n else 0.0

    def rank_mask(self, rtol: float = RANK_RTOL) -> NDArray[np.bool_]:
        """Modes whose eigenvalue exceeds ``rtol * gamma_max``."""
        gmax = self.gamma_max
        if gmax <= 0.0:
            return np.zeros(self.n, dtype=bool)
        return self.eigvals > rtol * gmax

    def rank(self, rtol: float = RANK_RTOL) -> int:
        return int(self.rank_mask(rtol).sum())

    def smallest_nonzero(self, rtol: float = RANK_RTOL) -> float:
        mask = self.rank_mask(rtol)
        if not mask.any():
            raise DegenerateGramError("matrix is numerically zero")
        return float(self.eigvals[mask].min())

    def reconstruct(self) -> NDArray[np.float64]:
        U = self.eigvecs
        return (U * self.eigvals) @ U.T

    def matvec(self, v: ArrayLike) -> NDArray[np.float64]:
        U = self.eigvecs
        return U @ (self.eigvals * (U.T @ np.asarray(v, dtype=float)))


def _fix_signs(U: NDArray) -> NDArray:
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs


def sym_eig(M: ArrayLike) -> SpectralDecomposition:
    """Eigendecomposition of a symmetric matrix.

    The input is symmetrised as (M + M^T)/2 after checking it is symmetric to
    ``SYMMETRY_RTOL``.  Eigenvalues with magnitude below
    ``1e-12 * max(gamma_max, 1)`` are set to exactly zero, so a PSD input comes
    back with non-negative eigenvalues while genuinely negative eigenvalues of
    an indefinite input are kept.  Each eigenvector is signed so that its
    largest-magnitude entry is positive.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InputError(f"expected a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise InputError("matrix contains non-finite entries")
    scale = max(np.abs(M).max(initial=0.0), np.finfo(float).tiny)
    if np.abs(M - M.T).max(initial=0.0) > SYMMETRY_RTOL * scale:
        raise InputError("matrix is not symmetric")
    S = 0.5 * (M + M.T)
    try:
        w, U = np.linalg.eigh(S)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigh did not converge (cond ~ {np.linalg.cond(S):.3g})") from exc
    w = w[::-1].copy()
    U = _fix_signs(U[:, ::-1])
    eps = CLAMP_RTOL * max(float(np.abs(w).max(initial=0.0)), 1.0)
    w[np.abs(w) < eps] = 0.0
    return SpectralDecomposition(U, w)


def shifted_solve(dec: SpectralDecomposition, lam: float, b: ArrayLike) -> NDArray[np.float64]:
    """Solve (M + lam I) z = b using the decomposition of M."""
    if lam < 0 or not np.isfinite(lam):
        raise InputError(f"shift must be a finite non-negative number, got {lam}")
    denom = dec.eigvals + lam
    if np.any(denom == 0.0):
        raise SingularSystemError(f"M + {lam} I is singular")
    U = dec.eigvecs
    b = np.asarray(b, dtype=float)
    return U @ ((U.T @ b) / (denom if b.ndim == 1 else denom[:, None]))


@dataclass(frozen=True, eq=False)
class GeneralizedKpca:
    """Solution of Kc B Kc a = d Kc a on the range of Kc.

    ``reduced`` holds the eigenpairs (w, d) of the symmetric reduced problem;
    ``coefficients`` has columns a_j = U Gamma^{-1/2} w_j with a_j^T Kc a_k = delta_jk.
    """

    reduced: SpectralDecomposition
    coefficients: NDArray[np.float64]

    @property
    def eigvals(self) -> NDArray[np.float64]:
        return self.reduced.eigvals


def generalized_kpca_eig(Kc: ArrayLike, weights: ArrayLike, *, rank_rtol: float = RANK_RTOL) -> GeneralizedKpca:
    """Weighted kernel PCA eigenproblem ``Kc diag(weights) Kc A = Kc A D``."""
    dec = sym_eig(Kc)
    weights = np.asarray(weights, dtype=float).ravel()
    if weights.shape[0] != dec.n or not np.all(np.isfinite(weights)):
        raise InputError("weights must be a finite vector matching the Gram size")
    mask = dec.rank_mask(rank_rtol)
    if not mask.any():
        raise DegenerateGramError("degenerate centered Gram")
    U = dec.eigvecs[:, mask]
    root = np.sqrt(dec.eigvals[mask])
    W = root[:, None] * ((U.T * weights) @ U) * root[None, :]
    red = sym_eig(W)
    A = (U / root) @ red.eigvecs
    return GeneralizedKpca(red, A)
