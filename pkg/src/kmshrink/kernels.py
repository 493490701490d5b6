"""Kernel evaluation, Gram matrices and the median bandwidth heuristic.

Four families are supported::

    LIN    k(x, y) = x.y
    POLY2  k(x, y) = (x.y + 1)^2
    POLY3  k(x, y) = (x.y + 1)^3
    RBF    k(x, y) = exp(-|x - y|^2 / (2 * bandwidth_sq))
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Mapping

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.spatial.distance import cdist, pdist, squareform

from kmshrink._errors import DegenerateSampleError, InputError


class KernelFamily(str, Enum):
    LIN = "lin"
    POLY2 = "poly2"
    POLY3 = "poly3"
    RBF = "rbf"

    @property
    def degree(self) -> int | None:
        return {"lin": 1, "poly2": 2, "poly3": 3}.get(self.value)


@dataclass(frozen=True)
class KernelSpec:
    """A kernel family plus, for RBF, the squared bandwidth."""

    family: KernelFamily
    bandwidth_sq: float | None = None

    def __post_init__(self):
        family = KernelFamily(self.family)
        object.__setattr__(self, "family", family)
        if family is KernelFamily.RBF:
            bw = self.bandwidth_sq
            if bw is None or not np.isfinite(bw) or bw <= 0:
                raise InputError(f"RBF kernel needs bandwidth_sq > 0, got {bw!r}")
            object.__setattr__(self, "bandwidth_sq", float(bw))
        else:
            object.__setattr__(self, "bandwidth_sq", None)

    @classmethod
    def lin(cls) -> "KernelSpec":
        return cls(KernelFamily.LIN)

    @classmethod
    def poly(cls, degree: int) -> "KernelSpec":
        return cls({2: KernelFamily.POLY2, 3: KernelFamily.POLY3}[degree])

    @classmethod
    def rbf(cls, bandwidth_sq: float) -> "KernelSpec":
        return cls(KernelFamily.RBF, bandwidth_sq)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"family": self.family.value}
        if self.family is KernelFamily.RBF:
            out["bandwidth_sq"] = self.bandwidth_sq
        return out

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], sample: ArrayLike | None = None) -> "KernelSpec":
        """Build a spec from its config form.

        ``{"family": "rbf", "bandwidth": "median"}`` resolves the bandwidth
        with :func:`median_heuristic` on ``sample``.
        """
        try:
            family = KernelFamily(str(data["family"]).lower())
        except (KeyError, ValueError) as exc:
            raise InputError(f"unknown kernel config {dict(data)!r}") from exc
        if family is not KernelFamily.RBF:
            return cls(family)
        if "bandwidth_sq" in data:
            return cls(family, float(data["bandwidth_sq"]))
        if data.get("bandwidth", "median") == "median":
            if sample is None:
                raise InputError("median bandwidth requires a sample to resolve against")
            return cls(family, median_heuristic(sample))
        raise InputError(f"unrecognised RBF bandwidth setting {data.get('bandwidth')!r}")


def as_data_matrix(X: ArrayLike, name: str = "X") -> NDArray[np.float64]:
    """Validate and coerce to an (n, d) float array; 1-D input is one column."""
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InputError(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} contains non-finite entries")
    return arr


def _apply(spec: KernelSpec, inner: NDArray, sqdist: NDArray | None) -> NDArray:
    fam = spec.family
    if fam is KernelFamily.LIN:
        return inner
    if fam is KernelFamily.POLY2:
        return (inner + 1.0) ** 2
    if fam is KernelFamily.POLY3:
        return (inner + 1.0) ** 3
    return np.exp(-sqdist / (2.0 * spec.bandwidth_sq))


def eval_kernel(spec: KernelSpec, x: ArrayLike, y: ArrayLike) -> float:
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise InputError(f"dimension mismatch: {x.shape[0]} vs {y.shape[0]}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise InputError("kernel arguments must be finite")
    if spec.family is KernelFamily.RBF:
        diff = x - y
        return math.exp(-float(diff @ diff) / (2.0 * spec.bandwidth_sq))
    return float(_apply(spec, np.asarray(float(x @ y)), None))


def gram(spec: KernelSpec, X: ArrayLike) -> NDArray[np.float64]:
    """Gram matrix of the rows of ``X``; exactly symmetric by mirroring."""
    X = as_data_matrix(X)
    if spec.family is KernelFamily.RBF:
        sq = squareform(pdist(X, "sqeuclidean")) if X.shape[0] > 1 else np.zeros((1, 1))
        K = _apply(spec, None, sq)
    else:
        K = _apply(spec, X @ X.T, None)
    upper = np.triu(K)
    return upper + np.triu(K, 1).T


def cross_gram(spec: KernelSpec, X_test: ArrayLike, X_train: ArrayLike) -> NDArray[np.float64]:
    """Matrix with entry (i, j) = k(x_test_i, x_train_j)."""
    Z = as_data_matrix(X_test, "X_test")
    X = as_data_matrix(X_train, "X_train")
    if Z.shape[1] != X.shape[1]:
        raise InputError(f"dimension mismatch: {Z.shape[1]} vs {X.shape[1]} columns")
    if spec.family is KernelFamily.RBF:
        return _apply(spec, None, cdist(Z, X, "sqeuclidean"))
    return _apply(spec, Z @ X.T, None)


def kernel_diag(spec: KernelSpec, X: ArrayLike) -> NDArray[np.float64]:
    """k(x_i, x_i) for every row, without forming the Gram matrix."""
    X = as_data_matrix(X)
    if spec.family is KernelFamily.RBF:
        return np.ones(X.shape[0])
    return _apply(spec, np.einsum("ij,ij->i", X, X), None)


def median_heuristic(X: ArrayLike) -> float:
    """Lower median of squared pairwise distances over pairs i < j."""
    X = as_data_matrix(X)
    if X.shape[0] < 2:
        raise InputError("median heuristic needs at least two points")
    d = np.sort(pdist(X, "sqeuclidean"))
    med = float(d[(d.size - 1) // 2])
    if med <= 0.0:
        raise DegenerateSampleError("degenerate sample: median squared distance is zero")
    return med
