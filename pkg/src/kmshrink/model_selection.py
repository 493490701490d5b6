"""Leave-one-out selection of the shrinkage parameter.

The LOOCV score of a shrinkage estimator is the mean squared RKHS distance
between each held-out feature vector phi(x_i) and the estimate fitted on the
remaining points.  For S-KMSE the score is a quadratic in the shrinkage
amount alpha with a closed-form minimiser.  For F-KMSE it reduces, after one
eigendecomposition K = U diag(gamma) U^T, to an O(n^2) expression in the
full-data weights; :func:`f_kmse_loocv_naive` recomputes it from the
leave-one-out fixed point without that algebra.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Any, Mapping

import numpy as np
from numpy.typing import ArrayLike, NDArray

from kmshrink._errors import DegenerateGramError, InputError, NumericalError, SingularSystemError
from kmshrink.estimators import GramLike, _as_decomposition, f_kmse_spectral, uniform_weights
from kmshrink.spectral import RANK_RTOL, SpectralDecomposition

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class GramStats:
    """rho = mean of all Gram entries, varrho = mean of the diagonal."""

    rho: float
    varrho: float
    n: int


def gram_stats(K: ArrayLike) -> GramStats:
    K = np.asarray(K, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1] or K.shape[0] < 1:
        raise InputError(f"expected a square Gram matrix, got shape {K.shape}")
    n = K.shape[0]
    return GramStats(rho=float(K.sum()) / n**2, varrho=float(np.trace(K)) / n, n=n)


def s_kmse_loocv_poly(stats: GramStats, alpha: float | NDArray) -> float | NDArray:
    """LOOCV score of S-KMSE as a function of the shrinkage amount alpha."""
    n, rho, varrho = stats.n, stats.rho, stats.varrho
    if n < 2:
        raise InputError("leave-one-out needs n >= 2")
    a = np.asarray(alpha, dtype=float)
    val = ((-(n**2) + a**2 * n**2 + 2 * a * n - 2 * a**2 * n) * rho + (n**2 - 2 * a * n + a**2) * varrho) / (n - 1) ** 2
    return float(val) if np.ndim(val) == 0 else val


@dataclass(frozen=True)
class SKmseChoice:
    """Analytic LOOCV optimum of S-KMSE.

    ``alpha`` is clipped to [0, 1]; ``alpha == 1`` (``lam == inf``) means the
    quadratic is minimised at or beyond full shrinkage and the estimate is the
    zero function.  ``alpha_raw`` is the unclipped stationary point.
    """

    lam: float
    alpha: float
    alpha_raw: float
    score: float
    stats: GramStats

    @property
    def full_shrinkage(self) -> bool:
        return math.isinf(self.lam)


def s_kmse_select(stats: GramStats) -> SKmseChoice:
    n, rho, varrho = stats.n, stats.rho, stats.varrho
    if n < 2:
        raise InputError("leave-one-out needs n >= 2")
    if not (math.isfinite(rho) and math.isfinite(varrho)):
        raise InputError("Gram statistics must be finite")
    num = varrho - rho
    den_alpha = (n - 2) * rho + varrho / n
    if num == 0.0:
        alpha_raw = 0.0
    elif den_alpha <= 0.0:
        raise DegenerateGramError(f"LOOCV quadratic is not convex (rho={rho}, varrho={varrho})")
    else:
        alpha_raw = num / den_alpha
    alpha = min(max(alpha_raw, 0.0), 1.0)
    if alpha >= 1.0:
        lam = math.inf
    else:
        den_lam = (n - 1) * rho + varrho / n - varrho
        lam = 0.0 if num == 0.0 or alpha == 0.0 else num / den_lam
    return SKmseChoice(lam=lam, alpha=alpha, alpha_raw=alpha_raw, score=s_kmse_loocv_poly(stats, alpha), stats=stats)


def _retained(dec: SpectralDecomposition) -> tuple[NDArray, NDArray]:
    mask = dec.rank_mask(RANK_RTOL)
    if not mask.any():
        raise DegenerateGramError("all Gram eigenvalues are below the rank threshold")
    return dec.eigvecs[:, mask], dec.eigvals[mask]


def loocv_work(n: int, r: int) -> int:
    """Scalar operations spent by one :func:`f_kmse_loocv_score` call.

    Beyond the shared decomposition: the weights (2nr + 3r), the residual
    table (subtract, square, weight, reduce: 4nr) and the per-mode factors (6r).
    """
    return 6 * n * r + 9 * r


def f_kmse_loocv_score(K: GramLike, lam: float) -> float:
    """F-KMSE LOOCV score from the full-data solution.

    LOOCV = (1/n) sum_i r_i^T C r_i with r_i = K beta - K[:, i] and
    C = M^+ K M^+, M = K - K (K + lam I)^-1 K / n.  In the eigenbasis,
    U^T r_i = gamma * (U^T beta - U[i, :]) and C is diagonal, so each term is
    sum_j gamma_j (b_j - U_ij)^2 / (1 - gamma_j / (n (gamma_j + lam)))^2.
    Null modes contribute nothing (pseudo-inverse convention).
    """
    if not lam > 0 or not math.isfinite(lam):
        raise InputError(f"LOOCV needs a finite lam > 0, got {lam}")
    dec = _as_decomposition(K)
    n = dec.n
    if n < 2:
        raise InputError("leave-one-out needs n >= 2")
    U, g = _retained(dec)
    b = (g / (g + lam)) * (U.T @ uniform_weights(n))
    shrink = 1.0 - g / (n * (g + lam))
    weight = g / shrink**2
    resid = (b[None, :] - U) ** 2
    return float((resid @ weight).sum() / n)


def f_kmse_loocv_naive(K: ArrayLike, lam: float) -> float:
    """Brute-force F-KMSE LOOCV via the leave-one-out fixed point.

    For each i the leave-one-out coefficients c solve
    (I - A K / n) c = A (K 1_n - K[:, i] / n) with A = (K + lam I)^-1, i.e. the
    full-data problem with phi(x_i) replaced by the leave-one-out estimate
    itself.  The score is (1/n) sum_i (c^T K c - 2 c^T K[:, i] + K_ii).
    Costs O(n^4); meant as a test oracle.
    """
    K = np.asarray(K, dtype=float)
    n = K.shape[0]
    if n < 2:
        raise InputError("leave-one-out needs n >= 2")
    if not lam > 0:
        raise InputError(f"LOOCV needs lam > 0, got {lam}")
    eye = np.eye(n)
    A = np.linalg.solve(K + lam * eye, eye)
    M = eye - A @ K / n
    K1 = K.sum(axis=1) / n
    total = 0.0
    for i in range(n):
        rhs = A @ (K1 - K[:, i] / n)
        try:
            c = np.linalg.solve(M, rhs)
        except np.linalg.LinAlgError as exc:
            raise SingularSystemError("leave-one-out fixed point is singular") from exc
        total += c @ K @ c - 2.0 * c @ K[:, i] + K[i, i]
    return total / n


def f_kmse_loocv_refit(K: GramLike, lam: float) -> float:
    """F-KMSE LOOCV with each held-out estimate refitted on the other n - 1 points.

    The held-out coefficient is pinned to zero and the remaining ones solve
    (K_-i + lam I) c = K_-i 1 / (n - 1).  Writing A = (K + lam I)^-1, the
    bordered-inverse identity gives c = A r_i - A e_i (A r_i)_i / A_ii with
    r_i = (K 1 - K e_i) / (n - 1).  In the eigenbasis, with
    Q = U^T [c_1 ... c_n], the score is (1/n) sum_ij gamma_j (Q_ji - U_ij)^2,
    which costs O(n^2) per lam.  Unlike :func:`f_kmse_loocv_score`, null
    modes matter here because A is full rank.
    """
    if not lam > 0 or not math.isfinite(lam):
        raise InputError(f"LOOCV needs a finite lam > 0, got {lam}")
    dec = _as_decomposition(K)
    n = dec.n
    if n < 2:
        raise InputError("leave-one-out needs n >= 2")
    U, g = dec.eigvecs, dec.eigvals
    inv = 1.0 / (g + lam)
    col_sums = U.sum(axis=0)
    T = g[:, None] * (col_sums[:, None] - U.T) / (n - 1)
    a_diag = (U**2) @ inv
    ar_diag = np.einsum("ij,j,ji->i", U, inv, T)
    Q = inv[:, None] * (T - U.T * (ar_diag / a_diag)[None, :])
    return float(np.sum(g[:, None] * (Q - U.T) ** 2) / n)


class LoocvMethod(str, Enum):
    S_ANALYTIC = "s_analytic"
    F_CLOSED_FORM = "f_closed_form"
    F_REFIT = "f_refit"
    NAIVE_ORACLE = "naive_oracle"


@dataclass(frozen=True)
class SearchConfig:
    """Log-grid plus golden-section search over lam, bounds relative to gamma_max."""

    grid_size: int = 30
    lower_multiplier: float = 1e-6
    upper_multiplier: float = 1e3
    rel_tol: float = 1e-4

    def __post_init__(self):
        if self.grid_size < 3:
            raise InputError("grid_size must be at least 3")
        if not 0 < self.lower_multiplier < self.upper_multiplier:
            raise InputError("need 0 < lower_multiplier < upper_multiplier")
        if not self.rel_tol > 0:
            raise InputError("rel_tol must be positive")

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "SearchConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(data) - known
        if extra:
            raise InputError(f"unknown search settings: {sorted(extra)}")
        return cls(**data)


@dataclass
class LoocvProfile:
    lambdas: list[float]
    scores: list[float]
    selected_lambda: float
    selected_score: float
    method: LoocvMethod
    work_per_lambda: int = 0
    grid_points: int = 0
    extras: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        out = asdict(self)
        out["method"] = self.method.value
        if math.isinf(self.selected_lambda):
            out["selected_lambda"] = "inf"
        return out


def s_kmse_profile(K: ArrayLike) -> LoocvProfile:
    choice = s_kmse_select(gram_stats(K))
    return LoocvProfile(
        lambdas=[choice.lam],
        scores=[choice.score],
        selected_lambda=choice.lam,
        selected_score=choice.score,
        method=LoocvMethod.S_ANALYTIC,
        work_per_lambda=0,
        extras={"alpha": choice.alpha, "alpha_raw": choice.alpha_raw, "rho": choice.stats.rho, "varrho": choice.stats.varrho},
    )


def _golden_section(f, lo: float, hi: float, tol: float, trace: list[tuple[float, float]]) -> tuple[float, float]:
    """Minimise f on [lo, hi] (log-lambda coordinates) until the bracket is below tol."""
    c = hi - _GOLDEN * (hi - lo)
    d = lo + _GOLDEN * (hi - lo)
    fc, fd = f(c), f(d)
    trace += [(c, fc), (d, fd)]
    while hi - lo > tol:
        if fc <= fd:
            hi, d, fd = d, c, fc
            c = hi - _GOLDEN * (hi - lo)
            fc = f(c)
            trace.append((c, fc))
        else:
            lo, c, fc = c, d, fd
            d = lo + _GOLDEN * (hi - lo)
            fd = f(d)
            trace.append((d, fd))
    return (c, fc) if fc <= fd else (d, fd)


_CRITERIA = {
    LoocvMethod.F_CLOSED_FORM: f_kmse_loocv_score,
    LoocvMethod.F_REFIT: f_kmse_loocv_refit,
}


def f_kmse_select(
    K: GramLike,
    search: SearchConfig | None = None,
    criterion: LoocvMethod | str = LoocvMethod.F_CLOSED_FORM,
) -> LoocvProfile:
    """Minimise an F-KMSE LOOCV score over lam > 0.

    The default criterion is :func:`f_kmse_loocv_score`;
    ``criterion="f_refit"`` switches to :func:`f_kmse_loocv_refit`.  A
    log-spaced grid over [lower, upper] * gamma_max locates the basin, then
    golden-section search in log(lam) between the grid neighbours of the best
    point narrows it to relative tolerance ``rel_tol``.  Every evaluated point
    is kept in the returned profile.
    """
    search = search or SearchConfig()
    criterion = LoocvMethod(criterion)
    if criterion not in _CRITERIA:
        raise InputError(f"{criterion.value} is not an F-KMSE search criterion")
    score = _CRITERIA[criterion]
    dec = _as_decomposition(K)
    if dec.n < 2:
        raise InputError("leave-one-out needs n >= 2")
    gmax = dec.gamma_max
    if not gmax > 0:
        raise DegenerateGramError("Gram matrix is numerically zero")
    grid = np.geomspace(search.lower_multiplier * gmax, search.upper_multiplier * gmax, search.grid_size)
    scores = [score(dec, float(lam)) for lam in grid]
    if not np.all(np.isfinite(scores)):
        raise NumericalError("non-finite LOOCV score on the search grid")
    k = int(np.argmin(scores))
    lo = math.log(grid[max(k - 1, 0)])
    hi = math.log(grid[min(k + 1, len(grid) - 1)])
    trace: list[tuple[float, float]] = []
    t_best, s_best = _golden_section(
        lambda t: score(dec, math.exp(t)), lo, hi, math.log1p(search.rel_tol), trace
    )
    lambdas = [float(x) for x in grid] + [math.exp(t) for t, _ in trace]
    all_scores = [float(s) for s in scores] + [float(s) for _, s in trace]
    best = int(np.argmin(all_scores))
    return LoocvProfile(
        lambdas=lambdas,
        scores=all_scores,
        selected_lambda=lambdas[best],
        selected_score=all_scores[best],
        method=criterion,
        work_per_lambda=loocv_work(dec.n, dec.rank() if criterion is LoocvMethod.F_CLOSED_FORM else dec.n),
        grid_points=len(grid),
    )


def f_kmse_select_weights(
    K: GramLike, search: SearchConfig | None = None, criterion: LoocvMethod | str = LoocvMethod.F_CLOSED_FORM
) -> tuple[NDArray[np.float64], LoocvProfile]:
    dec = _as_decomposition(K)
    profile = f_kmse_select(dec, search, criterion)
    return f_kmse_spectral(dec, profile.selected_lambda), profile
