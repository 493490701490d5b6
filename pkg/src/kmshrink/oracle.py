"""Gaussian-mixture world in which the true kernel mean is known in closed form.

Data follow x ~ sum_i pi_i N(theta_i, Sigma_i) + eps with eps ~ N(0, s2 I), so
each component is Gaussian with covariance C_i = Sigma_i + s2 I.  For the
four kernel families the kernel mean mu(y) = E k(x, y), its squared norm
E k(x, x') and the diagonal moment E k(x, x) reduce to Gaussian moment
identities, which makes the RKHS loss of any weighted estimate exact.

The one gap is E (x.x' + 1)^3 (the squared norm under POLY3); it is only
available by Monte Carlo.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from kmshrink._errors import InputError
from kmshrink.estimators import KernelMeanEstimate, rkhs_inner
from kmshrink.kernels import KernelFamily, KernelSpec, as_data_matrix, gram
from kmshrink.spectral import sym_eig


class UnsupportedModeError(InputError):
    """Exact evaluation requested where only Monte Carlo is available."""


@dataclass(frozen=True)
class ProtocolConfig:
    d: int = 30
    components: int = 4
    pi: tuple[float, ...] = (0.05, 0.3, 0.4, 0.25)
    theta_range: tuple[float, float] = (-10.0, 10.0)
    wishart_scale: float = 2.0
    wishart_df: int = 7
    noise_var: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "pi", tuple(float(p) for p in self.pi))
        object.__setattr__(self, "theta_range", tuple(float(t) for t in self.theta_range))
        if self.d < 1 or self.components < 1:
            raise InputError("d and components must be positive")
        if len(self.pi) != self.components:
            raise InputError(f"pi has {len(self.pi)} entries for {self.components} components")
        if min(self.pi) < 0 or abs(sum(self.pi) - 1.0) > 1e-12:
            raise InputError("pi must be non-negative and sum to one")
        lo, hi = self.theta_range
        if not lo < hi:
            raise InputError("theta_range must be increasing")
        if self.wishart_df < 1 or not self.wishart_scale > 0 or self.noise_var < 0:
            raise InputError("invalid Wishart or noise parameters")

    def to_dict(self) -> dict[str, Any]:
        return {
            "d": self.d,
            "components": self.components,
            "pi": list(self.pi),
            "theta_range": list(self.theta_range),
            "wishart_scale": self.wishart_scale,
            "wishart_df": self.wishart_df,
            "noise_var": self.noise_var,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ProtocolConfig":
        extra = set(data) - set(cls.__dataclass_fields__)
        if extra:
            raise InputError(f"unknown protocol settings: {sorted(extra)}")
        return cls(**data)


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    """Mixture weights, means (c, d), covariances (c, d, d) and isotropic noise.

    ``factors[i]`` satisfies factors[i] @ factors[i].T == covariances[i] and is
    what :func:`sample` draws through; it is derived if not given.
    """

    weights: NDArray[np.float64]
    means: NDArray[np.float64]
    covariances: NDArray[np.float64]
    noise_var: float = 0.0
    factors: tuple[NDArray[np.float64], ...] = field(default=())

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).ravel()
        mu = np.atleast_2d(np.asarray(self.means, dtype=float))
        cov = np.asarray(self.covariances, dtype=float)
        c, d = mu.shape
        if cov.shape != (c, d, d):
            raise InputError(f"covariances must have shape {(c, d, d)}, got {cov.shape}")
        if w.shape[0] != c or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise InputError("mixture weights must be non-negative, one per component, summing to one")
        if self.noise_var < 0:
            raise InputError("noise variance must be non-negative")
        if not np.allclose(cov, np.swapaxes(cov, 1, 2), rtol=0, atol=1e-10 * max(1.0, np.abs(cov).max(initial=0))):
            raise InputError("covariances must be symmetric")
        factors = tuple(np.asarray(f, dtype=float) for f in self.factors) or tuple(_psd_factor(S) for S in cov)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "covariances", cov)
        object.__setattr__(self, "noise_var", float(self.noise_var))
        object.__setattr__(self, "factors", factors)

    @property
    def n_components(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def effective_covariances(self) -> NDArray[np.float64]:
        """C_i = Sigma_i + noise_var * I."""
        return self.covariances + self.noise_var * np.eye(self.dim)[None]

    @property
    def mean(self) -> NDArray[np.float64]:
        return self.weights @ self.means

    def permuted(self, order: Sequence[int]) -> "GaussianMixture":
        order = list(order)
        return GaussianMixture(
            self.weights[order], self.means[order], self.covariances[order], self.noise_var,
            tuple(self.factors[i] for i in order),
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "covariances": self.covariances.tolist(),
            "noise_var": self.noise_var,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "GaussianMixture":
        return cls(
            np.asarray(data["weights"]), np.asarray(data["means"]),
            np.asarray(data["covariances"]), float(data.get("noise_var", 0.0)),
        )


def _psd_factor(S: NDArray) -> NDArray:
    dec = sym_eig(S)
    keep = dec.eigvals > 0
    return dec.eigvecs[:, keep] * np.sqrt(dec.eigvals[keep])


def draw_mixture(config: ProtocolConfig, rng: np.random.Generator) -> GaussianMixture:
    """Random mixture: uniform means in the box, Wishart(scale I, df) covariances.

    Each covariance is the sum of df outer products g g^T with
    g ~ N(0, scale I), so E Sigma = df * scale * I and rank(Sigma) <= df even
    when df < d.
    """
    d, c = config.d, config.components
    lo, hi = config.theta_range
    means = rng.uniform(lo, hi, size=(c, d))
    factors = tuple(math.sqrt(config.wishart_scale) * rng.standard_normal((d, config.wishart_df)) for _ in range(c))
    covs = np.stack([G @ G.T for G in factors])
    return GaussianMixture(np.asarray(config.pi), means, covs, config.noise_var, factors)


def sample(mix: GaussianMixture, n: int, rng: np.random.Generator) -> NDArray[np.float64]:
    """Draw n points: component ~ pi, then N(theta, Sigma), then additive noise."""
    if n < 1:
        raise InputError("sample size must be positive")
    comp = rng.choice(mix.n_components, size=n, p=mix.weights)
    X = mix.means[comp].copy()
    for i, G in enumerate(mix.factors):
        idx = np.flatnonzero(comp == i)
        if idx.size and G.shape[1]:
            X[idx] += rng.standard_normal((idx.size, G.shape[1])) @ G.T
    if mix.noise_var > 0:
        X += math.sqrt(mix.noise_var) * rng.standard_normal(X.shape)
    return X


def _rbf_gauss_terms(S: NDArray, diffs: NDArray, bw: float) -> NDArray:
    """bw^{d/2} det(S + bw I)^{-1/2} exp(-diff^T (S + bw I)^{-1} diff / 2) per row of diffs."""
    dec = sym_eig(S)
    vals = dec.eigvals + bw
    log_norm = -0.5 * np.sum(np.log(vals / bw))
    proj = diffs @ dec.eigvecs
    return np.exp(log_norm - 0.5 * np.sum(proj**2 / vals, axis=1))


def true_mean_eval(mix: GaussianMixture, kernel: KernelSpec, Y: ArrayLike) -> NDArray[np.float64]:
    """E_{x ~ P} k(x, y) for each row y of ``Y``.

    With m = theta^T y and s2 = y^T C y per component (x^T y ~ N(m, s2)):
    LIN m, POLY2 (m+1)^2 + s2, POLY3 (m+1)^3 + 3 (m+1) s2, and RBF a
    Gaussian convolution.
    """
    Y = as_data_matrix(Y, "Y")
    if Y.shape[1] != mix.dim:
        raise InputError(f"points have {Y.shape[1]} columns, mixture has dimension {mix.dim}")
    fam = kernel.family
    C = mix.effective_covariances
    if fam is KernelFamily.LIN:
        return Y @ mix.mean
    if fam is KernelFamily.RBF:
        out = np.zeros(Y.shape[0])
        for p, theta, Ci in zip(mix.weights, mix.means, C):
            out += p * _rbf_gauss_terms(Ci, Y - theta, kernel.bandwidth_sq)
        return out
    m1 = Y @ mix.means.T + 1.0
    s2 = np.einsum("mj,cjk,mk->mc", Y, C, Y)
    if fam is KernelFamily.POLY2:
        vals = m1**2 + s2
    else:
        vals = m1**3 + 3.0 * m1 * s2
    return vals @ mix.weights


def true_mean_sq_norm(mix: GaussianMixture, kernel: KernelSpec) -> float:
    """|mu|^2 = E k(x, x') for independent x, x' ~ P (exact; not for POLY3)."""
    fam = kernel.family
    pi, th, C = mix.weights, mix.means, mix.effective_covariances
    if fam is KernelFamily.LIN:
        mbar = mix.mean
        return float(mbar @ mbar)
    if fam is KernelFamily.POLY2:
        inner = th @ th.T
        cross = np.einsum("ia,jab,ib->ij", th, C, th)
        trace = np.einsum("iab,jba->ij", C, C)
        E = (inner + 1.0) ** 2 + cross + cross.T + trace
        return float(pi @ E @ pi)
    if fam is KernelFamily.RBF:
        total = 0.0
        for i in range(mix.n_components):
            for j in range(mix.n_components):
                diff = (th[i] - th[j])[None, :]
                total += pi[i] * pi[j] * _rbf_gauss_terms(C[i] + C[j], diff, kernel.bandwidth_sq)[0]
        return float(total)
    raise UnsupportedModeError("no closed form for |mu|^2 under POLY3; use Monte Carlo")


def diag_expectation(mix: GaussianMixture, kernel: KernelSpec) -> float:
    """E k(x, x) for x ~ P.

    Polynomial kernels need moments of the quadratic form Q = |x|^2, whose
    cumulants for x ~ N(theta, C) are
    kappa_r = 2^{r-1} (r-1)! (tr C^r + r theta^T C^{r-1} theta).
    """
    fam = kernel.family
    if fam is KernelFamily.RBF:
        return 1.0
    total = 0.0
    for p, th, Ci in zip(mix.weights, mix.means, mix.effective_covariances):
        C2 = Ci @ Ci
        k1 = np.trace(Ci) + th @ th
        k2 = 2.0 * (np.trace(C2) + 2.0 * th @ Ci @ th)
        k3 = 8.0 * (np.trace(C2 @ Ci) + 3.0 * th @ C2 @ th)
        if fam is KernelFamily.LIN:
            val = k1
        else:
            m = k1 + 1.0
            val = k2 + m**2 if fam is KernelFamily.POLY2 else k3 + 3.0 * k2 * m + m**3
        total += p * val
    return float(total)


@dataclass(frozen=True)
class MonteCarloEstimate:
    value: float
    stderr: float
    samples: int


def _mc(values: NDArray) -> MonteCarloEstimate:
    return MonteCarloEstimate(float(values.mean()), float(values.std(ddof=1) / math.sqrt(values.size)), values.size)


def _paired_kernel(kernel: KernelSpec, X: NDArray, Y: NDArray) -> NDArray:
    if kernel.family is KernelFamily.RBF:
        return np.exp(-np.sum((X - Y) ** 2, axis=1) / (2.0 * kernel.bandwidth_sq))
    inner = np.einsum("ij,ij->i", X, Y)
    deg = kernel.family.degree
    return inner if deg == 1 else (inner + 1.0) ** deg


def mc_mean_eval(mix: GaussianMixture, kernel: KernelSpec, y: ArrayLike, samples: int, rng: np.random.Generator) -> MonteCarloEstimate:
    y = np.asarray(y, dtype=float).ravel()
    X = sample(mix, samples, rng)
    return _mc(_paired_kernel(kernel, X, np.broadcast_to(y, X.shape)))


def mc_sq_norm(mix: GaussianMixture, kernel: KernelSpec, samples: int, rng: np.random.Generator) -> MonteCarloEstimate:
    """E k(x, x') from ``samples`` independent pairs."""
    X = sample(mix, samples, rng)
    Xp = sample(mix, samples, rng)
    return _mc(_paired_kernel(kernel, X, Xp))


def mc_diag_expectation(mix: GaussianMixture, kernel: KernelSpec, samples: int, rng: np.random.Generator) -> MonteCarloEstimate:
    X = sample(mix, samples, rng)
    return _mc(_paired_kernel(kernel, X, X))


def _sq_norm_or_given(mix: GaussianMixture, kernel: KernelSpec, sq_norm: float | None) -> float:
    return true_mean_sq_norm(mix, kernel) if sq_norm is None else float(sq_norm)


def loss(
    beta: ArrayLike,
    X: ArrayLike,
    kernel: KernelSpec,
    mix: GaussianMixture,
    *,
    sq_norm: float | None = None,
    K: ArrayLike | None = None,
) -> float:
    """|sum_i beta_i k(x_i, .) - mu|^2, clamped at zero.

    ``sq_norm`` overrides |mu|^2 (required for POLY3, where the caller supplies
    a Monte-Carlo value); ``K`` reuses a precomputed Gram of ``X``.
    """
    X = as_data_matrix(X)
    beta = np.asarray(beta, dtype=float).ravel()
    if beta.shape[0] != X.shape[0]:
        raise InputError("weight vector does not match the sample")
    K = gram(kernel, X) if K is None else np.asarray(K, dtype=float)
    val = beta @ K @ beta - 2.0 * beta @ true_mean_eval(mix, kernel, X) + _sq_norm_or_given(mix, kernel, sq_norm)
    return max(float(val), 0.0)


def risk_delta(mix: GaussianMixture, kernel: KernelSpec, n: int, *, sq_norm: float | None = None) -> float:
    """Risk of the empirical kernel mean: (E k(x,x) - E k(x,x')) / n."""
    if n < 1:
        raise InputError("sample size must be positive")
    return max(diag_expectation(mix, kernel) - _sq_norm_or_given(mix, kernel, sq_norm), 0.0) / n


@dataclass(frozen=True)
class OracleShrinkage:
    alpha: float
    delta: float
    target_dist_sq: float
    risk_gap: float


def target_dist_sq(mix: GaussianMixture, kernel: KernelSpec, fstar: KernelMeanEstimate | None, *, sq_norm: float | None = None) -> float:
    """|f* - mu|^2 for f* given as a finite expansion (None is the zero function)."""
    mu2 = _sq_norm_or_given(mix, kernel, sq_norm)
    if fstar is None:
        return mu2
    if fstar.kernel != kernel:
        raise InputError("target uses a different kernel")
    val = rkhs_inner(fstar, fstar) - 2.0 * float(fstar.weights @ true_mean_eval(mix, kernel, fstar.points)) + mu2
    return max(val, 0.0)


def oracle_alpha(
    mix: GaussianMixture,
    kernel: KernelSpec,
    n: int,
    fstar: KernelMeanEstimate | None = None,
    *,
    sq_norm: float | None = None,
) -> OracleShrinkage:
    """Risk-optimal shrinkage toward f*: alpha = Delta / (Delta + |f* - mu|^2).

    ``risk_gap`` is the risk change of the shrunk estimator relative to the
    empirical mean, -Delta^2 / (Delta + |f* - mu|^2).
    """
    delta = risk_delta(mix, kernel, n, sq_norm=sq_norm)
    dist = target_dist_sq(mix, kernel, fstar, sq_norm=sq_norm)
    denom = delta + dist
    if denom == 0.0:
        return OracleShrinkage(0.0, 0.0, dist, 0.0)
    return OracleShrinkage(delta / denom, delta, dist, -(delta**2) / denom)
