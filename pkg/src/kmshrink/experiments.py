"""Seeded trial runners for the synthetic comparisons and the KPCA benchmark.

Every trial derives its own generator from ``(master_seed, stream, cell,
trial)`` so results do not depend on execution order or worker count.
Aggregates are pure functions of the stored per-trial records; wall-clock
timings are kept on the records but excluded from the deterministic payload.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from typing import Any, Callable, Iterable, Mapping, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from kmshrink._errors import InputError, KmshrinkError
from kmshrink.estimators import f_kmse_spectral, s_kmse_weights, uniform_weights
from kmshrink.kernels import KernelFamily, KernelSpec, as_data_matrix, gram
from kmshrink.model_selection import LoocvMethod, SearchConfig, f_kmse_select, gram_stats, s_kmse_select
from kmshrink.operators import cose_weights, kpca_fit, kpca_rank, kpca_reconstruction_error
from kmshrink.oracle import ProtocolConfig, draw_mixture, loss, mc_sq_norm, sample, true_mean_sq_norm
from kmshrink.spectral import RANK_RTOL, sym_eig

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1

# stream tags keep the three runners on disjoint seed streams
_LAMBDA_STREAM = 1
_ND_STREAM = 2
_KPCA_STREAM = 3


class Estimator(str, Enum):
    KME = "kme"
    S_KMSE = "s_kmse"
    F_KMSE = "f_kmse"


class SweepAxis(str, Enum):
    LAMBDA = "lambda"
    SAMPLE_SIZE = "sample_size"
    DIMENSION = "dimension"


def _json_float(x: float) -> float | str:
    if math.isnan(x):
        return "nan"
    return ("inf" if x > 0 else "-inf") if math.isinf(x) else x


def trial_seed(master_seed: int, *key: int) -> int:
    """64-bit seed for one trial, derived from the master seed and an integer key."""
    if master_seed < 0:
        raise InputError(f"seed must be non-negative, got {master_seed}")
    state = np.random.SeedSequence([master_seed, *key]).generate_state(1, np.uint64)
    return int(state[0])


def _streams(seed: int, k: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(k)]


@dataclass(frozen=True)
class TrialResult:
    """Loss of one estimator on one trial within one sweep cell.

    ``cell`` holds the sweep coordinates as ``(name, value)`` pairs.
    """

    trial_id: int
    estimator: Estimator
    lambda_used: float
    loss: float
    seed: int
    cell: tuple[tuple[str, Any], ...]
    timing: float = 0.0

    def __post_init__(self):
        if not self.loss >= 0:
            raise InputError(f"loss must be non-negative, got {self.loss}")
        if self.estimator is Estimator.KME and self.lambda_used != 0:
            raise InputError("KME has no shrinkage parameter")

    def to_dict(self) -> dict[str, Any]:
        return {
            "trial_id": self.trial_id,
            "estimator": self.estimator.value,
            "lambda_used": _json_float(self.lambda_used),
            "loss": self.loss,
            "seed": self.seed,
            "cell": dict(self.cell),
        }


@dataclass(frozen=True)
class TrialFailure:
    trial_id: int
    seed: int
    cell: tuple[tuple[str, Any], ...]
    reason: str
    message: str

    def to_dict(self) -> dict[str, Any]:
        return {"trial_id": self.trial_id, "seed": self.seed, "cell": dict(self.cell), "reason": self.reason, "message": self.message}


def _summary(values: NDArray) -> dict[str, Any]:
    if values.size == 0:
        return {"count": 0, "mean": None, "median": None, "p25": None, "p75": None, "std": None}
    p25, med, p75 = np.percentile(values, [25, 50, 75])
    return {
        "count": int(values.size),
        "mean": float(values.mean()),
        "median": float(med),
        "p25": float(p25),
        "p75": float(p75),
        "std": float(values.std(ddof=1)) if values.size > 1 else 0.0,
    }


@dataclass(frozen=True)
class SweepReport:
    """Per-trial records of a sweep plus everything needed to re-aggregate them."""

    axis: SweepAxis
    axis_values: tuple
    cells: tuple[tuple[tuple[str, Any], ...], ...]
    records: tuple[TrialResult, ...]
    failures: tuple[TrialFailure, ...]
    trials: int
    config: Mapping[str, Any] = field(default_factory=dict)

    def losses(self, cell, estimator: Estimator) -> dict[int, float]:
        return {r.trial_id: r.loss for r in self.records if r.cell == cell and r.estimator is estimator}

    def aggregate(self) -> list[dict[str, Any]]:
        """One row per (cell, estimator), recomputed from the records.

        ``win_rate`` is the fraction of paired trials where the estimator's
        loss is strictly below KME's on the same sample.
        """
        rows = []
        for cell in self.cells:
            base = self.losses(cell, Estimator.KME)
            for est in Estimator:
                by_trial = self.losses(cell, est)
                ids = sorted(by_trial)
                vals = np.array([by_trial[i] for i in ids])
                lams = [r.lambda_used for r in self.records if r.cell == cell and r.estimator is est]
                row = {**dict(cell), "estimator": est.value, **_summary(vals)}
                row["failed"] = sum(1 for f in self.failures if f.cell == cell)
                finite = [x for x in lams if math.isfinite(x)]
                row["mean_lambda"] = float(np.mean(finite)) if finite else None
                if est is Estimator.KME:
                    row["win_rate"] = None
                else:
                    paired = [i for i in ids if i in base]
                    row["win_rate"] = float(np.mean([by_trial[i] < base[i] for i in paired])) if paired else None
                rows.append(row)
        return rows

    def mean_loss(self, estimator: Estimator | str, **cell) -> float:
        for row in self.aggregate():
            if row["estimator"] == Estimator(estimator).value and all(row.get(k) == v for k, v in cell.items()):
                return row["mean"]
        raise KeyError(f"no row for {estimator} at {cell}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "axis": self.axis.value,
            "axis_values": list(self.axis_values),
            "trials": self.trials,
            "config": dict(self.config),
            "aggregates": self.aggregate(),
            "records": [r.to_dict() for r in self.records],
            "failures": [f.to_dict() for f in self.failures],
        }

    def timings(self) -> list[dict[str, Any]]:
        return [{"trial_id": r.trial_id, "cell": dict(r.cell), "estimator": r.estimator.value, "seconds": r.timing} for r in self.records]


def _map(fn: Callable, tasks: Sequence, parallelism: int) -> list:
    if parallelism < 1:
        raise InputError(f"parallelism must be at least 1, got {parallelism}")
    if parallelism == 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(fn, tasks))


def _resolve_kernel(spec: Mapping[str, Any] | KernelSpec, X: NDArray) -> KernelSpec:
    return spec if isinstance(spec, KernelSpec) else KernelSpec.from_dict(spec, sample=X)


def _kernel_label(spec: Mapping[str, Any] | KernelSpec) -> str:
    if isinstance(spec, KernelSpec):
        return spec.family.value
    return KernelFamily(str(spec["family"]).lower()).value


def _sq_norm(mix, kernel: KernelSpec, mc_samples: int, rng: np.random.Generator) -> float:
    # no closed form for POLY3; the value is shared by all estimators of a trial
    if kernel.family is KernelFamily.POLY3:
        return mc_sq_norm(mix, kernel, mc_samples, rng).value
    return true_mean_sq_norm(mix, kernel)


def _failure(trial: int, seed: int, cell, exc: Exception) -> TrialFailure:
    log.warning("trial %d at %s failed: %s: %s", trial, dict(cell), type(exc).__name__, exc)
    return TrialFailure(trial, seed, cell, type(exc).__name__, str(exc))


def _collect(outputs: Iterable[tuple[list, list]]) -> tuple[tuple, tuple]:
    recs, fails = [], []
    for r, f in outputs:
        recs.extend(r)
        fails.extend(f)
    return tuple(recs), tuple(fails)


DEFAULT_KERNELS: tuple[dict[str, Any], ...] = (
    {"family": "lin"},
    {"family": "poly2"},
    {"family": "poly3"},
    {"family": "rbf", "bandwidth": "median"},
)


@dataclass(frozen=True)
class LambdaSweepConfig:
    """Fixed-lambda comparison: lam = multiplier * gamma_0 of each trial's Gram."""

    seed: int
    kernels: tuple = DEFAULT_KERNELS
    multipliers: tuple[float, ...] = (0.01, 0.1, 1.0, 10.0)
    trials: int = 30
    n: int = 10
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    mc_samples: int = 20_000

    def __post_init__(self):
        if self.trials < 1 or self.n < 2:
            raise InputError("need at least one trial and n >= 2")
        if any(not m >= 0 or math.isinf(m) for m in self.multipliers):
            raise InputError("multipliers must be finite and non-negative")
        if not self.kernels:
            raise InputError("at least one kernel is required")
        for k in self.kernels:
            _kernel_label(k)

    def to_dict(self) -> dict[str, Any]:
        return {
            "seed": self.seed,
            "kernels": [k.to_dict() if isinstance(k, KernelSpec) else dict(k) for k in self.kernels],
            "multipliers": list(self.multipliers),
            "trials": self.trials,
            "n": self.n,
            "protocol": self.protocol.to_dict(),
            "mc_samples": self.mc_samples,
        }


def smallest_nonzero_eigenvalue(K: ArrayLike) -> float:
    """gamma_0: the smallest eigenvalue above the rank threshold."""
    return sym_eig(K).smallest_nonzero(RANK_RTOL)


def _shrunk_weights(dec, n: int, lam: float) -> tuple[NDArray, NDArray]:
    if lam == 0.0:
        u = uniform_weights(n)
        return u, u
    return s_kmse_weights(n, lam), f_kmse_spectral(dec, lam)


def _lambda_trial(task: tuple[LambdaSweepConfig, int]) -> tuple[list, list]:
    config, trial = task
    seed = trial_seed(config.seed, _LAMBDA_STREAM, trial)
    data_rng, mc_rng = _streams(seed, 2)
    mix = draw_mixture(config.protocol, data_rng)
    X = sample(mix, config.n, data_rng)
    recs, fails = [], []
    for kspec in config.kernels:
        label = _kernel_label(kspec)
        t0 = time.perf_counter()
        try:
            kernel = _resolve_kernel(kspec, X)
            K = gram(kernel, X)
            dec = sym_eig(K)
            g0 = dec.smallest_nonzero(RANK_RTOL)
            mu2 = _sq_norm(mix, kernel, config.mc_samples, mc_rng)
            kme_loss = loss(uniform_weights(config.n), X, kernel, mix, sq_norm=mu2, K=K)
            out = []
            for m in config.multipliers:
                lam = m * g0
                s_beta, f_beta = _shrunk_weights(dec, config.n, lam)
                cell = (("kernel", label), ("multiplier", m))
                out.append((cell, Estimator.KME, 0.0, kme_loss))
                out.append((cell, Estimator.S_KMSE, lam, loss(s_beta, X, kernel, mix, sq_norm=mu2, K=K)))
                out.append((cell, Estimator.F_KMSE, lam, loss(f_beta, X, kernel, mix, sq_norm=mu2, K=K)))
        except (KmshrinkError, np.linalg.LinAlgError) as exc:
            fails.extend(_failure(trial, seed, (("kernel", label), ("multiplier", m)), exc) for m in config.multipliers)
            continue
        per = (time.perf_counter() - t0) / len(out)
        recs.extend(TrialResult(trial, est, lam, val, seed, cell, per) for cell, est, lam, val in out)
    return recs, fails


def run_lambda_sweep(config: LambdaSweepConfig, parallelism: int = 1) -> SweepReport:
    tasks = [(config, t) for t in range(config.trials)]
    records, failures = _collect(_map(_lambda_trial, tasks, parallelism))
    cells = tuple((("kernel", _kernel_label(k)), ("multiplier", m)) for k in config.kernels for m in config.multipliers)
    return SweepReport(
        axis=SweepAxis.LAMBDA,
        axis_values=tuple(config.multipliers),
        cells=cells,
        records=records,
        failures=failures,
        trials=config.trials,
        config=config.to_dict(),
    )


@dataclass(frozen=True)
class NdSweepConfig:
    """LOOCV-selected comparison over grids of sample size and dimension."""

    seed: int
    n_grid: tuple[int, ...] = (10,)
    d_grid: tuple[int, ...] = (30,)
    trials: int = 30
    kernel: Any = field(default_factory=lambda: {"family": "rbf", "bandwidth": "median"})
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    criterion: LoocvMethod = LoocvMethod.F_CLOSED_FORM
    search: SearchConfig = field(default_factory=SearchConfig)
    mc_samples: int = 20_000

    def __post_init__(self):
        object.__setattr__(self, "criterion", LoocvMethod(self.criterion))
        if self.trials < 1 or not self.n_grid or not self.d_grid:
            raise InputError("need at least one trial and non-empty n/d grids")
        if min(self.n_grid) < 2 or min(self.d_grid) < 1:
            raise InputError("grid values must satisfy n >= 2 and d >= 1")
        _kernel_label(self.kernel)

    @property
    def axis(self) -> SweepAxis:
        return SweepAxis.DIMENSION if len(self.n_grid) == 1 and len(self.d_grid) > 1 else SweepAxis.SAMPLE_SIZE

    def to_dict(self) -> dict[str, Any]:
        return {
            "seed": self.seed,
            "n_grid": list(self.n_grid),
            "d_grid": list(self.d_grid),
            "trials": self.trials,
            "kernel": self.kernel.to_dict() if isinstance(self.kernel, KernelSpec) else dict(self.kernel),
            "protocol": self.protocol.to_dict(),
            "criterion": self.criterion.value,
            "search": asdict(self.search),
            "mc_samples": self.mc_samples,
        }


def _nd_trial(task: tuple[NdSweepConfig, int, int, int]) -> tuple[list, list]:
    config, n, d, trial = task
    seed = trial_seed(config.seed, _ND_STREAM, n, d, trial)
    cell = (("n", n), ("d", d))
    data_rng, mc_rng = _streams(seed, 2)
    t0 = time.perf_counter()
    try:
        mix = draw_mixture(replace(config.protocol, d=d), data_rng)
        X = sample(mix, n, data_rng)
        kernel = _resolve_kernel(config.kernel, X)
        K = gram(kernel, X)
        mu2 = _sq_norm(mix, kernel, config.mc_samples, mc_rng)
        s_lam = s_kmse_select(gram_stats(K)).lam
        dec = sym_eig(K)
        f_lam = f_kmse_select(dec, config.search, config.criterion).selected_lambda
        out = [
            (Estimator.KME, 0.0, loss(uniform_weights(n), X, kernel, mix, sq_norm=mu2, K=K)),
            (Estimator.S_KMSE, s_lam, loss(s_kmse_weights(n, s_lam), X, kernel, mix, sq_norm=mu2, K=K)),
            (Estimator.F_KMSE, f_lam, loss(f_kmse_spectral(dec, f_lam), X, kernel, mix, sq_norm=mu2, K=K)),
        ]
    except (KmshrinkError, np.linalg.LinAlgError) as exc:
        return [], [_failure(trial, seed, cell, exc)]
    per = (time.perf_counter() - t0) / len(out)
    return [TrialResult(trial, est, lam, val, seed, cell, per) for est, lam, val in out], []


def run_nd_sweep(config: NdSweepConfig, parallelism: int = 1) -> SweepReport:
    tasks = [(config, n, d, t) for n in config.n_grid for d in config.d_grid for t in range(config.trials)]
    records, failures = _collect(_map(_nd_trial, tasks, parallelism))
    cells = tuple((("n", n), ("d", d)) for n in config.n_grid for d in config.d_grid)
    return SweepReport(
        axis=config.axis,
        axis_values=tuple([n, d] for n in config.n_grid for d in config.d_grid),
        cells=cells,
        records=records,
        failures=failures,
        trials=config.trials,
        config=config.to_dict(),
    )


# --- KPCA benchmark -------------------------------------------------------

SCENARIOS: tuple[tuple[str, str, str], ...] = (
    # (name, centering estimator, covariance-operator source)
    ("standard", "kme", "standard"),
    ("s_kmse_centering", "s_kmse", "standard"),
    ("f_kmse_centering", "f_kmse", "standard"),
    ("s_cose", "kme", "s_cose"),
    ("f_cose", "kme", "f_cose"),
)


def standardize(train: ArrayLike, test: ArrayLike | None = None) -> tuple[NDArray, NDArray | None]:
    """Zero-mean, unit-variance columns using statistics of ``train`` only.

    Constant columns are centered but left unscaled.
    """
    train = as_data_matrix(train, "train")
    mean = train.mean(axis=0)
    std = train.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    out_test = None
    if test is not None:
        test = as_data_matrix(test, "test")
        if test.shape[1] != train.shape[1]:
            raise InputError("train and test have different column counts")
        out_test = (test - mean) / std
    return (train - mean) / std, out_test


@dataclass(frozen=True)
class KpcaBenchConfig:
    seed: int
    n_components: int = 20
    test_fraction: float = 0.3
    repetitions: int = 10
    kernel: Any = field(default_factory=lambda: {"family": "rbf", "bandwidth": "median"})
    normalize: bool = True
    criterion: LoocvMethod = LoocvMethod.F_CLOSED_FORM
    search: SearchConfig = field(default_factory=SearchConfig)

    def __post_init__(self):
        object.__setattr__(self, "criterion", LoocvMethod(self.criterion))
        if not 0.0 < self.test_fraction < 1.0:
            raise InputError("test_fraction must lie in (0, 1)")
        if self.repetitions < 1 or self.n_components < 0:
            raise InputError("repetitions must be positive and n_components non-negative")
        _kernel_label(self.kernel)

    def to_dict(self) -> dict[str, Any]:
        return {
            "seed": self.seed,
            "n_components": self.n_components,
            "test_fraction": self.test_fraction,
            "repetitions": self.repetitions,
            "kernel": self.kernel.to_dict() if isinstance(self.kernel, KernelSpec) else dict(self.kernel),
            "normalize": self.normalize,
            "criterion": self.criterion.value,
            "search": asdict(self.search),
        }


@dataclass(frozen=True)
class KpcaRepetition:
    rep: int
    seed: int
    errors: dict[str, float]
    components: dict[str, int]
    lambdas: dict[str, float]
    notices: tuple[str, ...] = ()
    timing: float = 0.0

    def to_dict(self) -> dict[str, Any]:
        return {
            "rep": self.rep,
            "seed": self.seed,
            "errors": dict(self.errors),
            "components": dict(self.components),
            "lambdas": {k: _json_float(v) for k, v in self.lambdas.items()},
            "notices": list(self.notices),
        }


@dataclass(frozen=True)
class KpcaBenchReport:
    repetitions: tuple[KpcaRepetition, ...]
    failures: tuple[TrialFailure, ...]
    config: Mapping[str, Any] = field(default_factory=dict)

    def errors(self, scenario: str) -> NDArray[np.float64]:
        return np.array([r.errors[scenario] for r in self.repetitions])

    def aggregate(self) -> list[dict[str, Any]]:
        rows = []
        for name, centering, covop in SCENARIOS:
            vals = self.errors(name)
            base = self.errors("standard")
            row = {"scenario": name, "centering": centering, "covop": covop, **_summary(vals)}
            row["win_rate"] = None if name == "standard" or not vals.size else float(np.mean(vals < base))
            rows.append(row)
        return rows

    def mean_error(self, scenario: str) -> float:
        return float(self.errors(scenario).mean())

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "config": dict(self.config),
            "aggregates": self.aggregate(),
            "repetitions": [r.to_dict() for r in self.repetitions],
            "failures": [f.to_dict() for f in self.failures],
        }

    def timings(self) -> list[dict[str, Any]]:
        return [{"rep": r.rep, "seconds": r.timing} for r in self.repetitions]


def split_indices(n: int, test_fraction: float, rng: np.random.Generator) -> tuple[NDArray, NDArray]:
    n_test = min(max(int(round(test_fraction * n)), 1), n - 2)
    perm = rng.permutation(n)
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


def centering_weights(K: NDArray, estimator: str, config: KpcaBenchConfig) -> tuple[NDArray, float]:
    n = K.shape[0]
    if estimator == "kme":
        return uniform_weights(n), 0.0
    if estimator == "s_kmse":
        lam = s_kmse_select(gram_stats(K)).lam
        return s_kmse_weights(n, lam), lam
    dec = sym_eig(K)
    lam = f_kmse_select(dec, config.search, config.criterion).selected_lambda
    return f_kmse_spectral(dec, lam), lam


def scenario_models(X_train: NDArray, kernel: KernelSpec, n_components: int, config: KpcaBenchConfig, K: NDArray | None = None):
    """Fit the five KPCA variants; yields (name, model, lam, notice)."""
    K = gram(kernel, X_train) if K is None else K
    for name, centering, covop_src in SCENARIOS:
        beta_c, lam_c = centering_weights(K, centering, config)
        covop = cose_weights(K, method=covop_src, search=config.search, criterion=config.criterion)
        rank = kpca_rank(K, beta_c)
        ell, notice = n_components, None
        if ell > rank:
            notice = f"{name}: requested {ell} components, rank is {rank}; using {rank}"
            log.info(notice)
            ell = rank
        model = kpca_fit(X_train, kernel, beta_c, covop, ell, K=K)
        yield name, model, (lam_c if centering != "kme" else covop.lam), notice


def _kpca_rep(task: tuple[KpcaBenchConfig, NDArray, int]) -> KpcaRepetition | TrialFailure:
    config, data, rep = task
    seed = trial_seed(config.seed, _KPCA_STREAM, rep)
    (rng,) = _streams(seed, 1)
    t0 = time.perf_counter()
    try:
        tr, te = split_indices(data.shape[0], config.test_fraction, rng)
        X_tr, X_te = data[tr], data[te]
        if config.normalize:
            X_tr, X_te = standardize(X_tr, X_te)
        kernel = _resolve_kernel(config.kernel, X_tr)
        errors, comps, lams, notices = {}, {}, {}, []
        for name, model, lam, notice in scenario_models(X_tr, kernel, config.n_components, config):
            errors[name] = float(kpca_reconstruction_error(model, X_te).mean())
            comps[name] = model.n_components
            lams[name] = lam
            if notice:
                notices.append(notice)
    except (KmshrinkError, np.linalg.LinAlgError) as exc:
        return _failure(rep, seed, (("rep", rep),), exc)
    return KpcaRepetition(rep, seed, errors, comps, lams, tuple(notices), time.perf_counter() - t0)


def run_kpca_bench(config: KpcaBenchConfig, data: ArrayLike, parallelism: int = 1) -> KpcaBenchReport:
    data = as_data_matrix(data, "data")
    if data.shape[0] < 10:
        raise InputError(f"the benchmark needs at least 10 points, got {data.shape[0]}")
    outs = _map(_kpca_rep, [(config, data, r) for r in range(config.repetitions)], parallelism)
    reps = tuple(o for o in outs if isinstance(o, KpcaRepetition))
    fails = tuple(o for o in outs if isinstance(o, TrialFailure))
    return KpcaBenchReport(reps, fails, config.to_dict())


def synthetic_dataset(protocol: ProtocolConfig, n: int, seed: int) -> NDArray[np.float64]:
    """A sample from a freshly drawn mixture, for benchmarks without a CSV."""
    rng = np.random.default_rng(trial_seed(seed, _KPCA_STREAM, 0, 0))
    return sample(draw_mixture(protocol, rng), n, rng)
