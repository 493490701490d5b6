"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` (the lines are printed even
under output capture) or ``python tests/test_acceptance.py``.
"""

import math
import sys
import time

import numpy as np
import pytest

from kmshrink.centering import center_train
from kmshrink.estimators import f_kmse, f_kmse_spectral, filter_factors, uniform_weights
from kmshrink.experiments import KpcaBenchConfig, NdSweepConfig, run_kpca_bench, run_nd_sweep, synthetic_dataset
from kmshrink.kernels import KernelSpec, gram, median_heuristic
from kmshrink.model_selection import GramStats, f_kmse_loocv_naive, f_kmse_loocv_score, gram_stats, s_kmse_loocv_poly, s_kmse_select
from kmshrink.oracle import (
    GaussianMixture,
    ProtocolConfig,
    draw_mixture,
    loss,
    oracle_alpha,
    risk_delta,
    sample,
    true_mean_eval,
    true_mean_sq_norm,
)
from kmshrink.operators import CovOpSource, CovOpWeights, cose_weights, kpca_fit, kpca_rank, kpca_reconstruction_error
from kmshrink.cli import main as cli_main
from kmshrink.spectral import sym_eig

MASTER_SEED = 0
KERNELS = [KernelSpec.lin(), KernelSpec.poly(2), KernelSpec.poly(3), KernelSpec.rbf(2.0)]


@pytest.fixture
def report(capsys):
    def _report(criterion, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}")
        assert ok, f"criterion {criterion}: {detail}"

    return _report


def _random_gram(rng, n, kernel):
    d = int(rng.integers(1, 6))
    return gram(kernel, rng.normal(scale=rng.uniform(0.3, 2.0), size=(n, d)))


def test_1_loocv_dual_path(report):
    rng = np.random.default_rng(MASTER_SEED)
    start = time.perf_counter()
    worst, pairs = 0.0, 0
    for n in (3, 5, 10, 20):
        for kernel in KERNELS:
            for _ in range(13):
                K = _random_gram(rng, n, kernel)
                lam = float(np.linalg.eigvalsh(K).max() * 10 ** rng.uniform(-4, 2))
                a, b = f_kmse_loocv_score(K, lam), f_kmse_loocv_naive(K, lam)
                worst = max(worst, abs(a - b) / abs(b))
                pairs += 1
    elapsed = time.perf_counter() - start
    ok = pairs >= 200 and worst <= 1e-6 and elapsed < 30
    report(1, ok, f"{pairs} pairs, max relative gap {worst:.2e} (tol 1e-6), {elapsed:.1f}s (limit 30s)")


def test_2_s_kmse_analytic_optimum(report):
    rng = np.random.default_rng(MASTER_SEED + 1)
    grid = np.linspace(0.0, 1.0, 10_001)
    worst, count = 0.0, 0
    for _ in range(240):
        n = int(rng.integers(2, 25))
        K = _random_gram(rng, n, KERNELS[int(rng.integers(4))])
        choice = s_kmse_select(gram_stats(K))
        argmin = grid[np.argmin(s_kmse_loocv_poly(choice.stats, grid))]
        worst = max(worst, abs(choice.alpha - argmin))
        count += 1
    worked = s_kmse_select(GramStats(rho=0.75, varrho=1.0, n=2))
    exact = worked.lam == 1.0 and worked.alpha == 0.5
    ok = count >= 200 and worst <= 1e-4 and exact
    report(2, ok, f"{count} Grams, max |alpha* - grid argmin| {worst:.1e} (grid 1e-4); worked example lambda={worked.lam}, alpha={worked.alpha}")


def test_3_spectral_identity(report):
    rng = np.random.default_rng(MASTER_SEED + 2)
    worst, max_factor, count = 0.0, 0.0, 0
    for n in (3, 5, 10, 20, 40):
        for kernel in KERNELS:
            for _ in range(10):
                K = _random_gram(rng, n, kernel)
                dec = sym_eig(K)
                lam = float(dec.gamma_max * 10 ** rng.uniform(-4, 2))
                a, b = f_kmse(K, lam), f_kmse_spectral(dec, lam)
                worst = max(worst, np.linalg.norm(a - b) / np.linalg.norm(a))
                max_factor = max(max_factor, float(filter_factors(dec, lam).max()))
                count += 1
    ok = worst <= 1e-8 and max_factor < 1.0
    report(3, ok, f"{count} cases, max relative gap {worst:.2e} (tol 1e-8), largest filter factor {max_factor:.6f} (< 1)")


def _mc_mean(values):
    return values.mean(), values.std(ddof=1) / math.sqrt(values.size)


def test_4_oracle_integrity(report):
    rng = np.random.default_rng(MASTER_SEED + 3)
    samples = 1_000_000
    start = time.perf_counter()
    worst, checks = 0.0, 0
    for _ in range(20):
        d = int(rng.integers(1, 6))
        mix = draw_mixture(ProtocolConfig(d=d), rng)
        pilot = sample(mix, 200, rng)
        for kernel in (KernelSpec.lin(), KernelSpec.poly(2), KernelSpec.rbf(median_heuristic(pilot))):
            X, Xp = sample(mix, samples, rng), sample(mix, samples, rng)
            y = pilot[int(rng.integers(200))]
            if kernel.family.value == "rbf":
                kxy = np.exp(-np.sum((X - y) ** 2, axis=1) / (2 * kernel.bandwidth_sq))
                kxx = np.ones(samples)
                kxxp = np.exp(-np.sum((X - Xp) ** 2, axis=1) / (2 * kernel.bandwidth_sq))
            else:
                p = kernel.family.degree or 1
                off = 0.0 if p == 1 else 1.0
                kxy = (X @ y + off) ** p
                kxx = (np.sum(X * X, axis=1) + off) ** p
                kxxp = (np.sum(X * Xp, axis=1) + off) ** p
            n = 5
            pairs = [
                (true_mean_eval(mix, kernel, y[None])[0], _mc_mean(kxy)),
                (true_mean_sq_norm(mix, kernel), _mc_mean(kxxp)),
                (risk_delta(mix, kernel, n), _mc_mean((kxx - kxxp) / n)),
            ]
            for exact, (mc, se) in pairs:
                z = abs(exact - mc) / se if se > 0 else (0.0 if exact == mc else np.inf)
                worst = max(worst, z)
                checks += 1
    elapsed = time.perf_counter() - start
    ok = worst <= 4.0 and elapsed < 120
    report(4, ok, f"{checks} exact-vs-MC checks at 1e6 samples, worst |z| {worst:.2f} (limit 4), {elapsed:.0f}s (limit 120s)")


def test_5_oracle_shrinkage_gain(report):
    kernel = KernelSpec.lin()
    mix = GaussianMixture([1.0], np.array([[1.0, 0.0]]), np.eye(2)[None])
    n = 4
    res = oracle_alpha(mix, kernel, n)
    exact = abs(res.delta - 0.5) <= 1e-15 and abs(res.alpha - 1 / 3) <= 1e-15
    rng = np.random.default_rng(MASTER_SEED + 4)
    mu2 = true_mean_sq_norm(mix, kernel)
    kme_l, shr_l = [], []
    for _ in range(500):
        X = sample(mix, n, rng)
        kme_l.append(loss(uniform_weights(n), X, kernel, mix, sq_norm=mu2))
        shr_l.append(loss((1 - res.alpha) * uniform_weights(n), X, kernel, mix, sq_norm=mu2))
    gap = np.array(kme_l) - np.array(shr_l)
    g, se = _mc_mean(gap)
    target = 0.25 / 1.5
    ok = exact and np.mean(shr_l) < np.mean(kme_l) and abs(g - target) <= 5 * se
    report(
        5,
        ok,
        f"Delta={res.delta}, alpha*={res.alpha:.15f}; mean loss KME {np.mean(kme_l):.4f} vs shrunk {np.mean(shr_l):.4f}; "
        f"gap {g:.4f} vs {target:.4f} ({abs(g - target) / se:.2f} SE, limit 5)",
    )


@pytest.fixture(scope="module")
def small_n_sweep():
    start = time.perf_counter()
    rep = run_nd_sweep(NdSweepConfig(seed=MASTER_SEED, n_grid=(10,), d_grid=(30,), trials=30))
    return rep, time.perf_counter() - start


def _small_n_line(rep, estimator):
    rows = {r["estimator"]: r for r in rep.aggregate()}
    return rows[estimator]["mean"], rows["kme"]["mean"], rows[estimator]["win_rate"], rows[estimator]["count"]


def test_6a_s_kmse_beats_kme(small_n_sweep, report):
    rep, elapsed = small_n_sweep
    mean, base, win, count = _small_n_line(rep, "s_kmse")
    ok = count == 30 and mean <= base and win >= 0.7 and elapsed < 300
    report("6a", ok, f"S-KMSE mean loss {mean:.5f} vs KME {base:.5f}, paired win rate {win:.3f} (need >= 0.70), {count} trials, {elapsed:.1f}s")


def test_6b_f_kmse_beats_kme(small_n_sweep, report):
    rep, elapsed = small_n_sweep
    mean, base, win, count = _small_n_line(rep, "f_kmse")
    ok = count == 30 and mean <= base and win >= 0.7 and elapsed < 300
    report("6b", ok, f"F-KMSE mean loss {mean:.5f} vs KME {base:.5f}, paired win rate {win:.3f} (need >= 0.70), {count} trials, {elapsed:.1f}s")


def test_7_centering_reduction(report):
    rng = np.random.default_rng(MASTER_SEED + 6)
    worst, worst_abs = 0.0, 0.0
    for _ in range(100):
        n = int(rng.integers(2, 30))
        K = _random_gram(rng, n, KERNELS[int(rng.integers(4))])
        H = np.eye(n) - np.full((n, n), 1.0 / n)
        gap = float(np.abs(center_train(K, uniform_weights(n)).values - H @ K @ H).max())
        # 1e-12 per unit of Gram magnitude: POLY3 entries reach ~1e5, where one ulp exceeds 1e-12
        worst = max(worst, gap / max(1.0, float(np.abs(K).max())))
        worst_abs = max(worst_abs, gap)
    hand = center_train(np.eye(2), [0.5, 0.5]).values
    hand_ok = np.array_equal(hand, [[0.5, -0.5], [-0.5, 0.5]])
    report(
        7,
        worst <= 1e-12 and hand_ok,
        f"100 Grams, max entrywise gap {worst:.1e} x max(1, max|K|) (tol 1e-12; absolute {worst_abs:.1e}); n=2 example {hand.tolist()}",
    )


def test_8a_kpca_matches_classical(report):
    rng = np.random.default_rng(MASTER_SEED + 7)
    worst = 0.0
    for _ in range(20):
        n = int(rng.integers(10, 40))
        X = rng.normal(size=(n, 3))
        k = KernelSpec.rbf(median_heuristic(X))
        K = gram(k, X)
        H = np.eye(n) - 1.0 / n
        ref = np.sort(np.linalg.eigvalsh(H @ K @ H / n))[::-1]
        ell = min(8, kpca_rank(K, uniform_weights(n)))
        model = kpca_fit(X, k, uniform_weights(n), CovOpWeights(uniform_weights(n), CovOpSource.STANDARD), ell, K=K)
        worst = max(worst, float(np.max(np.abs(model.eigenvalues - ref[:ell]) / ref[:ell])))
    report("8a", worst <= 1e-8, f"scenario-1 eigenvalues vs direct HKH/n eigen-solve, max relative gap {worst:.1e} (tol 1e-8)")


def test_8b_reconstruction_monotone(report):
    rng = np.random.default_rng(MASTER_SEED + 8)
    negatives, increases, points = 0, 0, 0
    for source in CovOpSource:
        for _ in range(5):
            X, Z = rng.normal(size=(25, 3)), rng.normal(size=(10, 3))
            k = KernelSpec.rbf(median_heuristic(X))
            K = gram(k, X)
            cov = cose_weights(K, method=source)
            ell = min(20, kpca_rank(K, uniform_weights(25)))
            model = kpca_fit(X, k, uniform_weights(25), cov, ell, K=K)
            errs = np.array([kpca_reconstruction_error(model, Z, j) for j in range(ell + 1)])
            negatives += int(np.sum(errs < 0))
            increases += int(np.sum(np.diff(errs, axis=0) > 0))
            points += Z.shape[0]
    ok = negatives == 0 and increases == 0
    report("8b", ok, f"{points} test points x all l: {negatives} negative errors, {increases} increases in l")


@pytest.fixture(scope="module")
def kpca_direction_bench():
    data = synthetic_dataset(ProtocolConfig(d=10), 100, MASTER_SEED)
    return run_kpca_bench(KpcaBenchConfig(seed=MASTER_SEED, repetitions=10), data)


# S-COSE shares its eigenvectors with standard KPCA (its weights are a uniform
# rescaling), so the two errors coincide up to round-off; "<=" is checked with
# a 1e-12 relative allowance for that.
_ROUND_OFF = 1e-12


def test_8c_s_cose_direction(kpca_direction_bench, report):
    std, cose = kpca_direction_bench.mean_error("standard"), kpca_direction_bench.mean_error("s_cose")
    ok = len(kpca_direction_bench.repetitions) == 10 and cose <= std * (1 + _ROUND_OFF)
    report("8c", ok, f"S-COSE mean test error {cose:.8f} vs standard {std:.8f} over 10 repetitions (d=10, n=100)")


def test_8d_f_cose_direction(kpca_direction_bench, report):
    std, cose = kpca_direction_bench.mean_error("standard"), kpca_direction_bench.mean_error("f_cose")
    wins = int(np.sum(kpca_direction_bench.errors("f_cose") < kpca_direction_bench.errors("standard")))
    ok = len(kpca_direction_bench.repetitions) == 10 and cose <= std
    report("8d", ok, f"F-COSE mean test error {cose:.8f} vs standard {std:.8f}; lower in {wins}/10 repetitions")


def test_9_determinism(tmp_path, report):
    commands = {
        "lambda-sweep": ["--trials", "3", "--d", "6"],
        "nd-sweep": ["--trials", "3", "--n-grid", "8", "--d-grid", "4,6"],
        "kpca-bench": ["--repetitions", "2", "--n-components", "6"],
    }
    same = {}
    for cmd, extra in commands.items():
        outs = []
        for run, par in enumerate(("1", "2")):
            out = tmp_path / f"{cmd}-{run}"
            code = cli_main([cmd, "--seed", "11", "--parallelism", par, "--output-dir", str(out), *extra])
            assert code == 0
            outs.append((out / "results.json").read_bytes() + (out / "aggregates.csv").read_bytes())
        same[cmd] = outs[0] == outs[1]
    report(9, all(same.values()), "byte-identical results across repeated runs (serial vs 2 workers): " + ", ".join(f"{k}={v}" for k, v in same.items()))


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
