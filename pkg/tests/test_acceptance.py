"""End-to-end acceptance criteria, one test each.

Every test appends ``(number, passed, detail)`` to the shared log before
asserting, so the terminal summary lists all thirteen outcomes.
"""

import math
import time
import warnings

import numpy as np
import pytest
from scipy import stats

from stablenn.checks import density_check, diagonal_check, stable_suite
from stablenn.cones import DroppedPatternWarning, estimate_probs_mc, q_exact_1d, q_mc
from stablenn.data import simulate_experiment
from stablenn.gp import gp_fit_predict
from stablenn.kernel import KernelMatrix, LatentState
from stablenn.mcmc import ChainConfig, band_ratio, conditional_gaussian, pooled_table, run_chain
from stablenn.model import fit_predict, mae
from stablenn.partitions import discover_mc, enumerate_1d, enumerate_2d
from stablenn.stable import RngStream, StableParams, mixture_identity_residual

pytestmark = pytest.mark.slow


def record(log, number, passed, detail):
    log.append((number, bool(passed), detail))
    assert passed, f"criterion {number}: {detail}"


def test_criterion_01_one_dimensional_partitions(acceptance_log):
    t0 = time.perf_counter()
    table = q_exact_1d(np.linspace(-2, 2, 40))
    elapsed = time.perf_counter() - t0
    err = abs(table.probs.sum() - 1.0)
    ok = len(table) == 40 and err <= 1e-12 and elapsed < 1.0 and table.exact
    record(acceptance_log, 1, ok, f"classes={len(table)} |sum-1|={err:.1e} time={elapsed:.3f}s")


def test_criterion_02_planar_enumeration(acceptance_log):
    pts = np.random.default_rng(0).uniform(-1, 1, (10, 2))
    t0 = time.perf_counter()
    exact = enumerate_2d(pts)
    found = discover_mc(pts, 1_000_000, RngStream(0, 2))
    elapsed = time.perf_counter() - t0
    same = {r.tobytes() for r in exact} == {r.tobytes() for r in found}
    cover = sum(math.comb(9, k) for k in range(3))
    ok = same and len(exact) == cover == 46 and elapsed < 30
    record(acceptance_log, 2, ok,
           f"enumerated={len(exact)} mc={len(found)} equal={same} time={elapsed:.1f}s")


def test_criterion_03_cone_probabilities(acceptance_log):
    pts = np.random.default_rng(1).uniform(-1, 1, (10, 2))
    table = estimate_probs_mc(pts, enumerate_2d(pts), 200_000, RngStream(3, 0))
    sum_err = abs(table.raw_sum - 1.0)

    xs = np.linspace(-2, 2, 8)
    exact = q_exact_1d(xs)
    mc = estimate_probs_mc(xs, enumerate_1d(xs), 200_000, RngStream(3, 1))
    z_1d = np.max(np.abs(mc.probs - exact.probs) / mc.std_errors)

    anti = q_mc([[1.0, 0.0], [-1.0, 0.0]], [1, -1], 200_000, RngStream(3, 2))
    z_anti = abs(anti.prob - 0.5) / anti.std_error

    ok = sum_err < 3e-3 and z_1d < 3 and z_anti < 3
    record(acceptance_log, 3, ok,
           f"|raw_sum-1|={sum_err:.1e} max 1-D z={z_1d:.2f} antipodal z={z_anti:.2f}")


def test_criterion_04_stable_sampler(acceptance_log):
    t0 = time.perf_counter()
    results = [r for r in stable_suite(seed=0) if not r.name.startswith("mixture")]
    elapsed = time.perf_counter() - t0
    ks = results[0].value
    worst = max(r.value for r in results[1:])
    ok = all(r.passed for r in results) and len(results) == 13 and elapsed < 60
    record(acceptance_log, 4, ok, f"KS={ks:.4f} worst Laplace z={worst:.2f} time={elapsed:.1f}s")


def test_criterion_05_mixture_identity(acceptance_log):
    res = [mixture_identity_residual(z, StableParams(1.0, nu))
           for nu in (1.0, 2.0) for z in (0.5, 1.0, 2.0)]
    record(acceptance_log, 5, max(res) < 1e-3, f"max residual={max(res):.1e}")


def test_criterion_06_density_oracle(acceptance_log):
    t0 = time.perf_counter()
    res = density_check(grid=np.linspace(-5, 5, 101))
    elapsed = time.perf_counter() - t0
    ok = res.passed and elapsed < 60
    record(acceptance_log, 6, ok, f"sup error={res.value:.2e} time={elapsed:.1f}s")


def test_criterion_07_diagonal_marginals(acceptance_log):
    res = diagonal_check(1.0) + diagonal_check(1.5)
    detail = " ".join(f"{r.name}={r.value:.4f}" for r in res)
    record(acceptance_log, 7, all(r.passed for r in res), detail)


def _dense_condition(Q, n, y):
    inv = np.linalg.inv(Q[:n, :n])
    return Q[n:, :n] @ inv @ y, Q[n:, n:] - Q[n:, :n] @ inv @ Q[:n, n:]


def test_criterion_08_gaussian_conditioning(acceptance_log):
    g = np.random.default_rng(8)
    worst_cond = 0.0
    for _ in range(100):
        n, m = int(g.integers(1, 7)), int(g.integers(1, 4))
        L = 3 * (n + m)
        pats = g.choice([-1.0, 1.0], size=(n + m, L))
        state = LatentState(g.uniform(0.2, 2.0, L), float(g.uniform(0.1, 1.0)))
        K = KernelMatrix(pats, g.uniform(0.1, 1.0, L), state, n)
        y = g.normal(size=n)
        mu, cov = conditional_gaussian(K, y)
        mu_ref, cov_ref = _dense_condition(K.Q, n, y)
        worst_cond = max(worst_cond, np.abs(mu - mu_ref).max(), np.abs(cov - cov_ref).max())

    worst_chol = 0.0
    for rep in range(20):
        P = int(g.integers(2, 10))
        L = 2 * P
        K = KernelMatrix(g.choice([-1.0, 1.0], size=(P, L)), g.uniform(0.1, 1.0, L),
                         LatentState(g.uniform(0.2, 2.0, L), 0.5))
        for ell in g.integers(0, L, 10):
            K.rank_one_update(int(ell), float(g.uniform(0.05, 3.0)))
            ref = KernelMatrix(K.patterns, K.weights, K.state.copy())
            worst_chol = max(worst_chol, np.abs(K.chol - ref.chol).max(),
                             np.abs(K.Q - ref.Q).max())
    ok = worst_cond < 1e-10 and worst_chol < 1e-10
    record(acceptance_log, 8, ok,
           f"conditioning err={worst_cond:.1e} rank-one factor err={worst_chol:.1e}")


def _stable_vs_gp(name, seed, params, config):
    train, test = simulate_experiment(name, 0.5, RngStream(seed))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DroppedPatternWarning)
        pred = fit_predict(train, test.X, params, config)
    return mae(pred.median, test.y), mae(gp_fit_predict(train, test.X).mean, test.y)


def test_criterion_09_three_jump_dominance(acceptance_log):
    t0 = time.perf_counter()
    pairs = [_stable_vs_gp("three_jump", s, StableParams(1.1, 1.0), ChainConfig(T=3000, seed=s))
             for s in range(20)]
    elapsed = time.perf_counter() - t0
    wins = sum(a < b for a, b in pairs)
    ok = wins >= 16 and elapsed < 600
    med = np.median(pairs, axis=0)
    record(acceptance_log, 9, ok, f"wins={wins}/20 median MAE stable={med[0]:.3f} "
                                  f"gp={med[1]:.3f} time={elapsed:.0f}s")


def test_criterion_10_quadrant_dominance(acceptance_log):
    t0 = time.perf_counter()
    pairs = [_stable_vs_gp("quadrant_2d", s, StableParams(1.1, 1.0), ChainConfig(T=3000, seed=s))
             for s in range(10)]
    elapsed = time.perf_counter() - t0
    wins = sum(a < b for a, b in pairs)
    ok = wins >= 8 and elapsed < 1800
    med = np.median(pairs, axis=0)
    record(acceptance_log, 10, ok, f"wins={wins}/10 median MAE stable={med[0]:.3f} "
                                   f"gp={med[1]:.3f} time={elapsed:.0f}s")


def test_criterion_11_smooth_parity(acceptance_log):
    rel = []
    for s in range(10):
        a, b = _stable_vs_gp("smooth_1d", s, StableParams(1.9, 1.0), ChainConfig(T=3000, seed=s))
        rel.append(abs(a - b) / b)
    med = float(np.median(rel))
    record(acceptance_log, 11, med < 0.25, f"median relative MAE gap={med:.3f}")


def test_criterion_12_complexity(acceptance_log):
    times = []
    sizes = (20, 40, 80)
    for n in sizes:
        x = np.linspace(-2, 2, n)
        xt = np.append(x[:-1] + np.diff(x) / 2, 2.05)
        y = np.sign(x) + 0.1 * np.random.default_rng(n).standard_normal(n)
        table = pooled_table(x[:, None], xt[:, None])
        run_chain(y, x, xt, StableParams(1.1), ChainConfig(T=50, burn_in=0), table=table)
        best = math.inf
        for _ in range(3):
            t0 = time.perf_counter()
            run_chain(y, x, xt, StableParams(1.1), ChainConfig(T=600, burn_in=0), table=table)
            best = min(best, (time.perf_counter() - t0) / 600)
        times.append(best)
    slopes = np.diff(np.log(times)) / math.log(2)
    fit = stats.linregress(np.log(sizes), np.log(times)).slope
    ok = all(2 <= s <= 3.5 for s in slopes)
    record(acceptance_log, 12, ok,
           f"per-iteration times={[f'{t * 1e3:.2f}ms' for t in times]} "
           f"doubling exponents={np.round(slopes, 2).tolist()} fitted={fit:.2f}")


def test_criterion_13_mixing(acceptance_log):
    train, test = simulate_experiment("three_jump", 0.5, RngStream(0))
    out = run_chain(train.y, train.X, test.X, StableParams(1.1, 1.0), ChainConfig(T=3000))
    ratio = band_ratio(out.log_lik, 1000, 1000)
    record(acceptance_log, 13, ratio < 3, f"band mean difference={ratio:.2f} SD")
