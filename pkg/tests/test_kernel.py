import math

import numpy as np
import pytest
from scipy import special, stats

from stablenn.cones import PartitionTable, q_exact_1d, partition_table
from stablenn.kernel import (
    KernelMatrix,
    LatentState,
    assemble_q,
    marginal_density_mc,
    pattern_weights,
    prior_state,
    sample_prior_q,
)
from stablenn.stable import RngStream, StableParams, sample_positive_stable


def single_pattern_table(tau):
    tau = np.atleast_2d(tau)
    return PartitionTable(tau, [1.0], [0.0], np.zeros((tau.shape[1], 1)))


def naive_q(table, state, params):
    P = table.n_points
    Q = np.zeros((P, P))
    for i in range(P):
        for j in range(P):
            acc = 0.0
            for ell in range(len(table)):
                acc += (params.nu * table.probs[ell] ** (2 / params.alpha) * state.scales[ell]
                        * table.patterns[ell, i] * table.patterns[ell, j])
            Q[i, j] = acc + (state.sigma2 if i == j else 0.0)
    return Q


def identity_kernel(n):
    # a zero-weight pattern leaves Q = sigma2 * I
    return KernelMatrix(np.ones((n, 1)), [0.0], LatentState([1.0], 1.0))


def random_kernel(n_pts=12, n_train=8, seed=0, alpha=1.2):
    rng = RngStream(seed)
    table = partition_table(np.linspace(-2, 2, n_pts))
    params = StableParams(alpha, 1.3)
    return assemble_q(table, prior_state(table, params, rng, sigma2=0.4), params, n_train), table, params


def test_assemble_q_examples():
    params = StableParams(1.0, 1.0)
    K = assemble_q(single_pattern_table([1, 1]), LatentState([1.0], 0.25), params)
    np.testing.assert_array_equal(K.Q, [[1.25, 1.0], [1.0, 1.25]])
    K = assemble_q(single_pattern_table([1, -1]), LatentState([1.0], 0.25), params)
    assert K.Q[0, 1] == -1.0 and K.Q[1, 0] == -1.0


def test_assemble_q_matches_naive_sum():
    for seed in range(5):
        K, table, params = random_kernel(seed=seed, alpha=0.6 + 0.25 * seed)
        ref = naive_q(table, K.state, params)
        assert np.max(np.abs(K.Q - ref)) <= 1e-12 * max(1.0, np.abs(ref).max())
        assert np.array_equal(K.Q, K.Q.T)


def test_rank_one_zero_update_is_identity():
    K, _, _ = random_kernel()
    Q0, L0, d0 = K.Q.copy(), K.chol.copy(), K.log_det
    assert K.rank_one_update(3, float(K.state.scales[3]))
    assert np.array_equal(K.Q, Q0) and np.array_equal(K.chol, L0) and K.log_det == d0


def test_rank_one_update_matches_scratch():
    K, table, params = random_kernel(n_pts=20, n_train=20, seed=3)
    rng = RngStream(4)
    for step in range(60):
        ell = step % len(table)
        s_new = float(sample_positive_stable(params.alpha / 2, rng))
        K.rank_one_update(ell, s_new)
        ref = KernelMatrix(K.patterns, K.weights, K.state.copy())
        scale = max(1.0, np.abs(ref.Q).max())
        assert np.max(np.abs(K.Q - ref.Q)) <= 1e-10 * scale
        assert abs(K.log_det - ref.log_det) <= 1e-10 * max(1.0, abs(ref.log_det))
        assert np.max(np.abs(K.chol - ref.chol)) <= 1e-10 * math.sqrt(scale)


def test_rank_one_log_det_two_by_two():
    K = KernelMatrix(np.ones((2, 1)), [1.0], LatentState([1e-300], 1.0))
    assert K.log_det == pytest.approx(0.0, abs=1e-15)
    assert K.rank_one_update(0, 1.0)
    assert K.log_det == pytest.approx(math.log(3), abs=1e-14)
    np.testing.assert_allclose(K.Q, [[2, 1], [1, 2]])


def test_rank_one_refuses_ill_conditioned_downdate():
    K = KernelMatrix(np.ones((2, 1)), [1.0], LatentState([1e12], 1e-6))
    ok = K.rank_one_update(0, 1e-3)
    assert not ok
    ref = KernelMatrix(K.patterns, K.weights, K.state.copy())
    np.testing.assert_allclose(K.Q, ref.Q)
    assert K.log_det == pytest.approx(ref.log_det)


def test_rank_one_errors():
    K, _, _ = random_kernel()
    with pytest.raises(IndexError):
        K.rank_one_update(len(K.weights), 1.0)
    with pytest.raises(ValueError):
        K.rank_one_update(0, -1.0)
    with pytest.raises(ValueError):
        K.rank_one_update(0, float("inf"))
    K.dirty = True
    with pytest.raises(RuntimeError):
        K.rank_one_update(0, 1.0)
    with pytest.raises(RuntimeError):
        K.log_marginal(np.zeros(K.n_train))


def test_set_sigma2():
    K = identity_kernel(3)
    Q0 = K.Q.copy()
    K.set_sigma2(1.0)
    assert np.array_equal(K.Q, Q0)
    K.set_sigma2(2.0)
    np.testing.assert_array_equal(np.diag(K.Q), [2.0, 2.0, 2.0])
    assert K.log_det == pytest.approx(3 * math.log(2))


def test_set_sigma2_matches_scratch():
    K, table, params = random_kernel(seed=7)
    K.set_sigma2(1.7)
    ref = assemble_q(table, LatentState(K.state.scales.copy(), 1.7), params, K.n_train)
    assert np.max(np.abs(K.Q - ref.Q)) <= 1e-12 * max(1.0, np.abs(ref.Q).max())
    with pytest.raises(ValueError):
        K.set_sigma2(0.0)


def test_log_marginal_examples():
    K = identity_kernel(2)
    assert K.log_marginal(np.zeros(2)) == pytest.approx(-math.log(2 * math.pi), abs=1e-14)
    assert K.log_marginal(np.array([1.0, 0.0])) == pytest.approx(-math.log(2 * math.pi) - 0.5, abs=1e-14)
    with pytest.raises(ValueError):
        K.log_marginal(np.zeros(3))


def test_log_marginal_matches_dense_oracle():
    for seed in range(5):
        K, _, _ = random_kernel(n_pts=5, n_train=5, seed=seed)
        y = np.random.default_rng(seed).normal(size=5)
        Q = K.Q
        quad = y @ np.linalg.solve(Q, y)
        ref = -0.5 * 5 * math.log(2 * math.pi) - 0.5 * np.linalg.slogdet(Q)[1] - 0.5 * quad
        assert K.log_marginal(y) == pytest.approx(ref, abs=1e-10 * max(1, abs(ref)))


def test_state_validation():
    with pytest.raises(ValueError):
        LatentState([1.0, 0.0], 1.0)
    with pytest.raises(ValueError):
        LatentState([1.0, np.inf], 1.0)
    with pytest.raises(ValueError):
        LatentState([1.0], 0.0)


def test_copy_is_independent():
    K, _, _ = random_kernel()
    C = K.copy()
    before = K.Q.copy()
    C.rank_one_update(0, float(K.state.scales[0]) + 5.0)
    assert np.array_equal(K.Q, before)
    assert C.state.scales[0] == K.state.scales[0] + 5.0
    assert not np.shares_memory(K.Q, C.Q)


def voigt(y, gamma, sigma2):
    return special.voigt_profile(y, math.sqrt(sigma2), gamma)


def test_density_mc_against_voigt():
    nu, sigma2 = 2.0, 0.3
    grid = np.linspace(-5, 5, 21)
    est, se = marginal_density_mc(grid[:, None], q_exact_1d([0.4]), StableParams(1.0, nu),
                                  sigma2, 200_000, RngStream(1))
    assert np.max(np.abs(est - voigt(grid, math.sqrt(nu / 2), sigma2))) < 1e-2
    assert np.all(se < 2e-3)


def test_density_mc_decreases_with_noise_at_zero():
    table = q_exact_1d([-0.5, 0.5])
    vals = [marginal_density_mc(np.zeros(2), table, StableParams(1.2), s2, 50_000, RngStream(2))[0]
            for s2 in (0.1, 0.5, 2.0, 10.0)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_density_mc_symmetric_in_y():
    table = q_exact_1d([-1.0, 1.0])
    y = np.array([0.7, -1.9])
    a, _ = marginal_density_mc(y, table, StableParams(0.8), 0.5, 20_000, RngStream(3))
    b, _ = marginal_density_mc(-y, table, StableParams(0.8), 0.5, 20_000, RngStream(3))
    assert a == pytest.approx(b, rel=1e-12)


def test_positive_definite_under_random_states():
    rng = RngStream(11)
    gen = rng.generator
    table = partition_table(np.linspace(-2, 2, 6))
    for k in range(10_000):
        params = StableParams(float(gen.uniform(0.2, 1.95)), float(gen.uniform(0.1, 5)))
        state = prior_state(table, params, rng, sigma2=float(gen.uniform(1e-4, 3)))
        K = assemble_q(table, state, params)
        assert np.isfinite(K.log_det)


def test_diagonal_marginal_is_positive_stable():
    table = partition_table(np.linspace(-2, 2, 6))
    for alpha in (0.8, 1.4):
        params = StableParams(alpha, 2.0)
        q = sample_prior_q(table, params, 0.5, 100_000, RngStream(5))
        ref = sample_positive_stable(alpha / 2, RngStream(6), size=100_000)
        diag = (q[:, 2, 2] - 0.5) / 2.0
        assert stats.ks_2samp(diag, ref).statistic < 0.01


def test_sign_frequency_increases_with_same_side_probability():
    from stablenn.cones import same_side_prob
    table = partition_table(np.linspace(-2, 2, 8))
    q = sample_prior_q(table, StableParams(1.2), 0.3, 100_000, RngStream(7))
    iu = np.triu_indices(8, 1)
    freq = (q[:, iu[0], iu[1]] > 0).mean(axis=0)
    pij = [same_side_prob(table, i, j) for i, j in zip(*iu)]
    assert stats.spearmanr(pij, freq).statistic > 0.99


def test_merged_and_split_tables_agree_in_law():
    xs = np.linspace(-1.5, 1.5, 5)
    merged = q_exact_1d(xs)
    params = StableParams(1.3, 1.0)
    split = PartitionTable(np.vstack([merged.patterns, -merged.patterns]),
                           np.concatenate([merged.probs, merged.probs]) / 2,
                           np.zeros(2 * len(merged)), merged.points)
    t = np.array([0.3, -1.0, 0.5, 2.0, -0.7])
    quad = []
    for k, table in enumerate((merged, split)):
        Q = sample_prior_q(table, params, 0.2, 100_000, RngStream(20 + k))
        quad.append(np.einsum("i,dij,j->d", t, Q, t))
    assert stats.ks_2samp(*quad).statistic < 0.01


def test_pattern_weights():
    t = q_exact_1d([-1.0, 1.0])
    np.testing.assert_allclose(pattern_weights(t, StableParams(0.5, 3.0)), 3.0 * 0.5**4)
