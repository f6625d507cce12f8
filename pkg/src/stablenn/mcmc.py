"""Independence Metropolis-Hastings over latent scales and noise variance.

Every scale is proposed from its positive alpha/2-stable prior and the noise
variance from a half-Cauchy(0, 1), so each acceptance ratio is a likelihood
ratio. After each sweep the predictive vector at the new inputs is drawn from
its exact conditional Gaussian.

The per-iteration work runs in compiled blocks (``_run_block``); the Python
functions ``step_scales``/``step_sigma`` expose single steps on a
:class:`~stablenn.kernel.KernelMatrix` through the same compiled primitives.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy import linalg

from . import _linalg
from .cones import PartitionTable, partition_table
from .kernel import DOWNDATE_FLOOR, KernelMatrix, LatentState, pattern_weights, prior_state
from .stable import SATURATION, RngStream, StableParams, sample_half_cauchy, sample_positive_stable


class AuditError(AssertionError):
    """Rank-one and from-scratch acceptance ratios disagree."""


@dataclass
class ChainConfig:
    T: int = 3000
    burn_in: int = 1000
    refresh_every: int = 50
    seed: int = 0
    thinning: int = 1
    chains: int = 1
    n_samples: int = 200_000  # hyperplane draws for cone probabilities when I >= 2
    block: int = 25
    record_scales: bool = False

    def __post_init__(self):
        if self.T < 1 or self.thinning < 1 or self.refresh_every < 1 or self.chains < 1:
            raise ValueError("T, thinning, refresh_every and chains must be positive")
        if not 0 <= self.burn_in < self.T:
            raise ValueError("burn_in must satisfy 0 <= burn_in < T")

    @property
    def kept_iterations(self) -> np.ndarray:
        return np.arange(self.burn_in, self.T, self.thinning)


@dataclass
class PredictiveDraws:
    """Kept predictive draws plus per-iteration diagnostics (all T iterations)."""

    draws: np.ndarray
    log_lik: np.ndarray
    sigma2: np.ndarray
    accept_scales: np.ndarray
    accept_sigma: np.ndarray
    n_patterns: int
    scales: np.ndarray | None = None
    meta: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# compiled primitives
# ---------------------------------------------------------------------------


@njit(cache=True)
def _rebuild_block(tn, tnt, ws, sigma2, out):
    q = np.dot(tn * ws, tnt)
    n = out.shape[0]
    for i in range(n):
        for j in range(n):
            out[i, j] = 0.5 * (q[i, j] + q[j, i])
        out[i, i] += sigma2


@njit(cache=True)
def _sweep(u, qn, scales, sigma2, counter, y, w, tn, tnt, props, logu, refresh_every):
    """One pass over all patterns. Mutates ``u``, ``qn``, ``scales``, ``counter``."""
    n = y.shape[0]
    n_pat = w.shape[0]
    z = np.empty(n)
    wy = np.empty(n)
    x = np.empty(n)
    work = np.empty(n)
    up = np.empty_like(u)
    qp = np.empty_like(qn)
    _linalg.solve_lower_t(u, y, wy)
    accepted = 0
    for k in range(n_pat):
        sp = props[k]
        if not sp < SATURATION:
            continue
        c = w[k] * (sp - scales[k])
        if c == 0.0:
            accepted += 1
            continue
        tau = tnt[k]
        _linalg.solve_lower_t(u, tau, z)
        a = 0.0
        b = 0.0
        for i in range(n):
            a += z[i] * z[i]
            b += z[i] * wy[i]
        d = 1.0 + c * a
        if d > DOWNDATE_FLOOR:
            dlog = -0.5 * math.log(d) + 0.5 * c * b * b / d
            if not logu[k] < dlog:
                continue
            scales[k] = sp
            for i in range(n):
                ci = c * tau[i]
                for j in range(n):
                    qn[i, j] += ci * tau[j]
            sq = math.sqrt(abs(c))
            for i in range(n):
                x[i] = sq * tau[i]
            if not _linalg.chol_rank1(u, x, 1.0 if c > 0 else -1.0):
                _rebuild_block(tn, tnt, w * scales, sigma2, qn)
                _linalg.chol_upper_jitter(qn, u)
                counter[0] = 0
        else:
            # ill-conditioned downdate: evaluate the proposal from scratch
            old = scales[k]
            scales[k] = sp
            _rebuild_block(tn, tnt, w * scales, sigma2, qp)
            if not _linalg.chol_upper_jitter(qp, up):
                scales[k] = old
                continue
            dlog = _linalg.gauss_loglik(up, y, work) - _linalg.gauss_loglik(u, y, work)
            if not logu[k] < dlog:
                scales[k] = old
                continue
            u[:, :] = up
            qn[:, :] = qp
            counter[0] = 0
        accepted += 1
        counter[0] += 1
        if counter[0] >= refresh_every:
            _linalg.chol_upper_jitter(qn, u)
            counter[0] = 0
        _linalg.solve_lower_t(u, y, wy)
    return accepted


@njit(cache=True)
def _sigma_step(u, qn, y, sigma2, sigma2_new, logu, ll_cur):
    """Independence proposal for sigma2. Returns (accepted, log-likelihood)."""
    n = y.shape[0]
    if sigma2_new == sigma2:
        return True, ll_cur
    qp = qn.copy()
    for i in range(n):
        qp[i, i] += sigma2_new - sigma2
    up = np.empty_like(u)
    if not _linalg.chol_upper_jitter(qp, up):
        return False, ll_cur
    ll_new = _linalg.gauss_loglik(up, y, np.empty(n))
    if logu < ll_new - ll_cur:
        u[:, :] = up
        qn[:, :] = qp
        return True, ll_new
    return False, ll_cur


@njit(cache=True)
def _predict_draw(u, q_all, y, normals, out):
    """Draw from N(mu*, Sigma*) of the last m coordinates given the first n."""
    n = y.shape[0]
    m = q_all.shape[0] - n
    a_t = np.empty((m, n))
    col = np.empty(n)
    for j in range(m):
        for i in range(n):
            col[i] = q_all[i, n + j]
        _linalg.solve_lower_t(u, col, a_t[j])
    wy = np.empty(n)
    _linalg.solve_lower_t(u, y, wy)
    mu = np.dot(a_t, wy)
    s = q_all[n:, n:] - np.dot(a_t, a_t.T)
    for i in range(m):
        for j in range(i + 1, m):
            v = 0.5 * (s[i, j] + s[j, i])
            s[i, j] = v
            s[j, i] = v
        if s[i, i] < 0.0:
            s[i, i] = 0.0
    us = np.empty_like(s)
    if _linalg.chol_upper_jitter(s, us):
        for i in range(m):
            acc = mu[i]
            for k in range(i + 1):
                acc += us[k, i] * normals[k]
            out[i] = acc
    else:
        vals, vecs = np.linalg.eigh(s)
        for i in range(m):
            vals[i] = math.sqrt(vals[i]) if vals[i] > 0.0 else 0.0
        out[:] = mu + np.dot(vecs, vals * normals)


@njit(cache=True)
def _run_block(u, qn, q_all, scales, sigma2_box, counter, y, w, tn, tnt, t_all, t_all_t,
               props, logu, sig_props, sig_logu, normals, refresh_every,
               out_draws, out_ll, out_sigma2, out_acc_s, out_acc_sig, out_scales, record):
    n = y.shape[0]
    p = t_all.shape[0]
    m = p - n
    work = np.empty(n)
    for b in range(props.shape[0]):
        sigma2 = sigma2_box[0]
        out_acc_s[b] = _sweep(u, qn, scales, sigma2, counter, y, w, tn, tnt,
                              props[b], logu[b], refresh_every)
        # exact rebuild once per iteration bounds rank-one drift
        q = np.dot(t_all * (w * scales), t_all_t)
        for i in range(p):
            for j in range(p):
                q_all[i, j] = 0.5 * (q[i, j] + q[j, i])
            q_all[i, i] += sigma2
        for i in range(n):
            for j in range(n):
                qn[i, j] = q_all[i, j]
        _linalg.chol_upper_jitter(qn, u)
        counter[0] = 0
        ll = _linalg.gauss_loglik(u, y, work)
        ok, ll = _sigma_step(u, qn, y, sigma2, sig_props[b], sig_logu[b], ll)
        if ok and sig_props[b] != sigma2:
            for i in range(p):
                q_all[i, i] += sig_props[b] - sigma2
            sigma2_box[0] = sig_props[b]
        out_acc_sig[b] = 1 if ok else 0
        out_ll[b] = ll
        out_sigma2[b] = sigma2_box[0]
        if m > 0:
            _predict_draw(u, q_all, y, normals[b], out_draws[b])
        if record:
            out_scales[b] = scales


# ---------------------------------------------------------------------------
# Python-level steps
# ---------------------------------------------------------------------------


def conditional_gaussian(K: KernelMatrix, y):
    """Mean and covariance of the non-training coordinates given ``y``."""
    if K.dirty:
        raise RuntimeError("factor cache is stale; call refactor()")
    n = K.n_train
    if K.size == n:
        raise ValueError("no prediction coordinates (m = 0)")
    y = np.asarray(y, dtype=float)
    low = K.chol
    cross = K.Q[:n, n:]
    a = linalg.solve_triangular(low, cross, lower=True)
    wy = linalg.solve_triangular(low, y, lower=True)
    mean = a.T @ wy
    cov = K.Q[n:, n:] - a.T @ a
    cov = 0.5 * (cov + cov.T)
    diag = np.diag_indices_from(cov)
    cov[diag] = np.maximum(cov[diag], 0.0)
    return mean, cov


def draw_predictive(K: KernelMatrix, y, rng: RngStream, size: int) -> np.ndarray:
    """``size`` draws of the non-training coordinates given ``y`` (the chain's draw step)."""
    if K.dirty:
        raise RuntimeError("factor cache is stale; call refactor()")
    y = np.ascontiguousarray(y, dtype=float)
    m = K.size - K.n_train
    normals = rng.generator.standard_normal((size, m))
    out = np.empty((size, m))
    for i in range(size):
        _predict_draw(K._u, K.Q, y, normals[i], out[i])
    return out


def _state_arrays(K: KernelMatrix):
    n = K.n_train
    tn = np.ascontiguousarray(K.patterns[:n])
    return tn, np.ascontiguousarray(tn.T)


def step_scales(state: LatentState, K: KernelMatrix, y, params: StableParams, rng: RngStream,
                proposals=None, log_u=None, refresh_every: int = 50, audit: bool = False,
                audit_tol: float = 1e-10):
    """One sweep of independence proposals over all latent scales.

    ``state`` must be ``K.state``. Proposals and log-uniforms may be supplied
    (for tests); otherwise they are drawn from ``rng``. With ``audit=True``
    every rank-one log ratio is compared against a from-scratch evaluation
    and :class:`AuditError` is raised on disagreement. Returns
    ``(state, K, n_accepted)``.
    """
    if state is not K.state:
        raise ValueError("state must be the kernel's own state")
    n_pat = len(K.weights)
    if proposals is None:
        proposals = sample_positive_stable(params.alpha / 2, rng, size=n_pat)
    if log_u is None:
        log_u = np.log(rng.generator.uniform(size=n_pat))
    proposals = np.asarray(proposals, dtype=float)
    log_u = np.asarray(log_u, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    if audit:
        accepted = _audited_sweep(K, y, proposals, log_u, audit_tol)
    else:
        tn, tnt = _state_arrays(K)
        qn = np.ascontiguousarray(K.train_block)
        counter = np.zeros(1, dtype=np.int64)
        accepted = _sweep(K._u, qn, K.state.scales, K.state.sigma2, counter, y, K.weights,
                          tn, tnt, proposals, log_u, refresh_every)
        K.refactor()
    K.state.log_lik = K.log_marginal(y)
    return K.state, K, int(accepted)


def _audited_sweep(K: KernelMatrix, y, proposals, log_u, tol):
    n = K.n_train
    accepted = 0
    for k, sp in enumerate(proposals):
        if not sp < SATURATION:
            continue
        ll_cur = K.log_marginal(y)
        c = K.weights[k] * (sp - K.state.scales[k])
        tau = K.patterns[:n, k]
        z = linalg.solve_triangular(K.chol, tau, lower=True)
        wy = linalg.solve_triangular(K.chol, y, lower=True)
        d = 1.0 + c * (z @ z)
        prop = K.copy()
        prop.state.scales[k] = sp
        prop.refactor()
        ll_new = prop.log_marginal(y)
        scratch = ll_new - ll_cur
        if d > DOWNDATE_FLOOR:
            fast = -0.5 * math.log(d) + 0.5 * c * (z @ wy) ** 2 / d
            # the scratch ratio carries rounding error of both log-likelihoods
            if abs(fast - scratch) > tol * max(1.0, abs(ll_cur), abs(ll_new)):
                raise AuditError(f"pattern {k}: rank-one {fast!r} vs scratch {scratch!r}")
        else:
            fast = scratch
        if log_u[k] < fast:
            K.rank_one_update(k, float(sp))
            accepted += 1
    return accepted


def step_sigma(state: LatentState, K: KernelMatrix, y, rng: RngStream,
               proposal: float | None = None, log_u: float | None = None):
    """Independence proposal of sigma2 from half-Cauchy(0, 1). Returns (state, K, accepted)."""
    if state is not K.state:
        raise ValueError("state must be the kernel's own state")
    if proposal is None:
        proposal = sample_half_cauchy(rng)
    if log_u is None:
        log_u = math.log(rng.generator.uniform())
    y = np.ascontiguousarray(y, dtype=float)
    ll_cur = K.log_marginal(y)
    if proposal == K.state.sigma2:
        return K.state, K, True
    trial = K.copy()
    try:
        trial.set_sigma2(proposal)
    except np.linalg.LinAlgError:
        return K.state, K, False
    ll_new = trial.log_marginal(y)
    if log_u < ll_new - ll_cur:
        K.set_sigma2(proposal)
        K.state.log_lik = ll_new
        return K.state, K, True
    K.state.log_lik = ll_cur
    return K.state, K, False


# ---------------------------------------------------------------------------
# chain driver
# ---------------------------------------------------------------------------


def _as_matrix(x, dim=None) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None] if dim in (None, 1) else arr.reshape(-1, dim)
    if arr.size == 0:
        arr = arr.reshape(0, dim if dim is not None else arr.shape[-1])
    return arr


def pooled_table(X, X_star, n_samples: int = 200_000, seed: int = 0) -> PartitionTable:
    """Pattern table over training rows followed by prediction rows."""
    pooled = np.vstack([X, X_star]) if len(X_star) else X
    return partition_table(pooled, rng=RngStream(seed, (1 << 30,)), n_samples=n_samples)


def run_chain(y, X, X_star, params: StableParams, config: ChainConfig,
              table: PartitionTable | None = None, stream_id: int = 0,
              trace_path=None, initial_state: LatentState | None = None) -> PredictiveDraws:
    """Run one chain and return its kept predictive draws.

    ``table`` must describe the pooled rows ``[X; X_star]`` in that order; it
    is built when not given.
    """
    if not 0 < params.alpha < 2:
        raise ValueError("the latent-scale model needs 0 < alpha < 2")
    y = np.ascontiguousarray(y, dtype=float).ravel()
    X = _as_matrix(X)
    X_star = _as_matrix(X_star, X.shape[1])
    n, m = len(X), len(X_star)
    if len(y) != n:
        raise ValueError("y and X disagree in length")
    if table is None:
        table = pooled_table(X, X_star, config.n_samples, config.seed)
    if table.n_points != n + m:
        raise ValueError("table does not cover the pooled inputs")

    rng = RngStream(config.seed, stream_id)
    state = initial_state.copy() if initial_state is not None else prior_state(table, params, rng)
    K = KernelMatrix(table.patterns.T, pattern_weights(table, params), state, n)

    t_all = np.ascontiguousarray(K.patterns)
    t_all_t = np.ascontiguousarray(t_all.T)
    tn, tnt = _state_arrays(K)
    w = K.weights
    n_pat = len(w)
    u = K._u.copy()
    qn = np.ascontiguousarray(K.train_block)
    q_all = K.Q.copy()
    scales = state.scales.copy()
    sigma2_box = np.array([state.sigma2])
    counter = np.zeros(1, dtype=np.int64)

    T = config.T
    draws_all = np.empty((T, m))
    log_lik = np.empty(T)
    sigma2 = np.empty(T)
    acc_s = np.empty(T, dtype=np.int64)
    acc_sig = np.empty(T, dtype=np.int64)
    scales_trace = np.empty((T, n_pat)) if config.record_scales else np.empty((1, n_pat))
    alpha_half = params.alpha / 2
    gen = rng.generator
    for start in range(0, T, config.block):
        b = min(config.block, T - start)
        props = sample_positive_stable(alpha_half, rng, size=(b, n_pat))
        logu = np.log(gen.uniform(size=(b, n_pat)))
        sig_props = sample_half_cauchy(rng, size=b)
        sig_logu = np.log(gen.uniform(size=b))
        normals = gen.standard_normal((b, m))
        sl = slice(start, start + b)
        out_scales = scales_trace[sl] if config.record_scales else np.empty((b, n_pat))
        _run_block(u, qn, q_all, scales, sigma2_box, counter, y, w, tn, tnt, t_all, t_all_t,
                   props, logu, sig_props, sig_logu, normals, config.refresh_every,
                   draws_all[sl], log_lik[sl], sigma2[sl], acc_s[sl], acc_sig[sl],
                   out_scales, config.record_scales)
    if trace_path is not None:
        with open(trace_path, "a", encoding="utf-8") as fh:
            for t in range(T):
                fh.write(json.dumps({
                    "chain": stream_id, "iteration": t, "log_lik": float(log_lik[t]),
                    "sigma2": float(sigma2[t]),
                    "scale_accept_rate": float(acc_s[t]) / n_pat,
                    "sigma_accepted": bool(acc_sig[t]),
                }) + "\n")
    kept = config.kept_iterations
    return PredictiveDraws(
        draws=draws_all[kept], log_lik=log_lik, sigma2=sigma2, accept_scales=acc_s,
        accept_sigma=acc_sig, n_patterns=n_pat,
        scales=scales_trace if config.record_scales else None,
        meta={"stream_id": stream_id, "n_train": n, "n_pred": m},
    )


def band_ratio(trace, start: int = 1000, width: int = 1000) -> float:
    """Difference of the means of two consecutive trace bands in units of their pooled SD.

    The bands are ``trace[start:start+width]`` and the ``width`` values after
    it. Values below 3 indicate the trace has settled by ``start``.
    """
    trace = np.asarray(trace, dtype=float)
    if len(trace) < start + 2 * width:
        raise ValueError(f"need at least {start + 2 * width} iterations, got {len(trace)}")
    a = trace[start:start + width]
    b = trace[start + width:start + 2 * width]
    sd = math.sqrt(0.5 * (a.var(ddof=1) + b.var(ddof=1)))
    diff = abs(a.mean() - b.mean())
    if sd == 0.0:
        return 0.0 if diff == 0.0 else math.inf
    return diff / sd
