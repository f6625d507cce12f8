"""Conditionally Gaussian covariance of the stable-limit network.

Given latent positive scales ``s_l`` and noise variance ``sigma2`` the
responses are Gaussian with covariance

    Q = sigma2 * I + nu * sum_l q_l**(2/alpha) * s_l * tau_l tau_l^T

where ``(tau_l, q_l)`` come from a :class:`~stablenn.cones.PartitionTable`.
The first ``n_train`` rows/columns form the training block, which carries
an upper Cholesky factor kept current through rank-one updates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _linalg
from .cones import PartitionTable
from .stable import RngStream, StableParams, sample_positive_stable

# below this value of 1 + c * tau' Q^-1 tau a downdate is refused
DOWNDATE_FLOOR = 1e-6


class FactorizationError(np.linalg.LinAlgError):
    """The training block could not be factorised even after jitter."""


@dataclass
class LatentState:
    scales: np.ndarray
    sigma2: float
    log_lik: float = float("nan")

    def __post_init__(self):
        self.scales = np.asarray(self.scales, dtype=float)
        if np.any(~np.isfinite(self.scales)) or np.any(self.scales <= 0):
            raise ValueError("scales must be finite and strictly positive")
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")

    def copy(self) -> "LatentState":
        return LatentState(self.scales.copy(), self.sigma2, self.log_lik)


def pattern_weights(table: PartitionTable, params: StableParams) -> np.ndarray:
    """Per-pattern factor ``nu * q**(2/alpha)`` multiplying the latent scale."""
    return params.nu * table.probs ** (2.0 / params.alpha)


def prior_state(table: PartitionTable, params: StableParams, rng: RngStream,
                sigma2: float | None = None) -> LatentState:
    """Scales drawn from the positive alpha/2-stable prior; sigma2 from half-Cauchy unless given."""
    scales = sample_positive_stable(params.alpha / 2, rng, size=len(table))
    if sigma2 is None:
        sigma2 = float(np.abs(rng.generator.standard_cauchy()))
    return LatentState(scales, sigma2)


class KernelMatrix:
    """Full pooled covariance plus a factor cache for its training block."""

    def __init__(self, patterns, weights, state: LatentState, n_train: int | None = None):
        # patterns: (P, L), one column per pattern
        self.patterns = np.ascontiguousarray(patterns, dtype=float)
        self.weights = np.asarray(weights, dtype=float)
        if self.patterns.shape[1] != len(self.weights):
            raise ValueError("one weight per pattern is required")
        if len(state.scales) != len(self.weights):
            raise ValueError("one scale per pattern is required")
        self.state = state
        self.n_train = self.patterns.shape[0] if n_train is None else int(n_train)
        if not 1 <= self.n_train <= self.patterns.shape[0]:
            raise ValueError("n_train must be between 1 and the number of pooled points")
        self.Q = None
        self._u = None
        self.log_det = float("nan")
        self.dirty = True
        self.refactor()

    @property
    def size(self) -> int:
        return self.patterns.shape[0]

    @property
    def chol(self) -> np.ndarray:
        """Lower Cholesky factor of the training block."""
        return self._u.T

    @property
    def train_block(self) -> np.ndarray:
        n = self.n_train
        return self.Q[:n, :n]

    def assemble(self) -> np.ndarray:
        ws = self.weights * self.state.scales
        q = (self.patterns * ws) @ self.patterns.T
        q = 0.5 * (q + q.T)
        q[np.diag_indices_from(q)] += self.state.sigma2
        self.Q = q
        return q

    def refactor(self, rebuild: bool = True) -> None:
        """Factorise the training block from scratch (rebuilding Q from the state first)."""
        if rebuild or self.Q is None:
            self.assemble()
        block = np.ascontiguousarray(self.train_block)
        u = np.zeros_like(block)
        if not _linalg.chol_upper_jitter(block, u):
            self.dirty = True
            raise FactorizationError("training block is not positive definite")
        self._u = u
        self.log_det = _linalg.log_det_upper(u)
        self.dirty = False

    def rank_one_update(self, ell: int, s_new: float) -> bool:
        """Replace scale ``ell`` by ``s_new``.

        Returns True when done by an O(n^2) factor update, False when the
        downdate was refused (or broke down) and a full refactorisation was
        done instead.
        """
        if not 0 <= ell < len(self.weights):
            raise IndexError(f"pattern index {ell} out of range")
        if not (math.isfinite(s_new) and s_new > 0):
            raise ValueError("new scale must be finite and positive")
        if self.dirty:
            raise RuntimeError("factor cache is stale; call refactor()")
        c = self.weights[ell] * (s_new - self.state.scales[ell])
        if c == 0.0:
            return True
        tau = self.patterns[:, ell]
        self.state.scales[ell] = s_new
        self.Q += c * np.outer(tau, tau)
        n = self.n_train
        tau_n = np.ascontiguousarray(tau[:n])
        z = np.empty(n)
        _linalg.solve_lower_t(self._u, tau_n, z)
        d = 1.0 + c * float(z @ z)
        if d <= DOWNDATE_FLOOR:
            self.refactor()
            return False
        x = tau_n * math.sqrt(abs(c))
        if not _linalg.chol_rank1(self._u, x, 1.0 if c > 0 else -1.0):
            self.refactor()
            return False
        self.log_det += math.log(d)
        return True

    def set_sigma2(self, sigma2_new: float) -> None:
        if not sigma2_new > 0:
            raise ValueError("sigma2 must be positive")
        if sigma2_new == self.state.sigma2:
            return
        delta = sigma2_new - self.state.sigma2
        self.state.sigma2 = float(sigma2_new)
        self.Q[np.diag_indices_from(self.Q)] += delta
        self.refactor(rebuild=False)

    def log_marginal(self, y) -> float:
        """Gaussian log density of the training responses under the current Q."""
        if self.dirty:
            raise RuntimeError("factor cache is stale; call refactor()")
        y = np.ascontiguousarray(y, dtype=float)
        if y.shape != (self.n_train,):
            raise ValueError("y must have one entry per training point")
        return float(_linalg.gauss_loglik(self._u, y, np.empty_like(y)))

    def copy(self) -> "KernelMatrix":
        new = object.__new__(KernelMatrix)
        new.__dict__.update(self.__dict__)
        new.state = self.state.copy()
        new.Q = self.Q.copy()
        new._u = self._u.copy()
        return new


def assemble_q(table: PartitionTable, state: LatentState, params: StableParams,
               n_train: int | None = None) -> KernelMatrix:
    return KernelMatrix(table.patterns.T, pattern_weights(table, params), state, n_train)


def sample_prior_q(table: PartitionTable, params: StableParams, sigma2: float,
                   n_draws: int, rng: RngStream) -> np.ndarray:
    """Stack of ``n_draws`` prior covariance matrices (for small point sets)."""
    w = pattern_weights(table, params)
    s = sample_positive_stable(params.alpha / 2, rng, size=(n_draws, len(table)))
    t = table.patterns.T.astype(float)
    q = np.einsum("dl,il,jl->dij", s * w, t, t, optimize=True)
    idx = np.arange(t.shape[0])
    q[:, idx, idx] += sigma2
    return q


def marginal_density_mc(y, table: PartitionTable, params: StableParams, sigma2: float,
                        n_mixture_draws: int, rng: RngStream, chunk: int = 20_000):
    """Monte Carlo average over prior scales of the conditional Gaussian density.

    ``y`` may be one response vector or a ``(G, n)`` stack evaluated with the
    same mixture draws. Returns ``(estimate, std_error)`` arrays of shape (G,)
    (scalars for a single vector).
    """
    y = np.asarray(y, dtype=float)
    single = y.ndim == 1
    ys = np.atleast_2d(y)
    n = table.n_points
    if ys.shape[1] != n:
        raise ValueError("response length must match the table's point count")
    w = pattern_weights(table, params)
    t = table.patterns.T.astype(float)
    total = np.zeros(len(ys))
    total_sq = np.zeros(len(ys))
    done = 0
    while done < n_mixture_draws:
        k = min(chunk, n_mixture_draws - done)
        s = sample_positive_stable(params.alpha / 2, rng, size=(k, len(w)))
        q = np.einsum("dl,il,jl->dij", s * w, t, t, optimize=True)
        q[:, np.arange(n), np.arange(n)] += sigma2
        chol = np.linalg.cholesky(q)
        logdet = 2.0 * np.log(np.diagonal(chol, axis1=1, axis2=2)).sum(axis=1)
        rhs = np.broadcast_to(ys.T[None], (k, n, len(ys)))
        sol = np.linalg.solve(chol, rhs)
        quad = (sol ** 2).sum(axis=1)
        dens = np.exp(-0.5 * n * math.log(2 * math.pi) - 0.5 * logdet[:, None] - 0.5 * quad)
        total += dens.sum(axis=0)
        total_sq += (dens ** 2).sum(axis=0)
        done += k
    mean = total / n_mixture_draws
    se = np.sqrt(np.maximum(total_sq / n_mixture_draws - mean ** 2, 0.0) / n_mixture_draws)
    if single:
        return float(mean[0]), float(se[0])
    return mean, se
