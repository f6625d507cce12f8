"""Self-check suites run by the ``stable-check`` and ``oracle-check`` commands."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, stats

from .cones import partition_table, q_exact_1d, same_side_prob
from .kernel import marginal_density_mc, sample_prior_q
from .stable import (
    RngStream,
    StableParams,
    levy_cdf,
    mixture_identity_residual,
    sample_positive_stable,
)


@dataclass
class CheckResult:
    name: str
    value: float
    threshold: float
    passed: bool

    def __post_init__(self):
        self.value = float(self.value)
        self.passed = bool(self.passed)

    def as_dict(self) -> dict:
        return {"name": self.name, "value": self.value, "threshold": self.threshold,
                "passed": self.passed}


def _laplace_check(alpha_half, lam, n, rng):
    s = sample_positive_stable(alpha_half, rng, size=n)
    v = np.exp(-lam * s)
    se = v.std(ddof=1) / math.sqrt(n)
    return abs(v.mean() - math.exp(-lam ** alpha_half)) / se


def stable_suite(seed: int = 0, n_ks: int = 100_000, n_laplace: int = 1_000_000) -> list[CheckResult]:
    rng = RngStream(seed, 11)
    out = []
    draws = sample_positive_stable(0.5, rng.child(0), size=n_ks)
    ks = stats.kstest(draws, levy_cdf).statistic
    out.append(CheckResult("levy_ks", float(ks), 0.005, ks < 0.005))
    for i, a in enumerate((0.25, 0.5, 0.75, 0.9)):
        for j, lam in enumerate((0.5, 1.0, 2.0)):
            z = _laplace_check(a, lam, n_laplace, rng.child(100 + 10 * i + j))
            out.append(CheckResult(f"laplace_a{a}_lam{lam}", float(z), 3.0, z < 3.0))
    for nu in (1.0, 2.0):
        for z in (0.5, 1.0, 2.0):
            r = mixture_identity_residual(z, StableParams(1.0, nu))
            out.append(CheckResult(f"mixture_nu{nu}_z{z}", r, 1e-3, r < 1e-3))
    return out


def voigt_by_inversion(y, gamma: float, sigma2: float) -> np.ndarray:
    """Density with characteristic function exp(-gamma |t| - sigma2 t^2 / 2), by quadrature."""
    def one(v):
        f = lambda t: math.cos(t * v) * math.exp(-gamma * t - 0.5 * sigma2 * t * t)  # noqa: E731
        return integrate.quad(f, 0.0, np.inf, limit=400)[0] / math.pi
    return np.array([one(v) for v in np.atleast_1d(y)])


def density_check(nu: float = 1.0, sigma2: float = 0.25, n_draws: int = 200_000,
                  seed: int = 0, grid=None) -> CheckResult:
    """Mixture density at one input against the inverted closed-form characteristic function."""
    grid = np.linspace(-5, 5, 41) if grid is None else np.asarray(grid, dtype=float)
    table = q_exact_1d([0.3])
    est, _ = marginal_density_mc(grid[:, None], table, StableParams(1.0, nu), sigma2,
                                 n_draws, RngStream(seed, 12))
    ref = voigt_by_inversion(grid, math.sqrt(nu / 2), sigma2)
    err = float(np.max(np.abs(est - ref)))
    return CheckResult("density_n1_alpha1", err, 1e-2, err < 1e-2)


def diagonal_check(alpha: float, n_draws: int = 100_000, seed: int = 0,
                   nu: float = 1.5, sigma2: float = 0.3) -> list[CheckResult]:
    """KS of (Q_ii - sigma2)/nu against the positive alpha/2-stable sampler, and sign monotonicity."""
    xs = np.linspace(-2, 2, 8)
    table = partition_table(xs)
    params = StableParams(alpha, nu)
    rng = RngStream(seed, 13)
    q = sample_prior_q(table, params, sigma2, n_draws, rng.child(0))
    ref = sample_positive_stable(alpha / 2, rng.child(1), size=n_draws)
    diag = (q[:, 0, 0] - sigma2) / nu
    ks = float(stats.ks_2samp(diag, ref).statistic)
    iu = np.triu_indices(len(xs), 1)
    freq = (q[:, iu[0], iu[1]] > 0).mean(axis=0)
    pij = [same_side_prob(table, i, j) for i, j in zip(*iu)]
    rho = float(stats.spearmanr(pij, freq).statistic)
    return [CheckResult(f"diag_ks_alpha{alpha}", ks, 0.01, ks < 0.01),
            CheckResult(f"sign_rank_corr_alpha{alpha}", rho, 0.99, rho > 0.99)]


def oracle_suite(seed: int = 0) -> list[CheckResult]:
    out = [density_check(seed=seed)]
    for a in (1.0, 1.5):
        out.extend(diagonal_check(a, seed=seed))
    return out
