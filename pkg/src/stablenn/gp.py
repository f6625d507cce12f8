"""Squared-exponential Gaussian-process baseline with a grid-searched hyperparameter set."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .data import Dataset

LENGTH_FACTORS = (0.1, 0.2, 0.5, 1.0, 2.0)
SIGNAL_VARIANCES = (0.5, 1.0, 5.0, 25.0)
NUGGETS = (1e-4, 1e-2, 0.25, 1.0)


@dataclass(frozen=True)
class GpHyper:
    signal: float
    lengths: tuple
    nugget: float

    def __post_init__(self):
        if not self.signal > 0 or any(not ell > 0 for ell in self.lengths):
            raise ValueError("signal variance and length-scales must be positive")
        if not self.nugget >= 1e-8:
            raise ValueError("nugget must be at least 1e-8")


@dataclass
class GpPrediction:
    mean: np.ndarray
    var: np.ndarray
    hyper: GpHyper
    log_ml: float


def se_kernel(A, B, hyper: GpHyper) -> np.ndarray:
    d = (A[:, None, :] - B[None, :, :]) / np.asarray(hyper.lengths)
    return hyper.signal * np.exp(-0.5 * np.sum(d * d, axis=-1))


def default_grid(X) -> list[GpHyper]:
    X = np.asarray(X, dtype=float).reshape(len(X), -1)
    span = np.ptp(X, axis=0)
    span = np.where(span > 0, span, 1.0)
    return [GpHyper(s, tuple(f * span), g)
            for f, s, g in itertools.product(LENGTH_FACTORS, SIGNAL_VARIANCES, NUGGETS)]


def log_marginal(X, y, hyper: GpHyper) -> float:
    K = se_kernel(X, X, hyper)
    K[np.diag_indices_from(K)] += hyper.nugget
    c, low = linalg.cho_factor(K, lower=True)
    alpha = linalg.cho_solve((c, low), y)
    return float(-0.5 * y @ alpha - np.log(np.diag(c)).sum() - 0.5 * len(y) * math.log(2 * math.pi))


def gaussian_condition(K_train, K_cross, K_test, y):
    """Mean and covariance of the test block of a joint zero-mean Gaussian given ``y``."""
    low = linalg.cholesky(K_train, lower=True)
    a = linalg.solve_triangular(low, K_cross, lower=True)
    wy = linalg.solve_triangular(low, y, lower=True)
    cov = K_test - a.T @ a
    return a.T @ wy, 0.5 * (cov + cov.T)


def gp_fit_predict(train: Dataset, X_star, grid: list[GpHyper] | None = None) -> GpPrediction:
    """Pick the grid cell with the largest log marginal likelihood and krige."""
    X, y = train.X, train.y
    X_star = np.asarray(X_star, dtype=float).reshape(-1, X.shape[1])
    best, best_ll = None, -np.inf
    for hyper in grid if grid is not None else default_grid(X):
        try:
            ll = log_marginal(X, y, hyper)
        except linalg.LinAlgError:
            continue
        if ll > best_ll:
            best, best_ll = hyper, ll
    if best is None:
        raise np.linalg.LinAlgError("every grid cell gave a singular kernel matrix")
    K = se_kernel(X, X, best)
    K[np.diag_indices_from(K)] += best.nugget
    cross = se_kernel(X, X_star, best)
    # only the diagonal of the test covariance is needed
    low = linalg.cholesky(K, lower=True)
    a = linalg.solve_triangular(low, cross, lower=True)
    mean = a.T @ linalg.solve_triangular(low, y, lower=True)
    var = best.signal + best.nugget - np.sum(a * a, axis=0)
    return GpPrediction(mean, np.maximum(var, 0.0), best, best_ll)
