"""Fit/predict orchestration, grid cross-validation over (alpha, nu), and MAE."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from .cones import PartitionTable
from .data import Dataset, split
from .mcmc import ChainConfig, PredictiveDraws, pooled_table, run_chain
from .stable import RngStream, StableParams

log = logging.getLogger(__name__)

DEFAULT_ALPHAS = (0.5, 0.7, 0.9, 1.1, 1.3, 1.5, 1.7, 1.9)
DEFAULT_NUS = (0.5, 1.0, 2.0)
DEFAULT_QUANTILES = (0.05, 0.5, 0.95)


def default_grid() -> list[tuple[float, float]]:
    return list(itertools.product(DEFAULT_ALPHAS, DEFAULT_NUS))


def mae(pred, truth) -> float:
    pred = np.asarray(pred, dtype=float).ravel()
    truth = np.asarray(truth, dtype=float).ravel()
    if pred.shape != truth.shape:
        raise ValueError(f"length mismatch: {pred.shape[0]} vs {truth.shape[0]}")
    return float(np.mean(np.abs(pred - truth)))


@dataclass
class Prediction:
    X: np.ndarray
    median: np.ndarray
    mean: np.ndarray
    quantiles: dict
    chains: list = field(default_factory=list)

    def columns(self) -> dict:
        cols = {f"x{i + 1}": self.X[:, i] for i in range(self.X.shape[1])}
        cols["mean"] = self.mean
        for q, v in self.quantiles.items():
            cols[f"q{round(100 * q):02d}"] = v
        return cols


def fit_predict(train: Dataset, X_star, params: StableParams, config: ChainConfig,
                quantiles=DEFAULT_QUANTILES, table: PartitionTable | None = None,
                stream_id=0, trace_path=None, batch: int = 0) -> Prediction:
    """Run ``config.chains`` chains and summarise the pooled predictive draws.

    With ``batch > 0`` the prediction inputs are processed in chunks of that
    size, each with its own pattern table over training plus chunk inputs.
    """
    if train.y is None:
        raise ValueError("training data needs responses")
    X_star = np.asarray(X_star, dtype=float).reshape(-1, train.dim)
    if batch > 0 and len(X_star) > batch:
        if table is not None:
            raise ValueError("a precomputed table cannot be combined with batching")
        base = stream_id if isinstance(stream_id, tuple) else (stream_id,)
        parts = [fit_predict(train, X_star[i:i + batch], params, config, quantiles,
                             stream_id=base + (i // batch,), trace_path=trace_path)
                 for i in range(0, len(X_star), batch)]
        return Prediction(
            X_star, np.concatenate([p.median for p in parts]),
            np.concatenate([p.mean for p in parts]),
            {q: np.concatenate([p.quantiles[q] for p in parts]) for q in quantiles},
            [c for p in parts for c in p.chains])
    if table is None:
        table = pooled_table(train.X, X_star, config.n_samples, config.seed)
    base = stream_id if isinstance(stream_id, tuple) else (stream_id,)
    runs: list[PredictiveDraws] = [
        run_chain(train.y, train.X, X_star, params, config, table=table,
                  stream_id=base + (c,), trace_path=trace_path)
        for c in range(config.chains)
    ]
    draws = np.concatenate([r.draws for r in runs])
    if draws.shape[1] == 0:
        empty = np.empty(0)
        return Prediction(X_star, empty, empty, {q: empty for q in quantiles}, runs)
    qs = np.quantile(draws, list(quantiles), axis=0)
    return Prediction(X_star, np.median(draws, axis=0), draws.mean(axis=0),
                      dict(zip(quantiles, qs)), runs)


@dataclass
class CvResult:
    grid: list
    mae: np.ndarray            # (cells, splits)
    best: tuple
    failures: dict = field(default_factory=dict)

    @property
    def mean_mae(self) -> np.ndarray:
        return self.mae.mean(axis=1)

    @property
    def se_mae(self) -> np.ndarray:
        k = self.mae.shape[1]
        return self.mae.std(axis=1, ddof=1) / np.sqrt(k)


def _pick_best(grid, mean_mae) -> tuple:
    finite = np.isfinite(mean_mae)
    if not finite.any():
        raise RuntimeError("every grid cell failed")
    lo = mean_mae[finite].min()
    ties = [g for g, v in zip(grid, mean_mae) if v == lo]
    return min(ties, key=lambda g: (-g[0], g[1]))


def cv_grid(train: Dataset, grid=None, splits: int = 5, split_fraction: float = 0.8,
            config: ChainConfig | None = None, split_seed: int = 0) -> CvResult:
    """Mean held-out MAE of the posterior median for every (alpha, nu) cell.

    The same random splits (drawn from ``split_seed``) are used for every
    cell; ``config.seed`` drives the chains. Cells whose chains raise are
    scored +inf and listed in ``failures``.
    """
    grid = default_grid() if grid is None else [tuple(map(float, g)) for g in grid]
    if not grid:
        raise ValueError("grid must be non-empty")
    if splits < 2:
        raise ValueError("need at least two splits")
    config = config or ChainConfig()
    rng = RngStream(split_seed, 7001)
    parts = [split(train, split_fraction, rng.child(k)) for k in range(splits)]
    tables = [pooled_table(fit.X, val.X, config.n_samples, split_seed + k)
              for k, (fit, val) in enumerate(parts)]
    scores = np.full((len(grid), splits), np.inf)
    failures = {}
    for c, (alpha, nu) in enumerate(grid):
        try:
            params = StableParams(alpha, nu)
            for k, (fit, val) in enumerate(parts):
                pred = fit_predict(fit, val.X, params, config, quantiles=(0.5,),
                                   table=tables[k], stream_id=(c, k))
                scores[c, k] = mae(pred.median, val.y)
        except (ValueError, ArithmeticError, np.linalg.LinAlgError, RuntimeError) as exc:
            scores[c] = np.inf
            failures[(alpha, nu)] = f"{type(exc).__name__}: {exc}"
            log.warning("cv cell alpha=%g nu=%g failed: %s", alpha, nu, exc)
    mean = scores.mean(axis=1)
    return CvResult(grid, scores, _pick_best(grid, mean), failures)
