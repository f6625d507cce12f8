"""Probabilities of sign patterns under a standard Gaussian random hyperplane.

For a pattern ``tau`` the probability ``q`` is that of the cone
``{v : tau_i * <v, (1, x_i)> > 0 for all i}`` (counting ``-tau`` too, since
patterns are merged with their negation) under ``v ~ N(0, I_{I+1})``.
In 1-D this reduces to arctan differences; otherwise it is estimated by
Monte Carlo in the (I+1)-dimensional weight space.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .partitions import _as_points, _pack, canonicalize, enumerate_1d, enumerate_patterns
from .stable import RngStream

DEFAULT_SAMPLES = 200_000


class DroppedPatternWarning(UserWarning):
    """Patterns with a zero Monte Carlo estimate were removed from a table."""


class ConeEstimate(NamedTuple):
    prob: float
    std_error: float
    found: bool


@dataclass
class PartitionTable:
    """Canonical patterns over a point set with their probabilities.

    ``patterns`` is ``(L, n)``; ``probs`` sums to one; ``std_errors`` is zero
    for exactly computed entries. ``raw_sum`` is the total before
    renormalisation.
    """

    patterns: np.ndarray
    probs: np.ndarray
    std_errors: np.ndarray
    points: np.ndarray
    raw_sum: float = 1.0
    exact: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.patterns = np.asarray(self.patterns, dtype=np.int8)
        self.probs = np.asarray(self.probs, dtype=float)
        self.std_errors = np.asarray(self.std_errors, dtype=float)
        if not (len(self.patterns) == len(self.probs) == len(self.std_errors)):
            raise ValueError("patterns, probs and std_errors must have equal length")
        if np.any(self.probs <= 0):
            raise ValueError("stored probabilities must be strictly positive")

    def __len__(self):
        return len(self.probs)

    @property
    def n_points(self) -> int:
        return self.patterns.shape[1]


def q_exact_1d(xs, patterns=None) -> PartitionTable:
    """Exact merged probabilities for sorted distinct 1-D inputs.

    A gap between neighbours gets ``(arctan(x[j+1]) - arctan(x[j])) / pi``;
    the constant class gets the remaining mass.
    """
    xs = np.asarray(xs, dtype=float).ravel()
    expected = enumerate_1d(xs)
    if patterns is not None and not np.array_equal(np.asarray(patterns, dtype=np.int8), expected):
        raise ValueError("patterns do not match enumerate_1d on these inputs")
    at = np.arctan(xs)
    probs = np.empty(len(xs))
    probs[1:] = np.diff(at) / math.pi
    probs[0] = 1.0 - (at[-1] - at[0]) / math.pi
    return PartitionTable(expected, probs, np.zeros(len(xs)), xs[:, None], float(probs.sum()), exact=True)


def _design(points) -> np.ndarray:
    pts = _as_points(points)
    return np.hstack([np.ones((len(pts), 1)), pts])


def q_mc(points, pattern, n_samples: int, rng: RngStream, chunk: int = 100_000) -> ConeEstimate:
    """Monte Carlo estimate of one merged pattern probability."""
    if n_samples < 1000:
        raise ValueError("n_samples must be at least 1000")
    design = _design(points)
    tau = np.asarray(pattern, dtype=float)
    if tau.shape != (design.shape[0],):
        raise ValueError("pattern length must equal the number of points")
    hits = 0
    done = 0
    gen = rng.generator
    while done < n_samples:
        k = min(chunk, n_samples - done)
        z = gen.standard_normal((k, design.shape[1])) @ design.T * tau
        hits += int(np.count_nonzero(np.all(z > 0, axis=1) | np.all(z < 0, axis=1)))
        done += k
    p = hits / n_samples
    return ConeEstimate(p, math.sqrt(p * (1 - p) / n_samples), hits > 0)


def orthant_mc(points, pattern, n_samples: int, rng: RngStream) -> ConeEstimate:
    """Cross-check of ``q_mc``: sample Z ~ N(0, sigma_tau) from an eigen-factor.

    Returns the merged probability ``P(Z > 0) + P(Z < 0)``.
    """
    cov = sigma_tau(points, pattern)
    vals, vecs = np.linalg.eigh(cov)
    keep = vals > 1e-10 * max(vals.max(), 1.0)
    factor = vecs[:, keep] * np.sqrt(vals[keep])
    z = rng.generator.standard_normal((n_samples, factor.shape[1])) @ factor.T
    hits = np.count_nonzero(np.all(z > 0, axis=1) | np.all(z < 0, axis=1))
    p = hits / n_samples
    return ConeEstimate(p, math.sqrt(p * (1 - p) / n_samples), hits > 0)


def sigma_tau(points, pattern) -> np.ndarray:
    """Covariance of ``Z_i = tau_i (b0 + <w, x_i>)``: ``tau_i tau_j (1 + <x_i, x_j>)``."""
    design = _design(points)
    tau = np.asarray(pattern, dtype=float)
    return np.outer(tau, tau) * (design @ design.T)


def estimate_probs_mc(points, patterns, n_samples: int, rng: RngStream,
                      chunk: int = 20_000) -> PartitionTable:
    """Estimate all pattern probabilities from one shared set of hyperplane draws.

    Each draw is assigned to the pattern it realises, so estimates are
    multinomial frequencies. Draws landing on no listed pattern are counted
    in ``meta['unmatched']``. Zero-count patterns are dropped with a warning,
    then probabilities are renormalised.
    """
    design = _design(points)
    patterns = canonicalize(np.asarray(patterns, dtype=np.int8))
    index = {key.tobytes(): i for i, key in enumerate(_pack(patterns > 0))}
    counts = np.zeros(len(patterns), dtype=np.int64)
    unmatched = 0
    done = 0
    gen = rng.generator
    while done < n_samples:
        k = min(chunk, n_samples - done)
        z = gen.standard_normal((k, design.shape[1])) @ design.T
        rows = z > 0
        rows[~rows[:, 0]] = ~rows[~rows[:, 0]]
        uniq, cnt = np.unique(_pack(rows), axis=0, return_counts=True)
        for key, c in zip(uniq, cnt):
            i = index.get(key.tobytes())
            if i is None:
                unmatched += int(c)
            else:
                counts[i] += c
        done += k
    if unmatched:
        warnings.warn(f"{unmatched} hyperplane draws realised patterns missing from the table",
                      RuntimeWarning, stacklevel=2)
    probs = counts / n_samples
    ses = np.sqrt(probs * (1 - probs) / n_samples)
    raw_sum = float(probs.sum())
    keep = counts > 0
    if not keep.all():
        warnings.warn(f"dropped {int((~keep).sum())} patterns with zero estimated probability",
                      DroppedPatternWarning, stacklevel=2)
    probs = probs[keep]
    return PartitionTable(patterns[keep], probs / probs.sum(), ses[keep], _as_points(points),
                          raw_sum, exact=False,
                          meta={"unmatched": unmatched, "dropped": int((~keep).sum()),
                                "n_samples": n_samples})


def same_side_prob(table: PartitionTable, i: int, j: int) -> float:
    """Probability that points ``i`` and ``j`` fall on the same side."""
    same = table.patterns[:, i] == table.patterns[:, j]
    return float(table.probs[same].sum())


def partition_table(points, rng: RngStream | None = None,
                    n_samples: int = DEFAULT_SAMPLES) -> PartitionTable:
    """Patterns and probabilities over arbitrary (possibly repeated) points.

    Points are de-duplicated and sorted first; pattern columns are then
    expanded back to the original rows, since equal points always share a
    label.
    """
    pts = _as_points(points)
    uniq, inverse = np.unique(pts, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).ravel()
    if rng is None:
        rng = RngStream(0)
    if uniq.shape[1] == 1:
        base = q_exact_1d(uniq[:, 0])
    else:
        patterns = enumerate_patterns(uniq, rng=rng.child(0))
        base = estimate_probs_mc(uniq, patterns, n_samples, rng.child(1))
    expanded = canonicalize(base.patterns[:, inverse])
    return PartitionTable(expanded, base.probs, base.std_errors, pts, base.raw_sum,
                          exact=base.exact, meta=dict(base.meta, n_unique=len(uniq)))
