"""Sign patterns induced by affine hyperplanes on a finite point set.

A pattern assigns +1/-1 to every input point according to the side of a
hyperplane ``b0 + <w, x> = 0`` it falls on. A pattern and its negation give
the same rank-one covariance term, so only one representative per pair is
kept: the *canonical* one, whose first entry is +1.

Patterns are returned as ``(L, n)`` int8 arrays, one canonical pattern per
row, sorted in a deterministic order.
"""

from __future__ import annotations

import warnings

import numpy as np

from .stable import RngStream

# relative tolerance for deciding that three points are collinear
COLLINEAR_TOL = 1e-12
DEFAULT_DRAWS_PER_POINT = 200_000


class UnderCoverageWarning(UserWarning):
    """Monte Carlo discovery was still finding new patterns near the end."""


def canonicalize(labels) -> np.ndarray:
    """Flip the signs of a +/-1 vector (or rows of a matrix) so the first entry is +1."""
    lab = np.asarray(labels)
    if lab.size and not np.all(np.abs(lab) == 1):
        raise ValueError("labels must be +1 or -1 (no zeros)")
    lab = lab.astype(np.int8)
    if lab.ndim == 1:
        return -lab if lab.size and lab[0] < 0 else lab
    flip = lab[:, 0] < 0
    lab = lab.copy()
    lab[flip] *= -1
    return lab


def both_orientations(patterns) -> np.ndarray:
    """Stack every canonical pattern with its negation (the raw, un-merged set)."""
    patterns = np.asarray(patterns, dtype=np.int8)
    return np.concatenate([patterns, -patterns])


def _as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
        raise ValueError("points must be an (n, I) array with n >= 1 and I >= 1")
    if not np.all(np.isfinite(pts)):
        raise ValueError("points must be finite")
    return pts


def _check_distinct(pts: np.ndarray) -> None:
    if len(np.unique(pts, axis=0)) != len(pts):
        raise ValueError("input points must be pairwise distinct")


def _pack(bool_rows: np.ndarray) -> np.ndarray:
    return np.packbits(bool_rows, axis=-1)


def _rows_from_keys(keys, n: int) -> np.ndarray:
    keys = sorted(keys, reverse=True)
    packed = np.frombuffer(b"".join(keys), dtype=np.uint8).reshape(len(keys), -1)
    bits = np.unpackbits(packed, axis=1, count=n).astype(bool)
    return np.where(bits, 1, -1).astype(np.int8)


def enumerate_1d(xs) -> np.ndarray:
    """All canonical patterns of strictly increasing 1-D inputs.

    Row 0 is the constant pattern; row ``j`` (1 <= j < n) changes sign between
    ``xs[j-1]`` and ``xs[j]``.
    """
    xs = np.asarray(xs, dtype=float).ravel()
    if xs.size < 1:
        raise ValueError("need at least one point")
    if not np.all(np.isfinite(xs)):
        raise ValueError("inputs must be finite")
    if np.any(np.diff(xs) <= 0):
        raise ValueError("inputs must be sorted and distinct")
    n = xs.size
    idx = np.arange(n)
    cut = np.arange(n)[:, None]
    out = np.where(idx[None, :] < cut, 1, -1).astype(np.int8)
    out[0] = 1
    return out


def enumerate_2d(points, tol: float = COLLINEAR_TOL) -> np.ndarray:
    """All canonical patterns realisable by an affine line in the plane.

    Every separable labelling can be moved, without changing the labels of
    points off the line, to a line through two input points. So for each
    distinct line through a pair of points, the off-line points keep their
    side and the on-line points (ordered along the line) take every
    threshold labelling: a prefix on one side, the rest on the other.
    Side tests use cross products of coordinate differences; values within
    ``tol * span**2`` of zero count as collinear.
    """
    pts = _as_points(points)
    if pts.shape[1] != 2:
        raise ValueError("enumerate_2d needs I = 2")
    _check_distinct(pts)
    n = len(pts)
    if n == 1:
        return np.ones((1, 1), dtype=np.int8)
    span = float(np.max(np.ptp(pts, axis=0)))
    eps = tol * span * span
    keys = set()
    for i in range(n - 1):
        d = pts - pts[i]
        cross = np.outer(d[:, 0], d[:, 1]) - np.outer(d[:, 1], d[:, 0])
        side = np.sign(cross).astype(np.int8)
        side[np.abs(cross) <= eps] = 0
        for j in range(i + 1, n):
            s = side[j]
            on = np.flatnonzero(s == 0)
            # handle each line once: from its lowest-index pair
            if on[0] != i or on[1] != j:
                continue
            order = on[np.argsort(d[on] @ d[j], kind="stable")]
            pos = s > 0
            rows = np.repeat(pos[None, :], 2 * (len(order) + 1), axis=0)
            for ell in range(len(order) + 1):
                rows[2 * ell, order[:ell]] = True
                rows[2 * ell + 1, order[ell:]] = True
            rows[~rows[:, 0]] = ~rows[~rows[:, 0]]
            for key in _pack(rows):
                keys.add(key.tobytes())
    return _rows_from_keys(keys, n)


def discover_mc(points, n_draws: int, rng: RngStream, chunk: int = 50_000) -> np.ndarray:
    """Patterns hit by ``n_draws`` random hyperplanes with standard Gaussian (b0, w).

    Warns with ``UnderCoverageWarning`` when the last tenth of the draws still
    found patterns not seen before.
    """
    pts = _as_points(points)
    if n_draws < 1:
        raise ValueError("n_draws must be >= 1")
    n, dim = pts.shape
    design = np.hstack([np.ones((n, 1)), pts])
    first_seen: dict[bytes, int] = {}
    done = 0
    gen = rng.generator
    while done < n_draws:
        k = min(chunk, n_draws - done)
        v = gen.standard_normal((k, dim + 1))
        z = v @ design.T
        good = np.flatnonzero(np.all(z != 0, axis=1))
        rows = z[good] > 0
        rows[~rows[:, 0]] = ~rows[~rows[:, 0]]
        uniq, idx = np.unique(_pack(rows), axis=0, return_index=True)
        for key, offset in zip(uniq, idx):
            first_seen.setdefault(key.tobytes(), done + int(good[offset]))
        done += k
    if n_draws >= 10 and max(first_seen.values()) >= 0.9 * n_draws:
        warnings.warn("new sign patterns were still found in the last decile of draws; "
                      "the pattern set may be incomplete", UnderCoverageWarning, stacklevel=2)
    return _rows_from_keys(first_seen.keys(), n)


def enumerate_patterns(points, rng: RngStream | None = None, n_draws: int | None = None) -> np.ndarray:
    """Canonical patterns for distinct points of any dimension.

    Exact for I = 1 (points must then be sorted) and I = 2; Monte Carlo
    discovery otherwise.
    """
    pts = _as_points(points)
    n, dim = pts.shape
    if dim == 1:
        return enumerate_1d(pts[:, 0])
    if dim == 2:
        return enumerate_2d(pts)
    _check_distinct(pts)
    if rng is None:
        rng = RngStream(0)
    if n_draws is None:
        n_draws = DEFAULT_DRAWS_PER_POINT * n
    return discover_mc(pts, n_draws, rng)
