"""Synthetic regression functions, a finite-width network simulator, and CSV I/O."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .stable import RngStream, StableParams, sample_symmetric_stable


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray | None = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2 or X.shape[1] < 1:
            raise ValueError("X must be an (n, I) array with I >= 1")
        if not np.all(np.isfinite(X)):
            raise ValueError("X contains non-finite values")
        self.X = X
        if self.y is not None:
            y = np.asarray(self.y, dtype=float).ravel()
            if len(y) != len(X):
                raise ValueError(f"X has {len(X)} rows but y has {len(y)} entries")
            if not np.all(np.isfinite(y)):
                raise ValueError("y contains non-finite values")
            self.y = y

    def __len__(self):
        return len(self.X)

    @property
    def dim(self) -> int:
        return self.X.shape[1]


def _three_jump(X):
    x = X[:, 0]
    return 5.0 * (x >= 1) + 5.0 * ((x >= -1) & (x < 0))


def _one_jump(X):
    return 5.0 * (X[:, 0] > 0)


def _two_jump(X):
    x = X[:, 0]
    return 5.0 * ((x >= -2 / 3) & (x < 2 / 3))


def _piecewise_smooth(X):
    x = X[:, 0]
    return np.where(x >= 0, -2 * x**2 + 8, -3 * x + 2)


def _smooth_1d(X):
    x = X[:, 0]
    return -2 * np.cos(x) ** 2 + 3 * np.tanh(x) - 2 * x


def _quadrant_2d(X):
    return 5.0 * (X[:, 0] > 0) + 5.0 * (X[:, 1] > 0)


def _one_jump_2d(X):
    return 5.0 * (X[:, 0] + X[:, 1] > 0)


def _smooth_edge_2d(X):
    return 5.0 * (X[:, 0] ** 2 + 2 * X[:, 1] - 0.4 > 0)


def _smooth_2d(X):
    x1, x2 = X[:, 0], X[:, 1]
    return x1**2 + x2**2 - x1 * x2


# name -> (function, input dimension)
CATALOG: dict[str, tuple[Callable[[np.ndarray], np.ndarray], int]] = {
    "three_jump": (_three_jump, 1),
    "one_jump": (_one_jump, 1),
    "two_jump": (_two_jump, 1),
    "piecewise_smooth": (_piecewise_smooth, 1),
    "smooth_1d": (_smooth_1d, 1),
    "quadrant_2d": (_quadrant_2d, 2),
    "one_jump_2d": (_one_jump_2d, 2),
    "smooth_edge_2d": (_smooth_edge_2d, 2),
    "smooth_2d": (_smooth_2d, 2),
}


def grid_2d(k: int, lo: float = -1.0, hi: float = 1.0) -> np.ndarray:
    g = np.linspace(lo, hi, k)
    a, b = np.meshgrid(g, g, indexing="ij")
    return np.column_stack([a.ravel(), b.ravel()])


def default_design(name: str) -> tuple[np.ndarray, np.ndarray]:
    """Training and test inputs: 40/100 points on [-2, 2], or 7x7/9x9 grids on [-1, 1]^2."""
    _, dim = _lookup(name)
    if dim == 1:
        return np.linspace(-2, 2, 40)[:, None], np.linspace(-2, 2, 100)[:, None]
    return grid_2d(7), grid_2d(9)


def _lookup(name: str):
    try:
        return CATALOG[name]
    except KeyError:
        raise ValueError(f"unknown function {name!r}; choose from {sorted(CATALOG)}") from None


@dataclass
class FunctionSpec:
    name: str
    sigma: float = 0.5
    design: np.ndarray | None = None  # None: the default training design

    def __post_init__(self):
        _lookup(self.name)
        if not self.sigma >= 0:
            raise ValueError("noise sd must be nonnegative")


def true_function(name: str, X) -> np.ndarray:
    fn, dim = _lookup(name)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None] if dim == 1 else X[None, :]
    if X.shape[1] != dim:
        raise ValueError(f"{name} takes {dim}-dimensional inputs")
    return fn(X).astype(float)


def gen_function(spec: FunctionSpec, rng: RngStream) -> Dataset:
    """Responses ``f(x) + N(0, sigma^2)`` at the design points of a FunctionSpec."""
    X = spec.design if spec.design is not None else default_design(spec.name)[0]
    f = true_function(spec.name, X)
    noise = rng.generator.standard_normal(len(f)) * spec.sigma if spec.sigma > 0 else 0.0
    return Dataset(np.asarray(X, dtype=float).reshape(len(f), -1), f + noise)


def simulate_experiment(name: str, sigma: float, rng: RngStream) -> tuple[Dataset, Dataset]:
    """Noisy training and test sets on the default design (independent noise)."""
    X_train, X_test = default_design(name)
    train = gen_function(FunctionSpec(name, sigma, X_train), rng.child(0))
    test = gen_function(FunctionSpec(name, sigma, X_test), rng.child(1))
    return train, test


@dataclass
class NetworkSpec:
    width: int
    dim: int = 1
    alpha: float = 1.0
    nu: float = 1.0

    def __post_init__(self):
        if self.width < 1 or self.dim < 1:
            raise ValueError("width and input dimension must be >= 1")
        StableParams(self.alpha, self.nu)


def simulate_finite_network(spec: NetworkSpec, X, n_draws: int, rng: RngStream,
                            chunk_elems: int = 4_000_000) -> np.ndarray:
    """Draws of ``sum_j w_j sign(b_j + <v_j, x>)`` at each row of ``X``.

    Hidden weights ``(b_j, v_j)`` are standard Gaussian; output weights are
    symmetric stable with scale ``(nu/2)**0.5 * width**(-1/alpha)``. Returns
    an ``(n_draws, n_points)`` array.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None] if spec.dim == 1 else X[None, :]
    if X.shape[1] != spec.dim:
        raise ValueError("X does not match the network input dimension")
    design = np.hstack([np.ones((len(X), 1)), X])
    p = spec.width
    out_params = StableParams(spec.alpha, math.sqrt(spec.nu / 2) * p ** (-1.0 / spec.alpha))
    out = np.empty((n_draws, len(X)))
    gen = rng.generator
    step = max(1, chunk_elems // (p * max(len(X), spec.dim + 1)))
    for start in range(0, n_draws, step):
        k = min(step, n_draws - start)
        hidden = gen.standard_normal((k, p, spec.dim + 1))
        signs = np.sign(hidden @ design.T)
        w = sample_symmetric_stable(out_params, rng, size=(k, p))
        out[start:start + k] = np.einsum("kp,kpn->kn", w, signs)
    return out


def load_csv(path, require_y: bool = True) -> Dataset:
    """Read ``x1,...,xI[,y]`` with a header row.

    When ``require_y`` is False a file without a ``y`` column is accepted
    (e.g. prediction inputs).
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    has_y = bool(header) and header[-1] == "y"
    xcols = header[:-1] if has_y else header
    if require_y and not has_y:
        raise ValueError(f"{path}: last column must be 'y'")
    if not xcols:
        raise ValueError(f"{path}: no input columns")
    if xcols != [f"x{i + 1}" for i in range(len(xcols))]:
        raise ValueError(f"{path}: input columns must be named x1..xI, got {xcols}")
    values = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ValueError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            values.append([float(c) for c in row])
        except ValueError:
            raise ValueError(f"{path}:{lineno}: non-numeric cell") from None
    arr = np.array(values, dtype=float).reshape(-1, len(header))
    if len(arr) == 0:
        raise ValueError(f"{path}: no data rows")
    if has_y:
        return Dataset(arr[:, :-1], arr[:, -1])
    return Dataset(arr)


def write_csv(path, ds: Dataset, extra: dict | None = None) -> None:
    """Write a dataset (plus optional named columns) with ``%.17g`` floats."""
    cols = {f"x{i + 1}": ds.X[:, i] for i in range(ds.dim)}
    if ds.y is not None:
        cols["y"] = ds.y
    for k, v in (extra or {}).items():
        cols[k] = np.asarray(v)
    write_columns(path, cols)


def write_columns(path, cols: dict) -> None:
    names = list(cols)
    data = np.column_stack([np.asarray(cols[k], dtype=float) for k in names])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(names) + "\n")
        for row in data:
            fh.write(",".join("%.17g" % v for v in row) + "\n")


def split(ds: Dataset, fraction: float, rng: RngStream) -> tuple[Dataset, Dataset]:
    """Random disjoint split; the first part gets ``round(fraction * n)`` rows."""
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie in (0, 1)")
    n = len(ds)
    n_first = int(round(fraction * n))
    if not 1 <= n_first < n:
        raise ValueError("split leaves an empty part")
    perm = rng.generator.permutation(n)
    a, b = np.sort(perm[:n_first]), np.sort(perm[n_first:])
    pick = lambda idx: Dataset(ds.X[idx], None if ds.y is None else ds.y[idx])  # noqa: E731
    return pick(a), pick(b)
