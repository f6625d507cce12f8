"""Random draws and analytic helpers for stable laws.

Conventions: a symmetric stable variable with scale ``nu`` has characteristic
function ``exp(-nu**alpha * |t|**alpha)``; a positive stable variable of index
``a`` in (0, 1) has Laplace transform ``exp(-lam**a)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

# Draws of the positive stable sampler are capped here; the MCMC treats a
# capped proposal as an automatic rejection.
SATURATION = 1e300
_LOG_SATURATION = math.log(SATURATION)
_ANGLE_GUARD = 1e-12
_EXP_FLOOR = 1e-300


class QuadratureError(RuntimeError):
    """Raised when a numerical integral does not reach its error target."""


@dataclass(frozen=True)
class StableParams:
    """Index ``alpha``, scale-like ``nu`` and skewness ``beta`` (shift is 0)."""

    alpha: float
    nu: float = 1.0
    beta: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.alpha <= 2.0:
            raise ValueError(f"alpha must lie in (0, 2], got {self.alpha}")
        if not self.nu > 0.0:
            raise ValueError(f"nu must be positive, got {self.nu}")
        if not -1.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must lie in [-1, 1], got {self.beta}")


@dataclass
class RngStream:
    """A reproducible random stream keyed by ``(seed, stream_id)``.

    Equal keys give bitwise-identical draw sequences. ``child(i)`` derives an
    independent sub-stream, used for parallel chains and per-cell work.
    """

    seed: int = 0
    stream_id: int | tuple = 0
    generator: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        key = self.stream_id if isinstance(self.stream_id, tuple) else (self.stream_id,)
        ss = np.random.SeedSequence(int(self.seed), spawn_key=tuple(int(k) for k in key))
        self.generator = np.random.Generator(np.random.PCG64(ss))

    @property
    def key(self) -> tuple:
        return self.stream_id if isinstance(self.stream_id, tuple) else (self.stream_id,)

    def child(self, index: int) -> "RngStream":
        return RngStream(self.seed, self.key + (int(index),))


def sample_positive_stable(alpha_half, rng: RngStream, size=None):
    """Draw from the one-sided stable law with Laplace transform exp(-lam**alpha_half).

    Uses Kanter's representation: with U uniform on (0, pi) and W a unit
    exponential,

        S = sin(a U) / sin(U)**(1/a) * (sin((1-a) U) / W)**((1-a)/a).

    Evaluated in log space; values beyond ``SATURATION`` are clipped to it.
    """
    a = float(alpha_half)
    if not 0.0 < a < 1.0:
        raise ValueError(f"alpha_half must lie in (0, 1), got {alpha_half}")
    gen = rng.generator
    u = gen.uniform(0.0, math.pi, size)
    w = gen.standard_exponential(size)
    u = np.clip(u, _ANGLE_GUARD, math.pi - _ANGLE_GUARD)
    w = np.maximum(w, _EXP_FLOOR)
    log_s = (
        np.log(np.sin(a * u))
        - np.log(np.sin(u)) / a
        + (1.0 - a) / a * (np.log(np.sin((1.0 - a) * u)) - np.log(w))
    )
    s = np.exp(np.minimum(log_s, _LOG_SATURATION))
    if size is None:
        return float(s)
    return s


def sample_symmetric_stable(params: StableParams, rng: RngStream, size=None):
    """Chambers-Mallows-Stuck draw with characteristic function exp(-nu^alpha |t|^alpha)."""
    if params.beta != 0.0:
        raise ValueError("sample_symmetric_stable requires beta == 0; "
                         "use sample_positive_stable for the one-sided law")
    a = params.alpha
    gen = rng.generator
    u = gen.uniform(-math.pi / 2, math.pi / 2, size)
    w = np.maximum(gen.standard_exponential(size), _EXP_FLOOR)
    if a == 1.0:
        x = np.tan(u)
    else:
        x = (np.sin(a * u) / np.cos(u) ** (1.0 / a)
             * (np.cos((1.0 - a) * u) / w) ** ((1.0 - a) / a))
    x = params.nu * x
    if size is None:
        return float(x)
    return x


def sample_half_cauchy(rng: RngStream, size=None):
    """|C| with C standard Cauchy."""
    x = np.abs(rng.generator.standard_cauchy(size))
    if size is None:
        return float(x)
    return x


def stable_cf(t, params: StableParams):
    """Characteristic function of S(alpha, beta, nu) with zero shift."""
    t = np.asarray(t, dtype=float)
    a, nu, beta = params.alpha, params.nu, params.beta
    abs_t = np.abs(t)
    with np.errstate(divide="ignore", invalid="ignore"):
        if a == 1.0:
            omega = np.where(abs_t > 0, -(2.0 / math.pi) * np.log(abs_t), 0.0)
        else:
            omega = np.full_like(t, math.tan(a * math.pi / 2))
    expo = -(nu ** a) * abs_t ** a * (1.0 - 1j * beta * np.sign(t) * omega)
    out = np.exp(expo)
    out = np.where(t == 0, 1.0 + 0j, out)
    return out[()] if out.ndim == 0 else out


def positive_stable_pdf(t, alpha_half):
    """Density of the positive stable law; closed form only for index 1/2 (Levy)."""
    if alpha_half != 0.5:
        raise NotImplementedError("positive stable density is only available for alpha_half=0.5")
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(t > 0, t ** -1.5 * np.exp(-0.25 / t) / (2.0 * math.sqrt(math.pi)), 0.0)
    return out[()] if out.ndim == 0 else out


def levy_cdf(t):
    """CDF of the positive 1/2-stable (Laplace transform exp(-sqrt(lam)))."""
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore"):
        out = np.where(t > 0, special.erfc(0.5 / np.sqrt(np.maximum(t, 1e-300))), 0.0)
    return out[()] if out.ndim == 0 else out


def mixture_identity_residual(z: float, params: StableParams, limit: int = 200,
                              tol: float = 1e-10) -> float:
    """|exp(-nu^(a/2) |z|^a) - int_0^inf exp(-nu z^2 t) p(t) dt| for the positive a/2-stable p.

    Only ``alpha == 1`` is supported, where p is the Levy density.
    """
    if params.alpha != 1.0:
        raise NotImplementedError("the mixing density is only available in closed form for alpha=1")
    a = params.alpha
    lhs = math.exp(-params.nu ** (a / 2) * abs(z) ** a)
    lam = params.nu * z * z
    if lam == 0.0:
        # both sides reduce to the normalisation of the mixing density
        return 0.0

    def integrand(t):
        return math.exp(-lam * t) * positive_stable_pdf(t, a / 2)

    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            head, err_head = integrate.quad(integrand, 0.0, 1.0, limit=limit, epsabs=tol)
            tail, err_tail = integrate.quad(integrand, 1.0, np.inf, limit=limit, epsabs=tol)
        except integrate.IntegrationWarning as exc:
            raise QuadratureError(str(exc)) from exc
    if err_head + err_tail > 1e3 * tol:
        raise QuadratureError(f"quadrature error estimate {err_head + err_tail:.3g} too large")
    return abs(lhs - (head + tail))
