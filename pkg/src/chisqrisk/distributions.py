"""Closed-form finite-level and limit distributions.

Covers the bivariate chi-square density and the conditional density of the
second coordinate given the first, its Gaussian limit, the bivariate
Hüsler-Reiss distribution, the chi-square norming constants for block maxima
and the threshold-dependent correlation family.

All densities are accumulated in log-space and exponentiated once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate

from .errors import DomainError
from .special import (
    DEFAULT_POLICY,
    EvalPolicy,
    chi2_logpdf,
    chi2_quantile,
    ln_gamma,
    ln_hyp0f1,
    std_normal_cdf,
    std_normal_pdf,
)

_LN2 = math.log(2.0)


def _arr(x):
    a = np.asarray(x, dtype=float)
    return a, a.ndim == 0


def _ret(a, scalar):
    return float(a) if scalar else a


@dataclass(frozen=True)
class BivChiSqParams:
    """Bivariate chi-square law with ``m`` degrees of freedom and correlation ``rho``.

    ``rho = 0`` is excluded: the conditional standardization divides by it.
    """

    m: int
    rho: float

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise DomainError(f"m must be a positive integer, got {self.m!r}")
        if not (0.0 < abs(self.rho) < 1.0):
            raise DomainError(f"rho must satisfy 0 < |rho| < 1, got {self.rho!r}")

    @property
    def rho_star(self) -> float:
        return math.sqrt(1.0 - self.rho**2)


@dataclass(frozen=True)
class HuslerReissParams:
    lam: float

    def __post_init__(self):
        if not (0.0 < self.lam < math.inf):
            raise DomainError(f"lambda must lie in (0, inf), got {self.lam!r}")


@dataclass(frozen=True)
class NormingConstants:
    a_n: float
    b_n: float
    n: int

    def __call__(self, x):
        """Affine map ``t_n(x) = a_n x + b_n``."""
        return self.a_n * np.asarray(x, dtype=float) + self.b_n

    def normalize(self, values):
        return (np.asarray(values, dtype=float) - self.b_n) / self.a_n


# ---------------------------------------------------------------------------
# bivariate chi-square


def ln_biv_chisq_pdf(p: BivChiSqParams, u, v, policy: EvalPolicy = DEFAULT_POLICY):
    ua, su = _arr(u)
    va, sv = _arr(v)
    if np.any(~(ua > 0)) or np.any(~(va > 0)):
        raise DomainError("bivariate chi-square density needs u > 0 and v > 0")
    ua, va = np.broadcast_arrays(ua, va)
    half = 0.5 * p.m
    s2 = 1.0 - p.rho**2
    uv = ua * va
    z = p.rho**2 * uv / (2.0 * s2) ** 2
    res = (
        (half - 1.0) * np.log(uv)
        - p.m * _LN2
        - 2.0 * ln_gamma(half)
        - half * math.log(s2)
        - (ua + va) / (2.0 * s2)
        + ln_hyp0f1(half, z if z.ndim else float(z), policy)
    )
    return _ret(res, su and sv)


def biv_chisq_pdf(p: BivChiSqParams, u, v, policy: EvalPolicy = DEFAULT_POLICY):
    """Joint density of the bivariate chi-square vector at ``(u, v)``."""
    res = ln_biv_chisq_pdf(p, u, v, policy)
    return math.exp(res) if isinstance(res, float) else np.exp(res)


# ---------------------------------------------------------------------------
# conditional law of the second coordinate given the first


def conditional_scale(p: BivChiSqParams, v: float) -> tuple[float, float]:
    """(location, scale) with ``x = (zeta2 - location) / scale`` the standardized value.

    The scale is ``(1 - rho^2) sqrt(v)``; the Gaussian limit of the standardized
    variable then has variance ``4 rho^2 / (1 - rho^2)``.
    """
    return p.rho**2 * v, (1.0 - p.rho**2) * math.sqrt(v)


def ln_conditional_pdf(p: BivChiSqParams, x, v, policy: EvalPolicy = DEFAULT_POLICY):
    if not v > 0:
        raise DomainError(f"conditioning level must be positive, got {v!r}")
    xa, scalar = _arr(x)
    loc, scale = conditional_scale(p, v)
    x_rho = scale * xa + loc
    out = np.full(xa.shape, -np.inf)
    inside = x_rho > 0
    if np.any(inside):
        xr = x_rho[inside]
        out[inside] = (
            ln_biv_chisq_pdf(p, np.full(xr.shape, float(v)), xr, policy)
            - chi2_logpdf(p.m, float(v))
            + math.log(scale)
        )
    return _ret(out, scalar)


def conditional_pdf(p: BivChiSqParams, x, v, policy: EvalPolicy = DEFAULT_POLICY):
    """Density of ``(zeta2 - rho^2 v) / ((1 - rho^2) sqrt(v))`` given ``zeta1 = v``.

    Returns 0 where the back-transformed ``zeta2`` is not positive.
    """
    res = ln_conditional_pdf(p, x, v, policy)
    return math.exp(res) if isinstance(res, float) else np.exp(res)


def conditional_zeta2_pdf(p: BivChiSqParams, w, v, policy: EvalPolicy = DEFAULT_POLICY):
    """Density of ``zeta2`` at ``w`` given ``zeta1 = v``."""
    loc, scale = conditional_scale(p, v)
    wa, scalar = _arr(w)
    res = np.asarray(conditional_pdf(p, (wa - loc) / scale, v, policy)) / scale
    return _ret(res, scalar)


def conditional_cdf(
    p: BivChiSqParams,
    w: float,
    v: float,
    upper: bool = False,
    epsabs: float = 1e-9,
    epsrel: float = 1e-10,
    policy: EvalPolicy = DEFAULT_POLICY,
) -> float:
    """``P(zeta2 <= w | zeta1 = v)`` (or the upper tail) by quadrature of the conditional pdf.

    The integral is taken over ``zeta2`` on the shorter side of the conditional
    mean so that both tails keep their relative precision.
    """
    if w <= 0:
        return 1.0 if upper else 0.0
    loc, scale = conditional_scale(p, v)
    mean = loc + p.m * (1.0 - p.rho**2)
    sd = scale * 2.0 * abs(p.rho) / math.sqrt(1.0 - p.rho**2) + 1.0

    def f(t):
        return conditional_zeta2_pdf(p, t, v, policy)

    def lower_integral(hi):
        # zeta2^(m/2 - 1) singularity at 0 for m = 1: substitute t = s^2
        if p.m == 1:
            val, _ = integrate.quad(
                lambda s: 2.0 * s * f(s * s), 0.0, math.sqrt(hi),
                epsabs=epsabs, epsrel=epsrel, limit=400,
            )
            return val
        pts = [q for q in (mean - sd, mean, mean + sd) if 0.0 < q < hi]
        val, _ = integrate.quad(f, 0.0, hi, epsabs=epsabs, epsrel=epsrel, limit=400,
                                points=pts or None)
        return val

    def upper_integral(lo):
        edge = max(lo, mean + 40.0 * sd)
        val, _ = integrate.quad(f, lo, edge, epsabs=epsabs, epsrel=epsrel, limit=400)
        tail, _ = integrate.quad(f, edge, math.inf, epsabs=epsabs, epsrel=epsrel, limit=400)
        return val + tail

    if w <= mean:
        low = lower_integral(w)
        return 1.0 - low if upper else low
    up = upper_integral(w)
    return up if upper else 1.0 - up


def gaussian_limit_pdf(rho, x):
    """Limit density of the standardized conditional variable as the level grows.

    Centered Gaussian with variance ``4 rho^2 / (1 - rho^2)``; depends on ``|rho|``.
    """
    r = abs(float(rho))
    if not (0.0 < r < 1.0):
        raise DomainError(f"rho must satisfy 0 < |rho| < 1, got {rho!r}")
    xa, scalar = _arr(x)
    s2 = 1.0 - r * r
    res = (1.0 / math.sqrt(2.0 * math.pi)) * (math.sqrt(s2) / (2.0 * r)) * np.exp(
        -s2 * xa * xa / (8.0 * r * r)
    )
    return _ret(res, scalar)


# ---------------------------------------------------------------------------
# Hüsler-Reiss


def _hr_args(lam, x, y):
    s = math.sqrt(lam)
    a = s / 2.0 + (y - x) / s
    b = s / 2.0 + (x - y) / s
    return a, b


def husler_reiss_cdf(p: HuslerReissParams, x, y):
    """Bivariate Hüsler-Reiss max-stable distribution function ``H_lambda(x, y)``."""
    xa, sx = _arr(x)
    ya, sy = _arr(y)
    a, b = _hr_args(p.lam, xa, ya)
    res = np.exp(-np.exp(-xa) * std_normal_cdf(a) - np.exp(-ya) * std_normal_cdf(b))
    return _ret(res, sx and sy)


def husler_reiss_pdf(p: HuslerReissParams, x, y):
    """Density of ``H_lambda``."""
    xa, sx = _arr(x)
    ya, sy = _arr(y)
    a, b = _hr_args(p.lam, xa, ya)
    pa = std_normal_cdf(a)
    pb = std_normal_cdf(b)
    h = np.exp(-np.exp(-xa) * pa - np.exp(-ya) * pb)
    res = np.exp(-xa) * h * (std_normal_pdf(a) / math.sqrt(p.lam) + np.exp(-ya) * pa * pb)
    return _ret(res, sx and sy)


def gumbel_cdf(x):
    xa, scalar = _arr(x)
    return _ret(np.exp(-np.exp(-xa)), scalar)


# ---------------------------------------------------------------------------
# norming constants and threshold-dependent correlations


def norming_constants(
    n: int,
    m: int,
    method: str = "exact",
    quantile: Callable[[float], float] | None = None,
    w: Callable[[float], float] | None = None,
) -> NormingConstants:
    """Affine norming ``(a_n, b_n)`` for maxima of ``n`` chi-square variables.

    ``method="exact"`` gives ``a_n = 2`` and
    ``b_n = 2 ln n + (m - 2) ln ln n - 2 ln Gamma(m/2)``.
    ``method="quantile"`` gives ``b_n = G^{-1}(1 - 1/n)`` and ``a_n = 1 / w(b_n)``,
    with ``G`` the chi-square law unless ``quantile`` (and optionally the
    scaling function ``w``) are supplied.
    """
    if int(n) != n or n < 3:
        raise DomainError(f"block size must be an integer >= 3, got {n!r}")
    if int(m) != m or m < 1:
        raise DomainError(f"m must be a positive integer, got {m!r}")
    n = int(n)
    if method == "exact":
        ln_n = math.log(n)
        b = 2.0 * ln_n + (m - 2) * math.log(ln_n) - 2.0 * ln_gamma(0.5 * m)
        return NormingConstants(2.0, b, n)
    if method == "quantile":
        q = quantile if quantile is not None else (lambda p: chi2_quantile(m, p))
        b = float(q(1.0 - 1.0 / n))
        scale = w if w is not None else scaling_w_chisq
        return NormingConstants(1.0 / float(scale(b)), b, n)
    raise DomainError(f"unknown norming method {method!r}; expected 'exact' or 'quantile'")


def scaling_w_chisq(v):
    """Gumbel scaling function of the chi-square law, identically 1/2."""
    va, scalar = _arr(v)
    return _ret(np.full(va.shape, 0.5), scalar)


def rho_from_lambda(v: float, lam: float, w_at_v: float = 0.5) -> float:
    """Correlation ``1 - lam / (4 v w(v))`` so that ``4 v w(v) (1 - rho) = lam``."""
    if not v > 0:
        raise DomainError(f"level must be positive, got {v!r}")
    if not lam >= 0:
        raise DomainError(f"lambda must be >= 0, got {lam!r}")
    rho = 1.0 - lam / (4.0 * v * w_at_v)
    if not rho > 0:
        raise DomainError(
            f"level v={v} too small for lambda={lam}: 1 - lambda/(4 v w) = {rho} <= 0"
        )
    return rho


def hr_block_correlation(n: int, lam: float, m: int = 2, rule: str = "hr") -> float:
    """Correlation of a chi-square triangular array at block size ``n``.

    ``rule="hr"`` solves ``4 ln n (1 - rho_n) = lam``; ``rule="r12"`` solves
    ``2 (b_n / a_n) (1 - rho_n^2) = lam`` with the exact norming constants.
    """
    if rule == "hr":
        frac = lam / (4.0 * math.log(n))
        if not frac < 1.0:
            raise DomainError(f"lambda/(4 ln n) = {frac} >= 1: block size too small")
        return 1.0 - frac
    if rule == "r12":
        nc = norming_constants(n, m)
        one_minus = lam * nc.a_n / (2.0 * nc.b_n)
        if not 0.0 <= one_minus < 1.0:
            raise DomainError(f"1 - rho_n^2 = {one_minus} outside [0, 1)")
        return math.sqrt(1.0 - one_minus)
    raise DomainError(f"unknown correlation rule {rule!r}; expected 'hr' or 'r12'")
