"""Special functions behind every density and norming constant in the package.

Log-gamma and the standard normal cdf/pdf delegate to :mod:`scipy.special`.
The regularized incomplete gamma function, its inverse and the confluent
hypergeometric limit function 0F1 are evaluated here, in log-space, because
densities at levels of order 1e3 overflow a naive evaluation and extreme
chi-square tails (exceedance sampling at v ~ 1e4) underflow a linear one.

Functions accept Python floats or numpy arrays.  Scalars in give floats out.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special as _sc

from .errors import ConvergenceError, DomainError

__all__ = [
    "EvalPolicy",
    "DEFAULT_POLICY",
    "ln_gamma",
    "std_normal_cdf",
    "std_normal_pdf",
    "std_normal_sf",
    "ln_gamma_p",
    "ln_gamma_q",
    "gamma_p_inv_log",
    "gamma_q_inv_log",
    "chi2_cdf",
    "chi2_tail",
    "ln_chi2_cdf",
    "ln_chi2_tail",
    "chi2_quantile",
    "chi2_tail_quantile_log",
    "chi2_logpdf",
    "chi2_pdf",
    "hyp0f1",
    "ln_hyp0f1",
]

_EPS = np.finfo(float).eps
_TINY = 1e-300
_SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class EvalPolicy:
    """Evaluation controls for the 0F1 series and its asymptotic expansion.

    Attributes
    ----------
    series_tol : float
        Relative truncation tolerance, in ``(0, 1e-8]``.
    asymptotic_switch_z : float
        Arguments above this value use the large-z expansion.
    max_terms : int
        Cap on the number of series terms (at least 50).
    """

    series_tol: float = 1e-16
    asymptotic_switch_z: float = 1e4
    max_terms: int = 2000

    def __post_init__(self):
        if not (0.0 < self.series_tol <= 1e-8):
            raise DomainError(f"series_tol must lie in (0, 1e-8], got {self.series_tol}")
        if not self.asymptotic_switch_z > 0:
            raise DomainError(
                f"asymptotic_switch_z must be positive, got {self.asymptotic_switch_z}"
            )
        if int(self.max_terms) != self.max_terms or self.max_terms < 50:
            raise DomainError(f"max_terms must be an integer >= 50, got {self.max_terms}")


DEFAULT_POLICY = EvalPolicy()


def _out(values, scalar):
    return float(values) if scalar else values


def _prep(x):
    arr = np.asarray(x, dtype=float)
    return arr, arr.ndim == 0


# ---------------------------------------------------------------------------
# gamma function and normal distribution


def ln_gamma(x):
    """Natural log of the Euler gamma function for ``x > 0``."""
    arr, scalar = _prep(x)
    if np.any(~(arr > 0)):
        raise DomainError(f"ln_gamma requires x > 0, got {x!r}")
    return _out(_sc.gammaln(arr), scalar)


def std_normal_cdf(x):
    """Standard normal distribution function."""
    arr, scalar = _prep(x)
    return _out(_sc.ndtr(arr), scalar)


def std_normal_sf(x):
    """Standard normal survival function ``1 - Phi(x)``, accurate in the upper tail."""
    arr, scalar = _prep(x)
    return _out(_sc.ndtr(-arr), scalar)


def std_normal_pdf(x):
    arr, scalar = _prep(x)
    return _out(np.exp(-0.5 * arr * arr) / _SQRT_2PI, scalar)


# ---------------------------------------------------------------------------
# regularized incomplete gamma, log-space


def _ln_p_series(a, x, max_iter=5000):
    # ln P(a, x) for 0 < x < a + 1
    total = np.ones_like(x)
    term = np.ones_like(x)
    ap = np.full_like(x, a)
    for _ in range(max_iter):
        ap += 1.0
        term *= x / ap
        total += term
        if np.all(term <= total * _EPS):
            break
    else:
        raise ConvergenceError("incomplete gamma series did not converge")
    return a * np.log(x) - x - _sc.gammaln(a + 1.0) + np.log(total)


def _ln_q_cf(a, x, max_iter=5000):
    # ln Q(a, x) for x >= a + 1, modified Lentz continued fraction
    b = x + 1.0 - a
    c = np.full_like(x, 1.0 / _TINY)
    d = 1.0 / b
    h = d.copy()
    # converged elements are frozen: a joint stopping rule can stall on 1-ulp jitter
    act = np.arange(x.size)
    for i in range(1, max_iter):
        an = -i * (i - a)
        b[act] += 2.0
        da = an * d[act] + b[act]
        da = np.where(np.abs(da) < _TINY, _TINY, da)
        ca = b[act] + an / c[act]
        ca = np.where(np.abs(ca) < _TINY, _TINY, ca)
        d[act] = 1.0 / da
        c[act] = ca
        delta = d[act] * ca
        h[act] *= delta
        act = act[np.abs(delta - 1.0) > _EPS]
        if act.size == 0:
            break
    else:
        raise ConvergenceError("incomplete gamma continued fraction did not converge")
    return -x + a * np.log(x) - _sc.gammaln(a) + np.log(h)


def _ln_pq(a, x):
    """Return (ln P(a,x), ln Q(a,x)) as arrays for array x >= 0."""
    ln_p = np.empty_like(x)
    ln_q = np.empty_like(x)
    zero = x == 0
    ln_p[zero] = -np.inf
    ln_q[zero] = 0.0
    inf = np.isinf(x)
    ln_p[inf] = 0.0
    ln_q[inf] = -np.inf
    lower = (x > 0) & (x < a + 1.0)
    upper = (x >= a + 1.0) & ~inf
    if np.any(lower):
        lp = _ln_p_series(a, x[lower])
        ln_p[lower] = lp
        ln_q[lower] = np.log1p(-np.exp(lp))
    if np.any(upper):
        lq = _ln_q_cf(a, x[upper])
        ln_q[upper] = lq
        ln_p[upper] = np.log1p(-np.exp(lq))
    return ln_p, ln_q


def _check_gamma_args(a, x):
    if not a > 0:
        raise DomainError(f"shape parameter must be positive, got {a!r}")
    arr, scalar = _prep(x)
    if np.any(~(arr >= 0)):
        raise DomainError(f"incomplete gamma requires x >= 0, got {x!r}")
    return arr.astype(float, copy=True).reshape(arr.shape), scalar


def ln_gamma_p(a, x):
    """Log of the regularized lower incomplete gamma function P(a, x)."""
    arr, scalar = _check_gamma_args(a, x)
    flat = np.atleast_1d(arr).ravel()
    ln_p, _ = _ln_pq(float(a), flat)
    return _out(ln_p.reshape(arr.shape), scalar)


def ln_gamma_q(a, x):
    """Log of the regularized upper incomplete gamma function Q(a, x)."""
    arr, scalar = _check_gamma_args(a, x)
    flat = np.atleast_1d(arr).ravel()
    _, ln_q = _ln_pq(float(a), flat)
    return _out(ln_q.reshape(arr.shape), scalar)


def _gamma_invert(a, target, upper, max_iter=200):
    """Solve ln Q(a, x) = target (upper) or ln P(a, x) = target, elementwise.

    Safeguarded Newton in u = ln x with a maintained bracket; steps that leave
    the bracket fall back to bisection.
    """
    target = np.atleast_1d(np.asarray(target, dtype=float)).ravel()
    out = np.empty_like(target)
    done = np.zeros(target.shape, dtype=bool)
    if upper:
        out[target == 0.0] = 0.0
    else:
        out[target == 0.0] = np.inf
    done |= target == 0.0
    out[np.isneginf(target)] = np.inf if upper else 0.0
    done |= np.isneginf(target)
    idx = np.flatnonzero(~done)
    if idx.size == 0:
        return out
    t = target[idx]
    lga = _sc.gammaln(a)

    # f(u) is decreasing in u for the upper tail, increasing for the lower one
    sign = -1.0 if upper else 1.0
    lo = np.full(t.shape, math.log(1e-300))
    hi = np.log(a + 2.0 * np.abs(t) + 10.0 * math.sqrt(a) + 10.0)
    for _ in range(60):
        lp, lq = _ln_pq(a, np.exp(hi))
        f_hi = (lq if upper else lp) - t
        bad = sign * f_hi < 0
        if not np.any(bad):
            break
        hi = np.where(bad, hi + math.log(2.0), hi)

    # starting point: match the dominant term of the tail, clipped into bracket
    if upper:
        guess = np.maximum(a - t - lga, 1e-3)
        for _ in range(3):
            guess = np.maximum(-t - lga + (a - 1.0) * np.log(guess), 1e-3)
    else:
        guess = np.exp((t + _sc.gammaln(a + 1.0)) / a)
    u = np.clip(np.log(guess), lo, hi)
    u = np.where((u <= lo) | (u >= hi), 0.5 * (lo + hi), u)

    active = np.ones(t.shape, dtype=bool)
    for _ in range(max_iter):
        x = np.exp(u)
        lp, lq = _ln_pq(a, x)
        lval = lq if upper else lp
        f = lval - t
        # d ln(P or Q) / d ln x
        dlog = np.exp(a * np.log(x) - x - lga - lval)
        deriv = -dlog if upper else dlog
        pos = sign * f > 0  # root lies to the left when the function overshoots
        hi = np.where(active & pos, u, hi)
        lo = np.where(active & ~pos, u, lo)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = f / deriv
        u_new = u - step
        bisect = ~np.isfinite(u_new) | (u_new <= lo) | (u_new >= hi)
        u_new = np.where(bisect, 0.5 * (lo + hi), u_new)
        converged = (np.abs(u_new - u) <= 4.0 * _EPS * np.maximum(1.0, np.abs(u))) | (
            hi - lo <= 4.0 * _EPS * np.maximum(1.0, np.abs(u))
        )
        u = np.where(active, u_new, u)
        active &= ~converged
        if not np.any(active):
            break
    else:
        raise ConvergenceError("incomplete gamma inversion did not converge")
    out[idx] = np.exp(u)
    return out


def gamma_q_inv_log(a, ln_q):
    """Return x with ln Q(a, x) = ln_q; ``ln_q`` in (-inf, 0]."""
    if not a > 0:
        raise DomainError(f"shape parameter must be positive, got {a!r}")
    arr, scalar = _prep(ln_q)
    if np.any(~(arr <= 0)):
        raise DomainError("log tail probability must be <= 0")
    res = _gamma_invert(float(a), arr, upper=True).reshape(arr.shape)
    return _out(res, scalar)


def gamma_p_inv_log(a, ln_p):
    """Return x with ln P(a, x) = ln_p; ``ln_p`` in (-inf, 0]."""
    if not a > 0:
        raise DomainError(f"shape parameter must be positive, got {a!r}")
    arr, scalar = _prep(ln_p)
    if np.any(~(arr <= 0)):
        raise DomainError("log probability must be <= 0")
    res = _gamma_invert(float(a), arr, upper=False).reshape(arr.shape)
    return _out(res, scalar)


# ---------------------------------------------------------------------------
# chi-square distribution


def _check_df(m):
    if int(m) != m or m < 1:
        raise DomainError(f"degrees of freedom must be a positive integer, got {m!r}")
    return int(m)


def ln_chi2_cdf(m, v):
    m = _check_df(m)
    arr, scalar = _prep(v)
    if np.any(~(arr >= 0)):
        raise DomainError(f"chi-square argument must be >= 0, got {v!r}")
    return ln_gamma_p(0.5 * m, arr / 2.0) if not scalar else ln_gamma_p(0.5 * m, float(arr) / 2.0)


def ln_chi2_tail(m, v):
    m = _check_df(m)
    arr, scalar = _prep(v)
    if np.any(~(arr >= 0)):
        raise DomainError(f"chi-square argument must be >= 0, got {v!r}")
    return ln_gamma_q(0.5 * m, arr / 2.0) if not scalar else ln_gamma_q(0.5 * m, float(arr) / 2.0)


def chi2_cdf(m, v):
    """Chi-square distribution function with ``m`` degrees of freedom."""
    res = ln_chi2_cdf(m, v)
    return math.exp(res) if isinstance(res, float) else np.exp(res)


def chi2_tail(m, v):
    """Chi-square survival function ``P(chi2_m > v)``."""
    res = ln_chi2_tail(m, v)
    return math.exp(res) if isinstance(res, float) else np.exp(res)


def chi2_quantile(m, p):
    """Inverse of :func:`chi2_cdf` for ``p`` in (0, 1)."""
    m = _check_df(m)
    arr, scalar = _prep(p)
    if np.any(~((arr > 0) & (arr < 1))):
        raise DomainError(f"probability must lie in (0, 1), got {p!r}")
    flat = np.atleast_1d(arr).ravel()
    res = np.empty_like(flat)
    low = flat <= 0.5
    if np.any(low):
        res[low] = 2.0 * _gamma_invert(0.5 * m, np.log(flat[low]), upper=False)
    if np.any(~low):
        res[~low] = 2.0 * _gamma_invert(0.5 * m, np.log1p(-flat[~low]), upper=True)
    return _out(res.reshape(arr.shape), scalar)


def chi2_tail_quantile_log(m, ln_q):
    """Level ``v`` with ``ln P(chi2_m > v) = ln_q``; works far beyond float underflow."""
    m = _check_df(m)
    res = gamma_q_inv_log(0.5 * m, ln_q)
    return 2.0 * res


def chi2_logpdf(m, v):
    m = _check_df(m)
    arr, scalar = _prep(v)
    half = 0.5 * m
    with np.errstate(divide="ignore"):
        res = (half - 1.0) * np.log(arr) - 0.5 * arr - half * math.log(2.0) - _sc.gammaln(half)
    res = np.where(arr > 0, res, -np.inf if m > 2 else (math.log(0.5) if m == 2 else np.inf))
    return _out(res, scalar)


def chi2_pdf(m, v):
    res = chi2_logpdf(m, v)
    return math.exp(res) if isinstance(res, float) else np.exp(res)


# ---------------------------------------------------------------------------
# confluent hypergeometric limit function 0F1(; a; z)


def _series_scalar(a, z, policy):
    term = 1.0
    total = 1.0
    for n in range(1, policy.max_terms + 1):
        term *= z / ((a + n - 1.0) * n)
        total += term
        if term <= policy.series_tol * total:
            return math.log(total)
    raise ConvergenceError(
        f"0F1 series for a={a}, z={z} not converged after {policy.max_terms} terms"
    )


def _asymptotic_scalar(a, z, policy):
    # Hankel expansion of I_{a-1}(2 sqrt z); the exp(-x) branch is negligible here
    x = 2.0 * math.sqrt(z)
    mu = 4.0 * (a - 1.0) ** 2
    s = 1.0
    term = 1.0
    for k in range(1, policy.max_terms + 1):
        odd = (2 * k - 1) ** 2
        new = -term * (mu - odd) / (8.0 * k * x)
        if new == 0.0:
            break
        if odd > mu and abs(new) >= abs(term):
            break
        term = new
        s += term
        if abs(term) <= policy.series_tol * abs(s):
            break
    return (
        math.lgamma(a)
        + 0.5 * (1.0 - a) * math.log(z)
        + x
        - 0.5 * math.log(2.0 * math.pi * x)
        + math.log(s)
    )


def _series_array(a, z, policy):
    total = np.ones_like(z)
    term = np.ones_like(z)
    for n in range(1, policy.max_terms + 1):
        term *= z / ((a + n - 1.0) * n)
        total += term
        if np.all(term <= policy.series_tol * total):
            return np.log(total)
    raise ConvergenceError(
        f"0F1 series for a={a} not converged after {policy.max_terms} terms"
    )


def _asymptotic_array(a, z, policy):
    x = 2.0 * np.sqrt(z)
    mu = 4.0 * (a - 1.0) ** 2
    s = np.ones_like(z)
    term = np.ones_like(z)
    live = np.ones(z.shape, dtype=bool)
    for k in range(1, policy.max_terms + 1):
        odd = (2 * k - 1) ** 2
        new = -term * (mu - odd) / (8.0 * k * x)
        stop = new == 0.0
        if odd > mu:
            stop |= np.abs(new) >= np.abs(term)
        live &= ~stop
        term = np.where(live, new, term)
        s = np.where(live, s + new, s)
        live &= ~(np.abs(new) <= policy.series_tol * np.abs(s))
        if not np.any(live):
            break
    return _sc.gammaln(a) + 0.5 * (1.0 - a) * np.log(z) + x - 0.5 * np.log(2.0 * np.pi * x) + np.log(s)


def _ln_hyp0f1_scalar(a, zf, policy):
    if zf == 0.0:
        return 0.0
    if zf <= policy.asymptotic_switch_z:
        return _series_scalar(a, zf, policy)
    return _asymptotic_scalar(a, zf, policy)


def ln_hyp0f1(a, z, policy: EvalPolicy = DEFAULT_POLICY):
    """Natural log of 0F1(; a; z) for scalar ``a > 0`` and ``z >= 0``.

    The power series is summed up to ``policy.asymptotic_switch_z``; above it
    the Hankel expansion of the modified Bessel function is used, truncated
    at its smallest term.
    """
    if not a > 0:
        raise DomainError(f"0F1 requires a > 0, got {a!r}")
    a = float(a)
    arr, scalar = _prep(z)
    if np.any(~(arr >= 0)):
        raise DomainError(f"0F1 requires z >= 0, got {z!r}")
    if scalar:
        return _ln_hyp0f1_scalar(a, float(arr), policy)
    flat = arr.ravel()
    if flat.size <= 8:
        # per-term numpy overhead dominates for tiny arrays (quadrature callbacks)
        res = [_ln_hyp0f1_scalar(a, float(zf), policy) for zf in flat]
        return np.array(res, dtype=float).reshape(arr.shape)
    res = np.zeros_like(flat)
    ser = (flat > 0) & (flat <= policy.asymptotic_switch_z)
    asy = flat > policy.asymptotic_switch_z
    if np.any(ser):
        res[ser] = _series_array(a, flat[ser], policy)
    if np.any(asy):
        res[asy] = _asymptotic_array(a, flat[asy], policy)
    return res.reshape(arr.shape)


def hyp0f1(a, z, policy: EvalPolicy = DEFAULT_POLICY):
    """Confluent hypergeometric limit function 0F1(; a; z)."""
    res = ln_hyp0f1(a, z, policy)
    return math.exp(res) if isinstance(res, float) else np.exp(res)
