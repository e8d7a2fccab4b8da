"""Exact finite-level samplers for perturbed chi-square risk vectors.

A risk vector is ``zeta_1 = sum_i X_i^2`` and ``zeta_{j+1} = sum_i (rho_j X_i + W_ij)^2``
for ``i = 1..m`` and ``j = 1..k``. ``X`` is drawn from a base law and the
``m x k`` perturbation matrix ``W`` either has iid Gaussian rows with covariance
``w_cov`` or independent spherical columns ``R_j O_j``.

Both perturbation laws are invariant under rotations acting on the row index,
so conditionally on ``zeta_1 = v`` the base vector can be replaced by
``(sqrt(v), 0, ..., 0)``.  This gives exact samplers for the conditional laws
without rejection or smoothing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .distributions import hr_block_correlation, norming_constants, rho_from_lambda
from .errors import DomainError, RareEventError
from .rng import RandomStream, as_stream
from .special import chi2_tail_quantile_log, gamma_q_inv_log, ln_chi2_tail, ln_gamma_q

_CHUNK_ELEMS = 1 << 22


# ---------------------------------------------------------------------------
# radial laws and base laws


@dataclass(frozen=True)
class ChiRadial:
    """``R`` with ``R^2 ~ chi^2_m``; with a uniform direction this recovers iid Gaussians."""

    m: int

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise DomainError(f"m must be a positive integer, got {self.m!r}")

    def sample_sq(self, n, gen):
        return gen.chisquare(self.m, size=n)

    def ln_sq_tail(self, v):
        return ln_chi2_tail(self.m, v)

    def sample_sq_tail(self, v, n, gen):
        ln_q0 = self.ln_sq_tail(v)
        if not np.isfinite(ln_q0):
            raise RareEventError(f"chi-square tail at {v} underflows even in log-space")
        # 1 - U lies in (0, 1], so the log stays finite
        q = chi2_tail_quantile_log(self.m, ln_q0 + np.log1p(-gen.random(n)))
        return np.maximum(np.asarray(q, dtype=float), v)

    def w(self, v):
        return 0.5


@dataclass(frozen=True)
class GenGammaRadial:
    """Generalized-gamma radius with density proportional to ``r^(a-1) exp(-(r/scale)^power)``.

    ``R^2 = scale^2 G^(2/power)`` with ``G ~ Gamma(a/power)``.  The squared
    radius lies in the Gumbel domain with ``w(v) = power v^(power/2 - 1) / (2 scale^power)``,
    so ``power = 1`` gives ``(sqrt(v) w(v))^(-1) = 2 scale``, a positive limit.
    """

    a: float
    power: float
    scale: float = 1.0

    def __post_init__(self):
        for name in ("a", "power", "scale"):
            val = getattr(self, name)
            if not (0.0 < val < math.inf):
                raise DomainError(f"{name} must be positive and finite, got {val!r}")

    @property
    def shape(self) -> float:
        return self.a / self.power

    def _to_g(self, v):
        return (np.sqrt(v) / self.scale) ** self.power

    def _from_g(self, g):
        return self.scale**2 * np.asarray(g, dtype=float) ** (2.0 / self.power)

    def sample_sq(self, n, gen):
        return self._from_g(gen.gamma(self.shape, size=n))

    def ln_sq_tail(self, v):
        return ln_gamma_q(self.shape, float(self._to_g(v)))

    def sample_sq_tail(self, v, n, gen):
        ln_q0 = self.ln_sq_tail(v)
        if not np.isfinite(ln_q0):
            raise RareEventError(f"radial tail at {v} underflows even in log-space")
        g = gamma_q_inv_log(self.shape, ln_q0 + np.log1p(-gen.random(n)))
        # guard against round-off just below the truncation point
        return np.maximum(self._from_g(g), v)

    def w(self, v):
        return self.power * v ** (0.5 * self.power - 1.0) / (2.0 * self.scale**self.power)


@dataclass(frozen=True)
class GaussianBase:
    """iid standard Gaussian base coordinates."""

    def radial(self, m):
        return ChiRadial(m)

    def sample(self, m, n, gen):
        return gen.standard_normal((n, m))


@dataclass(frozen=True)
class PolarBase:
    """Base vector ``R * O`` with ``O`` uniform on the unit sphere, independent of ``R``."""

    radial_law: object

    def radial(self, m):
        return self.radial_law

    def sample(self, m, n, gen):
        r = np.sqrt(self.radial_law.sample_sq(n, gen))
        return r[:, None] * uniform_sphere(m, n, gen)


def uniform_sphere(m, n, gen):
    g = gen.standard_normal((n, m))
    norm = np.linalg.norm(g, axis=1, keepdims=True)
    # zero-norm rows have probability zero; keep them finite anyway
    norm[norm == 0] = 1.0
    return g / norm


# ---------------------------------------------------------------------------
# model types


@dataclass(frozen=True, eq=False)
class PerturbationModel:
    """Perturbed chi-square risk with ``k`` dependent coordinates.

    Parameters
    ----------
    m : int
        Degrees of freedom.
    rho : sequence of float
        Correlations ``rho_1..rho_k``, each with ``0 < |rho| <= 1``.  ``|rho| = 1``
        is only admitted with zero perturbation variance in that column.
    base_law : GaussianBase or PolarBase
    w_cov : array_like, optional
        ``k x k`` covariance of one perturbation row.  Defaults to
        ``diag(1 - rho_j^2)``, which makes every margin chi-square for a
        Gaussian base.
    w_radial : sequence of radial laws, optional
        If given, column ``j`` of the perturbation is ``R_j O_j`` with independent
        uniform directions; ``w_cov`` must then be omitted.
    """

    m: int
    rho: tuple
    base_law: object = field(default_factory=GaussianBase)
    w_cov: np.ndarray | None = None
    w_radial: tuple | None = None

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise DomainError(f"m must be a positive integer, got {self.m!r}")
        rho = tuple(float(r) for r in np.atleast_1d(self.rho))
        if not rho:
            raise DomainError("at least one dependent coordinate is required")
        for r in rho:
            if not (0.0 < abs(r) <= 1.0):
                raise DomainError(f"each rho must satisfy 0 < |rho| <= 1, got {r!r}")
        object.__setattr__(self, "rho", rho)
        k = len(rho)
        if self.w_radial is not None:
            if self.w_cov is not None:
                raise DomainError("give either w_cov or w_radial, not both")
            if len(self.w_radial) != k:
                raise DomainError(f"w_radial needs {k} radial laws, got {len(self.w_radial)}")
            object.__setattr__(self, "w_radial", tuple(self.w_radial))
            return
        if self.w_cov is None:
            cov = np.diag([1.0 - r * r for r in rho])
        else:
            cov = np.array(self.w_cov, dtype=float)
            if cov.shape != (k, k):
                raise DomainError(f"w_cov must be {k}x{k}, got shape {cov.shape}")
            if not np.allclose(cov, cov.T, rtol=0, atol=1e-14):
                raise DomainError("w_cov must be symmetric")
        cov.setflags(write=False)
        object.__setattr__(self, "w_cov", cov)
        ev = np.linalg.eigvalsh(cov) if k > 0 else np.zeros(0)
        if ev.min() < -1e-12 * max(1.0, ev.max()):
            raise DomainError(f"w_cov is not positive semidefinite (min eigenvalue {ev.min():.3g})")
        for j, r in enumerate(rho):
            if abs(r) == 1.0 and cov[j, j] != 0.0:
                raise DomainError("|rho| = 1 requires zero perturbation variance in that column")
        object.__setattr__(self, "_w_factor", _psd_factor(cov))

    @property
    def k(self) -> int:
        return len(self.rho)

    @property
    def is_classical(self) -> bool:
        return (
            isinstance(self.base_law, GaussianBase)
            and self.w_radial is None
            and np.allclose(self.w_cov, np.diag([1.0 - r * r for r in self.rho]), atol=1e-15)
        )

    @property
    def radial(self):
        """Law of ``sqrt(zeta_1)``."""
        return self.base_law.radial(self.m)

    def sample_w(self, n, gen) -> np.ndarray:
        """``n`` independent ``m x k`` perturbation matrices, shape ``(n, m, k)``."""
        if self.w_radial is None:
            z = gen.standard_normal((n, self.m, self.k))
            return z @ self._w_factor.T
        out = np.empty((n, self.m, self.k))
        for j, law in enumerate(self.w_radial):
            r = np.sqrt(law.sample_sq(n, gen))
            out[:, :, j] = r[:, None] * uniform_sphere(self.m, n, gen)
        return out

    def sample_w_first_row(self, n, gen):
        """Joint draw of ``(W_1j, sum_i W_ij^2)`` for all columns, each of shape ``(n, k)``.

        Uses the representation ``W_1j = R_j O_1j`` for spherical columns so that
        only the two needed functionals are generated.
        """
        if self.w_radial is None:
            w = self.sample_w(n, gen)
            return w[:, 0, :], np.einsum("nij,nij->nj", w, w)
        first = np.empty((n, self.k))
        sq = np.empty((n, self.k))
        for j, law in enumerate(self.w_radial):
            r2 = law.sample_sq(n, gen)
            o1 = uniform_sphere(self.m, n, gen)[:, 0]
            first[:, j] = np.sqrt(r2) * o1
            sq[:, j] = r2
        return first, sq


def _psd_factor(cov):
    """Matrix ``L`` with ``L L^T = cov`` for a PSD (possibly singular) covariance."""
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        ev, vec = np.linalg.eigh(cov)
        ev = np.clip(ev, 0.0, None)
        return vec * np.sqrt(ev)


def classical_model(m: int, rho, w_corr=None) -> PerturbationModel:
    """Gaussian base with perturbation variances ``1 - rho_j^2``.

    ``w_corr`` optionally sets the correlation between perturbation columns.
    """
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    sd = np.sqrt(1.0 - rho**2)
    corr = np.eye(len(rho)) if w_corr is None else np.asarray(w_corr, dtype=float)
    return PerturbationModel(m, tuple(rho), GaussianBase(), corr * np.outer(sd, sd))


@dataclass(frozen=True, eq=False)
class ThresholdFamily:
    """Level-dependent correlations ``rho_{j,v} = 1 - lam_j / (4 v w(v))``.

    The perturbation row at level ``v`` has covariance ``D C D`` with
    ``D = diag(sqrt(1 - rho_{j,v}^2))`` and ``C = w_corr`` (identity by default).
    ``w_fn`` defaults to the radial law's own scaling function.
    """

    m: int
    lam: tuple
    base_law: object = field(default_factory=GaussianBase)
    w_corr: np.ndarray | None = None
    w_fn: Callable[[float], float] | None = None

    def __post_init__(self):
        lam = tuple(float(x) for x in np.atleast_1d(self.lam))
        for x in lam:
            if not (0.0 <= x < math.inf):
                raise DomainError(f"lambda must be a nonnegative real, got {x!r}")
        object.__setattr__(self, "lam", lam)
        if int(self.m) != self.m or self.m < 1:
            raise DomainError(f"m must be a positive integer, got {self.m!r}")

    @property
    def k(self) -> int:
        return len(self.lam)

    def w(self, v: float) -> float:
        return float(self.w_fn(v)) if self.w_fn is not None else float(self.base_law.radial(self.m).w(v))

    def rho_at(self, v: float) -> np.ndarray:
        wv = self.w(v)
        return np.array([rho_from_lambda(v, x, wv) for x in self.lam])

    def model_at(self, v: float) -> PerturbationModel:
        rho = self.rho_at(v)
        sd = np.sqrt(np.clip(1.0 - rho**2, 0.0, None))
        corr = np.eye(self.k) if self.w_corr is None else np.asarray(self.w_corr, dtype=float)
        return PerturbationModel(self.m, tuple(rho), self.base_law, corr * np.outer(sd, sd))


@dataclass(frozen=True, eq=False)
class LogChiModel:
    """Log-chi risks ``Z_j = exp(sigma_j I_j sqrt(zeta_j) + mu_j)``, ``j = 1..k``.

    ``chi_model`` supplies ``(zeta_1..zeta_k)`` and must therefore have ``k - 1``
    dependent coordinates.  Signs ``I_j`` are iid with ``P(I = 1) = p``.
    """

    sigma: tuple
    mu: tuple
    p: float
    chi_model: PerturbationModel

    def __post_init__(self):
        sigma = tuple(float(s) for s in np.atleast_1d(self.sigma))
        mu = tuple(float(s) for s in np.atleast_1d(self.mu))
        if len(sigma) != len(mu):
            raise DomainError("sigma and mu must have equal length")
        if any(not (0.0 < s < math.inf) for s in sigma):
            raise DomainError(f"sigma entries must be positive, got {sigma}")
        if any(not math.isfinite(x) for x in mu):
            raise DomainError(f"mu entries must be finite, got {mu}")
        if not (0.0 < self.p <= 1.0):
            raise DomainError(f"p must lie in (0, 1], got {self.p!r}")
        if self.chi_model.k != len(sigma) - 1:
            raise DomainError(
                f"chi_model has {self.chi_model.k + 1} coordinates but {len(sigma)} scales given"
            )
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "mu", mu)

    @property
    def k(self) -> int:
        return len(self.sigma)

    @property
    def m(self) -> int:
        return self.chi_model.m

    @property
    def order(self) -> np.ndarray:
        """Coordinate order with ``sigma`` descending (ties broken by ``mu`` descending)."""
        return np.lexsort((-np.asarray(self.mu), -np.asarray(self.sigma)))

    @property
    def tilde_sigma(self) -> float:
        return max(self.sigma)

    @property
    def tilde_mu(self) -> float:
        return max(mu for s, mu in zip(self.sigma, self.mu) if s == self.tilde_sigma)

    @property
    def J(self) -> int:
        return sum(1 for s, mu in zip(self.sigma, self.mu) if s == self.tilde_sigma and mu == self.tilde_mu)

    def log_tail_asymptotic(self, u):
        """Log of the leading-order tail of ``sum_j Z_j`` at ``u`` (requires ``ln u > tilde_mu``)."""
        ua = np.asarray(u, dtype=float)
        res = log_chi_log_tail(np.log(ua), self.m, self.p, self.J, self.tilde_sigma, self.tilde_mu)
        return float(res) if ua.ndim == 0 else res

    def tail_asymptotic(self, u):
        res = self.log_tail_asymptotic(u)
        return math.exp(res) if isinstance(res, float) else np.exp(res)


def log_chi_log_tail(log_u, m: int, p: float, J: int, sigma: float, mu: float):
    """Log of ``p J (t)^(m-2) exp(-t^2 / (2 sigma^2)) / (2^(m/2-1) Gamma(m/2) sigma^(m-2))``, ``t = log_u - mu``."""
    from .special import ln_gamma

    t = np.asarray(log_u, dtype=float) - mu
    if np.any(t <= 0):
        raise DomainError("asymptotic formula requires ln u > tilde_mu")
    return (
        math.log(p * J)
        - (0.5 * m - 1.0) * math.log(2.0)
        - ln_gamma(0.5 * m)
        - (m - 2) * math.log(sigma)
        + (m - 2) * np.log(t)
        - t * t / (2.0 * sigma * sigma)
    )


# ---------------------------------------------------------------------------
# samplers


def _chunks(n, per_row):
    size = max(1, _CHUNK_ELEMS // max(1, per_row))
    start = 0
    while start < n:
        stop = min(n, start + size)
        yield start, stop
        start = stop


def _gen(rng):
    return as_stream(rng).generator()


def sample_perturbed(model: PerturbationModel, n: int, rng) -> np.ndarray:
    """Unconditional draws of ``(zeta_1, ..., zeta_{k+1})``, shape ``(n, k+1)``."""
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n!r}")
    gen = _gen(rng)
    rho = np.asarray(model.rho)
    out = np.empty((n, model.k + 1))
    for a, b in _chunks(n, model.m * (model.k + 1)):
        x = model.base_law.sample(model.m, b - a, gen)
        w = model.sample_w(b - a, gen)
        out[a:b, 0] = np.einsum("ni,ni->n", x, x)
        y = rho[None, None, :] * x[:, :, None] + w
        out[a:b, 1:] = np.einsum("nij,nij->nj", y, y)
    return out


def _conditional_rows(model: PerturbationModel, v, gen):
    """Draws of ``(zeta_2..zeta_{k+1})`` given ``zeta_1 = v`` (``v`` scalar or per-row array)."""
    v = np.asarray(v, dtype=float)
    n = v.shape[0]
    rho = np.asarray(model.rho)
    out = np.empty((n, model.k))
    for a, b in _chunks(n, model.m * model.k):
        w1, wsq = model.sample_w_first_row(b - a, gen)
        vv = v[a:b, None]
        # expanded square keeps |rho| = 1 with zero perturbation exactly at v
        out[a:b] = rho**2 * vv + 2.0 * rho * np.sqrt(vv) * w1 + wsq
    return out


def sample_conditional_equal(model: PerturbationModel, v: float, n: int, rng) -> np.ndarray:
    """Exact draws of ``(zeta_2..zeta_{k+1})`` given ``zeta_1 = v``, shape ``(n, k)``.

    The base vector is fixed at ``(sqrt(v), 0, ..., 0)``; this is exact because
    the perturbation matrix is invariant under rotations of its row index.
    """
    if not v > 0:
        raise DomainError(f"conditioning level must be positive, got {v!r}")
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n!r}")
    return _conditional_rows(model, np.full(n, float(v)), _gen(rng))


def sample_exceedance_level(model: PerturbationModel, v: float, n: int, rng) -> np.ndarray:
    """Draws of ``zeta_1`` given ``zeta_1 > v`` by inversion of the log tail."""
    if not v > 0:
        raise DomainError(f"conditioning level must be positive, got {v!r}")
    return model.radial.sample_sq_tail(float(v), n, _gen(rng))


def sample_conditional_exceed(model: PerturbationModel, v: float, n: int, rng) -> np.ndarray:
    """Exact draws of ``(zeta_1, ..., zeta_{k+1})`` given ``zeta_1 > v``, shape ``(n, k+1)``."""
    if not v > 0:
        raise DomainError(f"conditioning level must be positive, got {v!r}")
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n!r}")
    gen = _gen(rng)
    z1 = model.radial.sample_sq_tail(float(v), n, gen)
    out = np.empty((n, model.k + 1))
    out[:, 0] = z1
    out[:, 1:] = _conditional_rows(model, z1, gen)
    return out


def sample_threshold_family(
    fam: ThresholdFamily, v: float, mode: str, n: int, rng, at: float | None = None
) -> np.ndarray:
    """Draws of ``(zeta_1, zeta_{2,v}, ..., zeta_{k+1,v})`` with correlations set at level ``v``.

    ``mode="equal"`` conditions on ``zeta_1 = at`` (default ``at = v``);
    ``mode="exceed"`` conditions on ``zeta_1 > v``.
    """
    model = fam.model_at(float(v))
    if mode == "equal":
        level = float(v if at is None else at)
        out = np.empty((n, fam.k + 1))
        out[:, 0] = level
        out[:, 1:] = sample_conditional_equal(model, level, n, rng)
        return out
    if mode == "exceed":
        return sample_conditional_exceed(model, v, n, rng)
    raise DomainError(f"mode must be 'equal' or 'exceed', got {mode!r}")


def sample_log_chi(model: LogChiModel, n: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Draws of ``(Z_1..Z_k)`` and their row sums."""
    stream = as_stream(rng)
    zeta = sample_perturbed(model.chi_model, n, stream.substream("zeta"))
    gen = stream.substream("signs").generator()
    signs = np.where(gen.random((n, model.k)) < model.p, 1.0, -1.0)
    sigma = np.asarray(model.sigma)
    mu = np.asarray(model.mu)
    z = np.exp(sigma * signs * np.sqrt(zeta) + mu)
    return z, z.sum(axis=1)


def sample_triangular_max(
    n_block: int,
    lam: float,
    m: int,
    reps: int,
    rng,
    rule: str = "hr",
    norming: str = "exact",
) -> np.ndarray:
    """Normalized componentwise maxima of ``n_block`` iid bivariate chi-square pairs.

    The pair correlation ``rho_n`` follows ``rule`` (see
    :func:`chisqrisk.distributions.hr_block_correlation`).  Returns ``(reps, 2)``.
    """
    if int(n_block) != n_block or n_block < 3:
        raise DomainError(f"n_block must be an integer >= 3, got {n_block!r}")
    if not lam > 0:
        raise DomainError(f"lambda must lie in (0, inf), got {lam!r}")
    rho = hr_block_correlation(int(n_block), lam, m, rule)
    nc = norming_constants(int(n_block), m, method=norming)
    model = classical_model(m, [rho])
    gen = _gen(rng)
    out = np.empty((reps, 2))
    reps_per_chunk = max(1, _CHUNK_ELEMS // (int(n_block) * m * 2))
    for a in range(0, reps, reps_per_chunk):
        b = min(reps, a + reps_per_chunk)
        cnt = (b - a) * int(n_block)
        x = gen.standard_normal((cnt, m))
        w = gen.standard_normal((cnt, m)) * model.w_cov[0, 0] ** 0.5
        z1 = np.einsum("ni,ni->n", x, x)
        y = rho * x + w
        z2 = np.einsum("ni,ni->n", y, y)
        out[a:b, 0] = z1.reshape(b - a, -1).max(axis=1)
        out[a:b, 1] = z2.reshape(b - a, -1).max(axis=1)
    return nc.normalize(out)
