"""Time-changed chi-square processes, their local limit process and derived functionals.

Gaussian paths are generated from a dense factorization of the covariance on
the grid.  Factorizations are cached per (covariance, grid) and shared
read-only between workers.

fBm here has covariance ``s^alpha + t^alpha - |t - s|^alpha`` (variance ``2 t^alpha``).
The limit process is

    Zt(t) = sum_i Z_i(C_i^(1/alpha) Theta_i t) O_i - sum_i C_i O_i^2 Theta_i^alpha t^alpha + E.

By self-similarity and independence of the ``Z_i``, given ``(O, Theta)`` the
Gaussian part equals ``sqrt(S) Z(t)`` in law for a single fBm ``Z`` with
``S = sum_i C_i O_i^2 Theta_i^alpha``; the default generator uses this reduction.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import DomainError, FactorizationError, RareEventError
from .rng import as_stream
from .samplers import uniform_sphere
from .special import chi2_tail_quantile_log, ln_chi2_tail, ln_gamma

MAX_DENSE_POINTS = 4000
_EIG_RTOL = 1e-10
_CHUNK_ELEMS = 1 << 22
_LOG_TINY = math.log(np.finfo(float).tiny)


# ---------------------------------------------------------------------------
# time-change laws


@dataclass(frozen=True)
class ThetaOnes:
    """Deterministic ``Theta = (1, ..., 1)``."""

    def sample(self, m, n, gen):
        return np.ones((n, m))

    def describe(self):
        return "ones"


@dataclass(frozen=True)
class ThetaConstant:
    """Deterministic ``Theta = value`` in every coordinate (``value = 0`` freezes time)."""

    value: float

    def __post_init__(self):
        if not (0.0 <= self.value < math.inf):
            raise DomainError(f"Theta must be nonnegative and bounded, got {self.value!r}")

    def sample(self, m, n, gen):
        return np.full((n, m), float(self.value))

    def describe(self):
        return f"constant({self.value})"


@dataclass(frozen=True)
class ThetaUniform:
    """iid ``Theta_i ~ U(low, high)``."""

    low: float
    high: float

    def __post_init__(self):
        if not (0.0 <= self.low < self.high < math.inf):
            raise DomainError(f"need 0 <= low < high < inf, got ({self.low}, {self.high})")

    def sample(self, m, n, gen):
        return gen.uniform(self.low, self.high, size=(n, m))

    def describe(self):
        return f"uniform({self.low},{self.high})"


@dataclass(frozen=True, eq=False)
class ThetaAtoms:
    """Discrete law on the rows of ``atoms`` (shape ``(n_atoms, m)``) with ``weights``."""

    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        atoms = np.atleast_2d(np.asarray(self.atoms, dtype=float))
        w = np.asarray(self.weights, dtype=float)
        if atoms.shape[0] != w.shape[0]:
            raise DomainError("one weight per atom is required")
        if np.any(atoms < 0) or not np.all(np.isfinite(atoms)):
            raise DomainError("atoms must be nonnegative and finite")
        if np.any(w < 0) or not w.sum() > 0:
            raise DomainError("weights must be nonnegative with positive total")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", w / w.sum())

    def sample(self, m, n, gen):
        if self.atoms.shape[1] != m:
            raise DomainError(f"atoms have {self.atoms.shape[1]} columns, expected {m}")
        idx = gen.choice(len(self.weights), size=n, p=self.weights)
        return self.atoms[idx]

    def describe(self):
        return f"atoms({self.atoms.tolist()};{self.weights.tolist()})"


# ---------------------------------------------------------------------------
# specs and grids


@dataclass(frozen=True)
class ProcessSpec:
    """Time-changed chi-square process with covariances ``r_i(t) = exp(-C_i |t|^alpha)``."""

    m: int
    alpha: float
    C: tuple
    theta_law: object = field(default_factory=ThetaOnes)

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise DomainError(f"m must be a positive integer, got {self.m!r}")
        if not (0.0 < self.alpha <= 2.0):
            raise DomainError(f"alpha must lie in (0, 2], got {self.alpha!r}")
        C = tuple(float(c) for c in np.atleast_1d(self.C))
        if len(C) == 1 and self.m > 1:
            C = C * self.m
        if len(C) != self.m:
            raise DomainError(f"need {self.m} local constants, got {len(C)}")
        if any(not (0.0 < c < math.inf) for c in C):
            raise DomainError(f"local constants must be positive, got {C}")
        object.__setattr__(self, "C", C)

    def r(self, i: int, t):
        """Covariance function of component ``i``."""
        return np.exp(-self.C[i] * np.abs(np.asarray(t, dtype=float)) ** self.alpha)

    @property
    def mixing_scale(self) -> float:
        """Lag beyond which every ``r_i`` is below 0.01."""
        return max((math.log(100.0) / c) ** (1.0 / self.alpha) for c in self.C)


@dataclass(frozen=True)
class Grid:
    """Equispaced nodes ``0, step, 2 step, ...`` up to ``t_max``."""

    t_max: float
    step: float

    def __post_init__(self):
        if not self.step > 0:
            raise DomainError(f"step must be positive, got {self.step!r}")
        if not self.t_max >= self.step:
            raise DomainError(f"t_max must be >= step, got t_max={self.t_max}, step={self.step}")

    @property
    def points(self) -> int:
        return int(math.floor(self.t_max / self.step + 1e-9)) + 1

    @property
    def times(self) -> np.ndarray:
        return self.step * np.arange(self.points)

    def check_dense(self, extra=""):
        if self.points > MAX_DENSE_POINTS:
            raise DomainError(
                f"grid has {self.points} points, above the dense factorization bound "
                f"{MAX_DENSE_POINTS}{extra}"
            )


# ---------------------------------------------------------------------------
# covariance factorization


@dataclass(frozen=True, eq=False)
class Factor:
    """``L`` with ``L L^T = cov``; ``causal`` means ``L`` is lower triangular."""

    L: np.ndarray
    causal: bool
    method: str
    diagnostics: dict

    @property
    def size(self) -> int:
        return self.L.shape[0]


def factorize(cov: np.ndarray, label: str = "covariance") -> Factor:
    """Cholesky factor, with an eigen-decomposition fallback for singular PSD matrices.

    The fallback drops eigenvalues below ``1e-10`` times the largest one, which
    is exact for low-rank covariances such as fBm with ``alpha = 2``.
    """
    cov = np.asarray(cov, dtype=float)
    try:
        L = np.linalg.cholesky(cov)
        if np.all(np.isfinite(L)):
            L.setflags(write=False)
            return Factor(L, True, "cholesky", {"n": cov.shape[0]})
    except np.linalg.LinAlgError:
        pass
    ev, vec = np.linalg.eigh(cov)
    top = max(ev.max(), 0.0)
    diag = {"n": cov.shape[0], "min_eig": float(ev.min()), "max_eig": float(top), "label": label}
    if top <= 0:
        raise FactorizationError(f"{label} has no positive eigenvalue", diag)
    if ev.min() < -1e-8 * top:
        raise FactorizationError(
            f"{label} is not positive semidefinite (min eigenvalue {ev.min():.3g}, max {top:.3g})",
            diag,
        )
    keep = ev > _EIG_RTOL * top
    L = vec[:, keep] * np.sqrt(ev[keep])
    diag["rank"] = int(keep.sum())
    L.setflags(write=False)
    return Factor(L, False, "eigh", diag)


@lru_cache(maxsize=64)
def _fbm_factor(alpha: float, step: float, points: int) -> Factor:
    t = step * np.arange(1, points)
    cov = t[:, None] ** alpha + t[None, :] ** alpha - np.abs(t[:, None] - t[None, :]) ** alpha
    return factorize(cov, f"fBm covariance (alpha={alpha}, step={step}, points={points})")


@lru_cache(maxsize=64)
def _stationary_factor(c: float, alpha: float, step: float, points: int) -> Factor:
    lag = step * np.arange(points)
    r = np.exp(-c * lag**alpha)
    idx = np.abs(np.arange(points)[:, None] - np.arange(points)[None, :])
    return factorize(r[idx], f"stationary covariance (C={c}, alpha={alpha}, step={step})")


def fbm_factor(alpha: float, grid: Grid) -> Factor:
    """Factor of the fBm covariance on the nonzero grid nodes."""
    grid.check_dense()
    return _fbm_factor(float(alpha), float(grid.step), grid.points)


def _gaussian_draw(factor: Factor, n: int, gen) -> np.ndarray:
    z = gen.standard_normal((n, factor.L.shape[1]))
    return z @ factor.L.T


def fbm_sample(alpha: float, grid: Grid, rng, size: int | None = None) -> np.ndarray:
    """fBm path(s) on ``grid``; shape ``(points,)`` or ``(size, points)``. ``Z(0) = 0``."""
    if not (0.0 < alpha <= 2.0):
        raise DomainError(f"alpha must lie in (0, 2], got {alpha!r}")
    f = fbm_factor(alpha, grid)
    gen = as_stream(rng).generator()
    n = 1 if size is None else int(size)
    out = np.zeros((n, grid.points))
    out[:, 1:] = _gaussian_draw(f, n, gen)
    return out[0] if size is None else out


def stationary_gp_sample(spec: ProcessSpec, i: int, grid: Grid, rng, size: int | None = None,
                         theta: float = 1.0) -> np.ndarray:
    """Component ``X_i(theta t)`` on ``grid`` (covariance ``exp(-C_i theta^alpha |t|^alpha)``)."""
    grid.check_dense()
    gen = as_stream(rng).generator()
    n = 1 if size is None else int(size)
    out = _stationary_paths(spec.C[i] * theta**spec.alpha, spec.alpha, grid, n, gen)
    return out[0] if size is None else out


def _stationary_paths(c, alpha, grid, n, gen):
    if c == 0.0:
        # frozen time: one Gaussian value per path
        return np.repeat(gen.standard_normal((n, 1)), grid.points, axis=1)
    f = _stationary_factor(float(c), float(alpha), float(grid.step), grid.points)
    return _gaussian_draw(f, n, gen)


def time_changed_chi2_path(spec: ProcessSpec, grid: Grid, rng, size: int | None = None,
                           return_theta: bool = False):
    """Paths of ``zeta(t) = sum_i X_i(Theta_i t)^2``, with one ``Theta`` draw per path."""
    grid.check_dense()
    stream = as_stream(rng)
    n = 1 if size is None else int(size)
    theta = spec.theta_law.sample(spec.m, n, stream.substream("theta").generator())
    gen = stream.substream("paths").generator()
    out = np.zeros((n, grid.points))
    for i in range(spec.m):
        c_eff = spec.C[i] * theta[:, i] ** spec.alpha
        # group paths sharing an effective constant so each factor is reused
        uniq, inv = np.unique(c_eff, return_inverse=True)
        for u_idx, c in enumerate(uniq):
            rows = np.nonzero(inv == u_idx)[0]
            x = _stationary_paths(float(c), spec.alpha, grid, rows.size, gen)
            out[rows] += x * x
    res = out[0] if size is None else out
    return (res, theta) if return_theta else res


def sojourn_time(path, v: float, t: float, step: float) -> np.ndarray | float:
    """Left Riemann sum ``step * #{nodes t_j < t with path > v}``.

    ``path`` holds values at ``0, step, 2 step, ...``; rows are separate paths.
    """
    arr = np.asarray(path, dtype=float)
    n_nodes = int(math.floor(t / step + 1e-9))
    if n_nodes > arr.shape[-1]:
        raise DomainError(f"horizon {t} exceeds the path grid ({arr.shape[-1]} nodes of step {step})")
    res = step * np.count_nonzero(arr[..., :n_nodes] > v, axis=-1)
    return float(res) if arr.ndim == 1 else res


# ---------------------------------------------------------------------------
# limit process


@dataclass(frozen=True, eq=False)
class LimitProcessDraw:
    """Draws of the limit process with the ingredients used to build them.

    ``fbm`` holds the unit fBm paths (shape ``(n, points)``) for the reduced
    generator, or the component paths (shape ``(n, m, points)``) otherwise.
    """

    times: np.ndarray
    path: np.ndarray
    fbm: np.ndarray
    O: np.ndarray
    theta: np.ndarray
    E: np.ndarray
    S: np.ndarray


def _limit_ingredients(spec: ProcessSpec, n: int, gen):
    O = uniform_sphere(spec.m, n, gen)
    theta = spec.theta_law.sample(spec.m, n, gen)
    E = gen.standard_exponential(n)
    S = (np.asarray(spec.C) * O**2 * theta**spec.alpha).sum(axis=1)
    return O, theta, E, S


def limit_process_sample(spec: ProcessSpec, grid: Grid, rng, size: int = 1,
                         method: str = "reduced") -> LimitProcessDraw:
    """Draw the limit process on ``grid``.

    ``method="reduced"`` uses one fBm per draw scaled by ``sqrt(S)``;
    ``method="components"`` builds ``sum_i sqrt(C_i Theta_i^alpha) O_i Z_i(t)``
    from ``m`` independent fBm paths.  Both are exact in law on the grid.
    """
    stream = as_stream(rng)
    gen = stream.substream("mix").generator()
    O, theta, E, S = _limit_ingredients(spec, size, gen)
    t = grid.times
    drift = S[:, None] * t[None, :] ** spec.alpha
    if method == "reduced":
        z = fbm_sample(spec.alpha, grid, stream.substream("fbm"), size=size)
        gauss = np.sqrt(S)[:, None] * z
    elif method == "components":
        z = np.stack(
            [fbm_sample(spec.alpha, grid, stream.substream("fbm", i), size=size) for i in range(spec.m)],
            axis=1,
        )
        coef = np.sqrt(np.asarray(spec.C) * theta**spec.alpha) * O
        gauss = np.einsum("ni,nit->nt", coef, z)
    else:
        raise DomainError(f"method must be 'reduced' or 'components', got {method!r}")
    path = gauss - drift + E[:, None]
    return LimitProcessDraw(t, path, z, O, theta, E, S)


@dataclass(frozen=True, eq=False)
class BEstimate:
    x: np.ndarray
    B: np.ndarray
    half_width: np.ndarray
    reps: int
    end_positive_fraction: float
    sojourn: np.ndarray = field(repr=False)


def estimate_B(spec: ProcessSpec, x_grid, grid: Grid, reps: int, rng, chunk: int = 1000) -> BEstimate:
    """Monte Carlo estimate of ``B(x) = P(int_0^inf 1(Zt(s) > 0) ds > x)``.

    The infinite horizon is truncated at ``grid.t_max``; the fraction of paths
    still positive at the last node is reported and a warning is raised above 1%.
    """
    x = np.asarray(x_grid, dtype=float)
    stream = as_stream(rng)
    soj = np.empty(reps)
    end_pos = 0
    for b, a in enumerate(range(0, reps, chunk)):
        n = min(chunk, reps - a)
        d = limit_process_sample(spec, grid, stream.substream("chunk", b), size=n)
        soj[a:a + n] = grid.step * np.count_nonzero(d.path > 0, axis=1)
        end_pos += int(np.count_nonzero(d.path[:, -1] > 0))
    B = (soj[None, :] > x[:, None]).mean(axis=1)
    B = np.minimum.accumulate(B)
    hw = 1.96 * np.sqrt(B * (1.0 - B) / reps)
    frac = end_pos / reps
    if frac > 0.01:
        warnings.warn(f"{frac:.2%} of limit paths are still positive at t_max={grid.t_max}", RuntimeWarning)
    return BEstimate(x, B, hw, reps, frac, soj)


# ---------------------------------------------------------------------------
# Pickands-type constant


@dataclass(frozen=True)
class PickandsEstimate:
    a: float
    K: int
    H: float
    half_width: float
    reps: int
    H_half_horizon: float
    truncation_warning: bool


def _pickands_values(spec: ProcessSpec, a: float, K: int, reps: int, stream, block: int = 64,
                     chunk: int = 4000):
    """Per-replicate ``P(E <= -M)`` and the same for the first ``K/2`` nodes.

    ``M = max_{1<=k<=K} (sqrt(S) Z(ak) - S (ak)^alpha)``; conditioning on ``E``
    analytically gives ``(1 - exp(M)) 1(M < 0)``.  With a causal factor, paths
    are extended block by block and only while they stay below zero.
    """
    grid = Grid(K * a, a)
    f = fbm_factor(spec.alpha, grid)
    L = f.L
    t_alpha = (a * np.arange(1, K + 1)) ** spec.alpha
    half = K // 2
    vals = np.zeros(reps)
    vals_half = np.zeros(reps)
    for b, start in enumerate(range(0, reps, chunk)):
        n = min(chunk, reps - start)
        gen = stream.substream("pickands", b).generator()
        _, _, _, S = _limit_ingredients(spec, n, gen)
        sq = np.sqrt(S)
        if not f.causal:
            z = gen.standard_normal((n, L.shape[1]))
            y = sq[:, None] * (z @ L.T) - S[:, None] * t_alpha[None, :]
            M = y.max(axis=1)
            Mh = y[:, :half].max(axis=1)
        else:
            M = np.full(n, -np.inf)
            Mh = None
            alive = np.arange(n)
            z = np.empty((n, 0))
            for lo in range(0, K, block):
                hi = min(K, lo + block)
                if lo == half:
                    Mh = M.copy()
                z = np.concatenate([z, gen.standard_normal((n, hi - lo))], axis=1)
                if alive.size:
                    y = sq[alive, None] * (z[alive, :hi] @ L[lo:hi, :hi].T) - S[alive, None] * t_alpha[None, lo:hi]
                    if lo < half < hi:
                        # paths dead before this block already have Mh >= 0
                        Mh = M.copy()
                        Mh[alive] = np.maximum(M[alive], y[:, :half - lo].max(axis=1))
                    M[alive] = np.maximum(M[alive], y.max(axis=1))
                elif lo < half < hi:
                    Mh = M.copy()
                alive = alive[M[alive] < 0]
            if Mh is None:
                Mh = M.copy()
        vals[start:start + n] = np.where(M < 0, -np.expm1(np.minimum(M, 0.0)), 0.0)
        vals_half[start:start + n] = np.where(Mh < 0, -np.expm1(np.minimum(Mh, 0.0)), 0.0)
    return vals, vals_half


def estimate_pickands(spec: ProcessSpec, a: float, K: int, reps: int, rng) -> PickandsEstimate:
    """``(1/a) P(max_{1<=k<=K} Zt(ak) <= 0)`` with a normal-approximation 95% CI.

    The estimate at ``K/2`` is reported as a truncation diagnostic; a warning is
    raised if it differs from the full estimate by more than the CI half-width.
    """
    if not a > 0:
        raise DomainError(f"lattice spacing must be positive, got {a!r}")
    if int(K) != K or K < 2:
        raise DomainError(f"K must be an integer >= 2, got {K!r}")
    if K + 1 > MAX_DENSE_POINTS:
        raise DomainError(f"K = {K} exceeds the dense factorization bound {MAX_DENSE_POINTS - 1}")
    vals, vals_half = _pickands_values(spec, float(a), int(K), int(reps), as_stream(rng))
    H = vals.mean() / a
    hw = 1.96 * vals.std(ddof=1) / math.sqrt(reps) / a
    H_half = vals_half.mean() / a
    warn = abs(H - H_half) > hw
    if warn:
        warnings.warn(
            f"truncation at K={K} moves the estimate by {abs(H - H_half):.3g} (> CI half-width {hw:.3g})",
            RuntimeWarning,
        )
    return PickandsEstimate(float(a), int(K), float(H), float(hw), int(reps), float(H_half), bool(warn))


@dataclass(frozen=True)
class PickandsRefinement:
    estimates: tuple
    H: float
    half_width: float
    slope: float


def refine_pickands(spec: ProcessSpec, a: float, horizon: float, reps: int, rng,
                    levels: int = 3) -> PickandsRefinement:
    """Estimates at ``a, a/2, a/4, ...`` and their extrapolation to ``a -> 0``.

    The fit is ``H(a) = H + c sqrt(a)`` by weighted least squares; the half-width
    of the intercept is propagated from the per-level CIs.
    """
    stream = as_stream(rng)
    ests = []
    for j in range(levels):
        aj = a / 2**j
        K = int(round(horizon / aj))
        ests.append(estimate_pickands(spec, aj, K, reps, stream.substream("level", j)))
    x = np.sqrt([e.a for e in ests])
    y = np.array([e.H for e in ests])
    s = np.array([max(e.half_width, 1e-12) for e in ests])
    A = np.column_stack([np.ones_like(x), x]) / s[:, None]
    coef, *_ = np.linalg.lstsq(A, y / s, rcond=None)
    # intercept as a linear combination of the level estimates
    weights = np.linalg.pinv(A)[0] / s
    hw = float(np.sqrt(np.sum((weights * s) ** 2)))
    return PickandsRefinement(tuple(ests), float(coef[0]), hw, float(coef[1]))


# ---------------------------------------------------------------------------
# supremum tail


def sup_tail_asymptotic(spec: ProcessSpec, T: float, v, H: float):
    """Leading-order ``P(sup_[0,T] zeta > v)`` for Pickands-type constant ``H``."""
    va = np.asarray(v, dtype=float)
    m, al = spec.m, spec.alpha
    ln = (
        math.log(H) + (1.0 - 0.5 * m) * math.log(2.0) + math.log(T) - ln_gamma(0.5 * m)
        + (1.0 / al + 0.5 * m - 1.0) * np.log(va) - 0.5 * va
    )
    return float(np.exp(ln)) if va.ndim == 0 else np.exp(ln)


@dataclass(frozen=True)
class SupTailRow:
    v: float
    p_hat: float
    p_half_width: float
    events: int
    asymptotic: float
    ratio: float
    ratio_half_width: float
    skipped: bool


def sup_tail_experiment(spec: ProcessSpec, T: float, v_list, reps: int, rng, H: float,
                        H_half_width: float = 0.0, step_scaled: float = 0.01,
                        floor_events: int = 50, chunk: int = 2000) -> list[SupTailRow]:
    """Monte Carlo ``P(sup_[0,T] zeta > v)`` against the asymptotic formula.

    The path grid at level ``v`` has step ``step_scaled * v^(-1/alpha)``, so the
    scaled lattice is the same at every level; ``H`` should be the constant for
    that lattice.  Levels with fewer than ``floor_events`` exceedances are
    flagged as skipped.
    """
    stream = as_stream(rng)
    rows = []
    for li, v in enumerate(v_list):
        step = step_scaled * v ** (-1.0 / spec.alpha)
        grid = Grid(T, step)
        grid.check_dense(f" at level v={v}")
        hits = 0
        for b, a in enumerate(range(0, reps, chunk)):
            n = min(chunk, reps - a)
            paths = time_changed_chi2_path(spec, grid, stream.substream("level", li, "chunk", b), size=n)
            hits += int(np.count_nonzero(paths.max(axis=1) > v))
        p = hits / reps
        phw = 1.96 * math.sqrt(max(p * (1 - p), 1.0 / reps) / reps)
        asym = sup_tail_asymptotic(spec, T, v, H)
        ratio = p / asym
        rel = math.sqrt((phw / p) ** 2 + (H_half_width / H) ** 2) if p > 0 else math.inf
        skipped = hits < floor_events
        if skipped:
            warnings.warn(f"level v={v}: {hits} exceedances below the floor of {floor_events}", RuntimeWarning)
        rows.append(SupTailRow(float(v), p, phw, hits, asym, ratio, ratio * rel, skipped))
    return rows


# ---------------------------------------------------------------------------
# sojourn functional at finite level


@dataclass(frozen=True, eq=False)
class SojournFunctional:
    v: float
    x: np.ndarray
    F: np.ndarray
    half_width: np.ndarray
    reps: int
    mean_count: float
    log_tail_prob: float


def palm_sojourn_functional(spec: ProcessSpec, t: float, v: float, x_grid, reps: int, rng,
                            step_scaled: float = 0.01, chunk: int = 500) -> SojournFunctional:
    """``int_x^inf P(s L > y) dy / E[s L]`` with ``s = v^(1/alpha)`` on a discrete grid.

    With ``L = step * N`` and ``N`` the number of grid nodes in ``[0, t)`` above
    ``v``, the ratio equals ``E_Q[(s step N - x)_+ / (s step N)]`` where ``Q``
    picks a uniform node ``tau`` and conditions on ``zeta(tau) > v``.  Under
    ``Q`` the vector ``X(tau)`` is ``sqrt(zeta(tau)) O`` with ``zeta(tau)`` from
    the chi-square tail, and each component path is completed by Gaussian
    conditioning on its value at ``tau``.  The estimator is exact for the
    discretized functional and needs no rare-event luck.
    """
    ln_tail = ln_chi2_tail(spec.m, v)
    # E[L] = t P(zeta > v) on the grid; once it underflows the ratio is meaningless in double precision
    if not ln_tail + math.log(t) > _LOG_TINY:
        raise RareEventError(f"mean sojourn at v={v} underflows (log P(zeta > v) = {ln_tail:.1f})")
    step = step_scaled * v ** (-1.0 / spec.alpha)
    grid = Grid(t, step)
    n_nodes = int(math.floor(t / step + 1e-9))
    if n_nodes < 1:
        raise DomainError("window shorter than one grid step")
    grid = Grid(step * (n_nodes - 1) if n_nodes > 1 else step, step)
    grid.check_dense(f" at level v={v}")
    pts = n_nodes
    x = np.asarray(x_grid, dtype=float)
    s = v ** (1.0 / spec.alpha) * step
    stream = as_stream(rng)
    ratios = np.empty((reps, x.size))
    counts = np.empty(reps)
    lags = step * np.arange(pts)
    for b, a in enumerate(range(0, reps, chunk)):
        n = min(chunk, reps - a)
        gen = stream.substream("chunk", b).generator()
        tau = gen.integers(0, pts, size=n)
        theta = spec.theta_law.sample(spec.m, n, gen)
        z0 = chi2_tail_quantile_log(spec.m, ln_tail + np.log1p(-gen.random(n)))
        z0 = np.maximum(np.atleast_1d(z0), v)
        xt = np.sqrt(z0)[:, None] * uniform_sphere(spec.m, n, gen)
        zeta = np.zeros((n, pts))
        dist = np.abs(np.arange(pts)[None, :] - tau[:, None])
        for i in range(spec.m):
            c_eff = spec.C[i] * theta[:, i] ** spec.alpha
            y = np.empty((n, pts))
            uniq, inv = np.unique(c_eff, return_inverse=True)
            for u_idx, c in enumerate(uniq):
                rows = np.nonzero(inv == u_idx)[0]
                y[rows] = _stationary_paths(float(c), spec.alpha, Grid(max(lags[-1], step), step), rows.size, gen)[:, :pts]
            r = np.exp(-c_eff[:, None] * (step * dist) ** spec.alpha)
            y_tau = y[np.arange(n), tau]
            xi = y - r * (y_tau - xt[:, i])[:, None]
            zeta += xi * xi
        N = np.count_nonzero(zeta > v, axis=1)
        # the conditioning node is above v by construction
        N = np.maximum(N, 1)
        sn = s * N
        ratios[a:a + n] = np.clip(sn[:, None] - x[None, :], 0.0, None) / sn[:, None]
        counts[a:a + n] = N
    F = ratios.mean(axis=0)
    hw = 1.96 * ratios.std(axis=0, ddof=1) / math.sqrt(reps)
    return SojournFunctional(float(v), x, F, hw, reps, float(counts.mean()), float(ln_tail))
