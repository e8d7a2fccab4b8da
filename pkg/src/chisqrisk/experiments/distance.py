"""Sup-distance statistics with 95% critical bands."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import DomainError

KS_95 = 1.358
MIN_SAMPLE = 100


@dataclass(frozen=True)
class DistanceStat:
    kind: str
    value: float
    n_effective: float
    band95: float

    def __post_init__(self):
        if not self.value >= 0:
            raise DomainError(f"distance must be nonnegative, got {self.value!r}")
        if not self.band95 > 0:
            raise DomainError(f"band must be positive, got {self.band95!r}")

    def as_dict(self):
        return asdict(self)


def _check_size(n, what="sample"):
    if n < MIN_SAMPLE:
        raise DomainError(f"{what} size {n} is below the minimum of {MIN_SAMPLE}")


def ks_to_cdf(sample, cdf) -> DistanceStat:
    """One-sample Kolmogorov-Smirnov distance to a continuous ``cdf``."""
    x = np.sort(np.asarray(sample, dtype=float).ravel())
    n = x.size
    _check_size(n)
    f = np.asarray(cdf(x), dtype=float)
    i = np.arange(1, n + 1)
    d = max(float(np.max(i / n - f)), float(np.max(f - (i - 1) / n)), 0.0)
    return DistanceStat("ks_to_cdf", d, n, KS_95 / math.sqrt(n))


def two_sample_ks(a, b) -> DistanceStat:
    """Two-sample Kolmogorov-Smirnov distance."""
    xa = np.sort(np.asarray(a, dtype=float).ravel())
    xb = np.sort(np.asarray(b, dtype=float).ravel())
    n, m = xa.size, xb.size
    _check_size(n, "first sample")
    _check_size(m, "second sample")
    pts = np.concatenate([xa, xb])
    fa = np.searchsorted(xa, pts, side="right") / n
    fb = np.searchsorted(xb, pts, side="right") / m
    d = float(np.max(np.abs(fa - fb)))
    n_eff = n * m / (n + m)
    return DistanceStat("two_sample_ks", d, n_eff, KS_95 / math.sqrt(n_eff))


def empirical_joint_cdf(sample, grid) -> np.ndarray:
    """Empirical ``P(X_1 <= g_1, ..., X_d <= g_d)`` at each row ``g`` of ``grid``."""
    s = np.asarray(sample, dtype=float)
    g = np.atleast_2d(np.asarray(grid, dtype=float))
    out = np.empty(g.shape[0])
    for r, point in enumerate(g):
        out[r] = np.count_nonzero(np.all(s <= point[None, :], axis=1)) / s.shape[0]
    return out


def grid_sup_norm(sample, reference_cdf, grid) -> DistanceStat:
    """Max over ``grid`` of ``|F_n - F|`` for the empirical joint cdf of ``sample``.

    The band is a Hoeffding bound with a Bonferroni correction over the grid
    points, ``sqrt(ln(2 G / 0.05) / (2 n))``.
    """
    s = np.asarray(sample, dtype=float)
    n = s.shape[0]
    _check_size(n)
    g = np.atleast_2d(np.asarray(grid, dtype=float))
    emp = empirical_joint_cdf(s, g)
    ref = np.asarray(reference_cdf(g), dtype=float)
    d = float(np.max(np.abs(emp - ref)))
    band = math.sqrt(math.log(2 * g.shape[0] / 0.05) / (2 * n))
    return DistanceStat("grid_sup_norm", d, n, band)


def product_grid(xs, ys) -> np.ndarray:
    xx, yy = np.meshgrid(np.asarray(xs, float), np.asarray(ys, float), indexing="ij")
    return np.column_stack([xx.ravel(), yy.ravel()])


def nonincreasing_with_slack(values, bands=None) -> bool:
    """``values[i+1] <= values[i] + bands[i+1]`` for every consecutive pair."""
    v = np.asarray(values, dtype=float)
    b = np.zeros_like(v) if bands is None else np.asarray(bands, dtype=float)
    return bool(np.all(v[1:] <= v[:-1] + b[1:]))
