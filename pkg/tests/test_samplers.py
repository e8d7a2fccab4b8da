import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special, stats

from chisqrisk.errors import DomainError
from chisqrisk.rng import RandomStream
from chisqrisk.samplers import (
    ChiRadial,
    GaussianBase,
    GenGammaRadial,
    LogChiModel,
    PerturbationModel,
    PolarBase,
    ThresholdFamily,
    classical_model,
    log_chi_log_tail,
    sample_conditional_equal,
    sample_conditional_exceed,
    sample_exceedance_level,
    sample_log_chi,
    sample_perturbed,
    sample_threshold_family,
    sample_triangular_max,
    uniform_sphere,
)
from chisqrisk.special import chi2_tail

# 99% two-sided KS critical value
KS99 = 1.628


def ks_ok(sample, cdf):
    return stats.kstest(sample, cdf).statistic <= KS99 / math.sqrt(len(sample))


def test_unconditional_margins_are_chi2():
    model = classical_model(3, [0.6, -0.3])
    z = sample_perturbed(model, 50_000, RandomStream(1))
    assert z.shape == (50_000, 3)
    for j in range(3):
        assert ks_ok(z[:, j], stats.chi2(3).cdf)
    # E[zeta_1 zeta_2] - m^2 = 2 m rho^2 for the classical model
    cov = np.mean(z[:, 0] * z[:, 1]) - np.mean(z[:, 0]) * np.mean(z[:, 1])
    assert cov == pytest.approx(2 * 3 * 0.36, abs=0.15)


@pytest.mark.parametrize("m,rho,v", [(1, 0.3, 4.0), (3, -0.7, 25.0), (8, 0.95, 100.0)])
def test_conditional_equal_matches_noncentral_chi2(m, rho, v):
    model = classical_model(m, [rho])
    z = sample_conditional_equal(model, v, 40_000, RandomStream(2))[:, 0]
    s2 = 1 - rho**2
    assert ks_ok(z / s2, stats.ncx2(m, rho**2 * v / s2).cdf)


def test_exceedance_level_is_truncated_chi2():
    model = classical_model(3, [0.5])
    v = 40.0
    z = sample_exceedance_level(model, v, 40_000, RandomStream(3))
    assert z.min() >= v
    assert ks_ok(z, lambda x: 1.0 - chi2_tail(3, np.maximum(x, v)) / chi2_tail(3, v))


def test_exceedance_sampler_reaches_extreme_levels():
    model = classical_model(2, [0.5])
    z = sample_conditional_exceed(model, 1e4, 20_000, RandomStream(4))
    e = 0.5 * (z[:, 0] - 1e4)
    assert ks_ok(e, stats.expon.cdf)


def test_conditional_exceed_regression():
    model = classical_model(4, [0.8])
    z = sample_conditional_exceed(model, 20.0, 100_000, RandomStream(5))
    resid = z[:, 1] - (0.64 * z[:, 0] + 4 * 0.36)
    assert abs(resid.mean()) < 4 * resid.std() / math.sqrt(len(resid))


def test_correlated_perturbation_columns():
    corr = np.array([[1.0, 0.4], [0.4, 1.0]])
    model = classical_model(2, [0.6, 0.8], w_corr=corr)
    w = model.sample_w(200_000, RandomStream(6).generator()).reshape(-1, 2)
    expected = corr * np.outer([0.8, 0.6], [0.8, 0.6])
    np.testing.assert_allclose(np.cov(w.T), expected, atol=0.01)


def test_spherical_model_conditioning_matches_binned_simulation():
    # exactness relies on the rotational invariance of the perturbation only;
    # the base radius here is generalized gamma, not chi
    base = PolarBase(GenGammaRadial(2.0, 1.0))
    model = PerturbationModel(2, (0.5,), base, w_radial=(GenGammaRadial(3.0, 1.5),))
    v = 2.0
    z = sample_perturbed(model, 2_000_000, RandomStream(7))
    near = z[np.abs(z[:, 0] - v) < 0.02, 1]
    exact = sample_conditional_equal(model, v, 100_000, RandomStream(8))[:, 0]
    res = stats.ks_2samp(near, exact)
    assert len(near) > 5000
    assert res.statistic <= KS99 * math.sqrt(1 / len(near) + 1 / len(exact))


def test_gen_gamma_radial():
    law = GenGammaRadial(3.0, 1.0, scale=2.0)
    gen = RandomStream(9).generator()
    v = 60.0
    z = law.sample_sq_tail(v, 30_000, gen)
    assert z.min() >= v
    q = lambda x: special.gammaincc(law.shape, np.sqrt(x) / 2.0)
    ref = lambda x: 1.0 - q(x) / q(v)
    assert ks_ok(z, ref)
    # (sqrt(v) w(v))^-1 = 2 scale for power one
    assert 1.0 / (math.sqrt(v) * law.w(v)) == pytest.approx(4.0)
    assert ChiRadial(5).w(123.0) == 0.5


def test_uniform_sphere():
    o = uniform_sphere(4, 50_000, RandomStream(10).generator())
    np.testing.assert_allclose(np.linalg.norm(o, axis=1), 1.0, rtol=1e-12)
    np.testing.assert_allclose(o.mean(axis=0), 0.0, atol=0.01)
    np.testing.assert_allclose((o**2).mean(axis=0), 0.25, atol=0.01)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(m=2, rho=(0.0,)),
        dict(m=2, rho=(1.2,)),
        dict(m=0, rho=(0.5,)),
        dict(m=2, rho=(1.0,), w_cov=np.eye(1)),
        dict(m=2, rho=(0.5, 0.5), w_cov=np.array([[1.0, 2.0], [2.0, 1.0]])),
        dict(m=2, rho=(0.5,), w_cov=np.eye(2)),
        dict(m=2, rho=(0.5,), w_cov=np.eye(1), w_radial=(ChiRadial(2),)),
    ],
)
def test_model_validation(kwargs):
    with pytest.raises(DomainError):
        PerturbationModel(**kwargs)


def test_unit_correlation_with_zero_variance():
    model = PerturbationModel(3, (1.0,), w_cov=np.zeros((1, 1)))
    z = sample_perturbed(model, 100, RandomStream(11))
    np.testing.assert_allclose(z[:, 0], z[:, 1], rtol=1e-14)


def test_threshold_family_degenerate_and_limits():
    fam0 = ThresholdFamily(2, (0.0,))
    z = sample_threshold_family(fam0, 500.0, "exceed", 1000, RandomStream(12))
    assert np.array_equal(z[:, 0], z[:, 1])
    fam = ThresholdFamily(2, (1.0, 4.0))
    np.testing.assert_allclose(fam.rho_at(100.0), [1 - 1 / 200, 1 - 4 / 200])
    eq = sample_threshold_family(fam, 1000.0, "equal", 50_000, RandomStream(13), at=1004.0)
    assert np.all(eq[:, 0] == 1004.0)
    # w(v) (zeta_{2,v} - v) given zeta_1 = v + x / w(v) -> N(x - lam/2, lam) with x = 2
    assert ks_ok(0.5 * (eq[:, 2] - 1000.0), stats.norm(2 - 2, 2).cdf)
    with pytest.raises(DomainError):
        sample_threshold_family(fam, 1000.0, "sideways", 10, 0)
    with pytest.raises(DomainError):
        fam.rho_at(0.5)


def test_log_chi_model_constants():
    chi = classical_model(3, [0.5])
    model = LogChiModel((1.0, 0.5), (0.0, 0.0), 0.5, chi)
    assert (model.k, model.m, model.J, model.tilde_sigma, model.tilde_mu) == (2, 3, 1, 1.0, 0.0)
    tie = LogChiModel((1.0, 1.0), (0.2, 0.2), 0.5, chi)
    assert tie.J == 2 and tie.tilde_mu == 0.2
    with pytest.raises(DomainError):
        LogChiModel((1.0,), (0.0,), 0.5, chi)
    with pytest.raises(DomainError):
        LogChiModel((1.0, 0.5), (0.0, 0.0), 0.0, chi)


def test_log_chi_location_equivariance():
    chi = classical_model(3, [0.5])
    m0 = LogChiModel((1.0, 0.5), (0.0, 0.0), 0.5, chi)
    m1 = LogChiModel((1.0, 0.5), (1.0, 1.0), 0.5, chi)
    u = np.exp([3.0, 4.5, 6.0])
    np.testing.assert_array_equal(m1.log_tail_asymptotic(u * math.e), m0.log_tail_asymptotic(u))


def test_log_chi_formula_m1_is_mills_leading_term():
    # m = 1: p * 2 phi(t) / t is the leading term of 2 p Phibar(t)
    t = 6.0
    val = math.exp(log_chi_log_tail(t, 1, 0.5, 1, 1.0, 0.0))
    assert val == pytest.approx(0.5 * 2 * stats.norm.pdf(t) / t, rel=1e-12)


def test_log_chi_sampler():
    chi = classical_model(1, [0.5])
    model = LogChiModel((1.0, 0.5), (0.0, 0.3), 0.5, chi)
    z, tot = sample_log_chi(model, 20_000, RandomStream(14))
    assert z.shape == (20_000, 2)
    np.testing.assert_allclose(tot, z.sum(axis=1))
    # log Z_1 = I |N| with P(I = 1) = 1/2 is symmetric standard normal
    assert ks_ok(np.log(z[:, 0]), stats.norm.cdf)


def test_triangular_max_margins():
    x = sample_triangular_max(2000, 1.0, 2, 4000, RandomStream(15))
    assert x.shape == (4000, 2)
    # m = 2, exact norming: P(max <= b_n + 2x) = (1 - e^{-x}/n)^n
    ref = lambda t: (1 - np.exp(-np.asarray(t)) / 2000) ** 2000 * (t > -math.log(2000))
    assert ks_ok(x[:, 0], ref) and ks_ok(x[:, 1], ref)
    y = sample_triangular_max(2000, 1.0, 2, 4000, RandomStream(15))
    np.testing.assert_array_equal(x, y)
    with pytest.raises(DomainError):
        sample_triangular_max(2000, -1.0, 2, 10, 0)


@settings(max_examples=25, deadline=None)
@given(m=st.integers(1, 6), rho=st.floats(0.05, 0.99), v=st.floats(0.1, 500), seed=st.integers(0, 2**32))
def test_conditional_samples_valid_and_reproducible(m, rho, v, seed):
    model = classical_model(m, [rho])
    a = sample_conditional_equal(model, v, 64, RandomStream(seed))
    b = sample_conditional_equal(model, v, 64, RandomStream(seed))
    assert np.array_equal(a, b)
    assert np.all(a >= 0) and np.all(np.isfinite(a))
    e = sample_conditional_exceed(model, v, 64, RandomStream(seed))
    assert np.all(e[:, 0] >= v)
