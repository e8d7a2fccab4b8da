"""Acceptance criteria 1-12 at full scale.

Each test records one PASS/FAIL line (collected in the terminal summary) and
then asserts the same condition.  Tolerances come from the versioned defaults
table or are pinned here exactly as stated for the criterion.
"""

import json
import math
import time
import warnings

import mpmath
import numpy as np
import pytest
from scipy import integrate, stats

from chisqrisk.cli import parse_and_dispatch
from chisqrisk.distributions import (
    BivChiSqParams,
    HuslerReissParams,
    biv_chisq_pdf,
    conditional_pdf,
    conditional_scale,
    conditional_zeta2_pdf,
    gumbel_cdf,
    husler_reiss_cdf,
    husler_reiss_pdf,
)
from chisqrisk.experiments import (
    defaults_for,
    run_gaussian_approx,
    run_hr_density,
    run_hr_maxima,
    run_logchi_tail,
    run_pickands,
    run_sojourn,
    run_sup_tail,
    run_threshold_theorem,
)
from chisqrisk.experiments.distance import product_grid
from chisqrisk.processes import ProcessSpec
from chisqrisk.rng import RandomStream
from chisqrisk.samplers import LogChiModel, ThresholdFamily, classical_model, sample_conditional_equal
from chisqrisk.special import chi2_pdf

AC1_GRID = [(m, rho, v) for m in (1, 3, 8) for rho in (0.3, 0.7, 0.95) for v in (4.0, 25.0, 100.0)]

# h_1(0, 0) by mpmath differentiation of H_1 (30 digits)
H1_PDF_00 = 0.20824690990043378
# discrete Pickands constant of sqrt(2) W(t) - t on the lattice 0.04 Z (Spitzer's identity)
SPITZER_004 = 0.8481437019364824


def _elapsed(t0):
    return time.perf_counter() - t0


def test_ac01_conditional_law_exactness(criterion):
    t0 = time.perf_counter()
    worst, worst_at = 0.0, None
    for i, (m, rho, v) in enumerate(AC1_GRID):
        z = sample_conditional_equal(classical_model(m, [rho]), v, 100_000, RandomStream(101).substream(i))[:, 0]
        s2 = 1.0 - rho**2
        d = stats.kstest(z / s2, stats.ncx2(m, rho**2 * v / s2).cdf).statistic
        if d > worst:
            worst, worst_at = d, (m, rho, v)
    secs = _elapsed(t0)
    ok = worst <= 0.006 and secs <= 30
    criterion(1, "conditional sampler vs noncentral chi-square", ok,
              f"worst KS {worst:.4f} at (m,rho,v)={worst_at}, {secs:.1f}s")
    assert ok


def test_ac02_density_identity(criterion):
    t0 = time.perf_counter()
    worst = 0.0
    for m, rho, v in AC1_GRID:
        p = BivChiSqParams(m, rho)
        s2 = 1.0 - rho**2
        law = stats.ncx2(m, rho**2 * v / s2)
        w = s2 * law.ppf(np.linspace(1e-4, 1 - 1e-4, 50))
        ref = law.pdf(w / s2) / s2
        cond = conditional_zeta2_pdf(p, w, v)
        loc, scale = conditional_scale(p, v)
        std = conditional_pdf(p, (w - loc) / scale, v) / scale
        # the same identity through the joint density and its chi-square marginal
        joint = biv_chisq_pdf(p, np.full_like(w, v), w) / chi2_pdf(m, v)
        worst = max(worst, float(np.max(np.abs(cond / ref - 1))), float(np.max(np.abs(joint / ref - 1))),
                    float(np.max(np.abs(std / ref - 1))))
    secs = _elapsed(t0)
    ok = worst <= 1e-6 and secs <= 5
    criterion(2, "conditional pdf and joint/marginal vs noncentral density", ok,
              f"max rel err {worst:.2e}, {secs:.1f}s")
    assert ok


def test_ac03_gaussian_approximation(criterion):
    t0 = time.perf_counter()
    cfg = defaults_for("gaussian-approx")
    details, ok = [], True
    for m, rho in ((3, 0.6), (2, 0.99)):
        rep = run_gaussian_approx(classical_model(m, [rho]), cfg["v_list"], cfg["n"], RandomStream(103),
                                  ks_final_max=cfg["ks_final_max"])
        ks = [r["ks"] for r in rep.stats]
        ok &= rep.verdicts["ks_monotone"] and rep.verdicts["ks_final"]
        details.append(f"({m},{rho}) KS " + "/".join(f"{k:.4f}" for k in ks))
    secs = _elapsed(t0)
    ok = bool(ok) and secs <= 60
    criterion(3, "standardized conditional law -> N(0,1)", ok, "; ".join(details) + f", {secs:.1f}s")
    assert ok


def test_ac04_threshold_theorem(criterion):
    t0 = time.perf_counter()
    cfg = defaults_for("threshold-clt")
    rep = run_threshold_theorem(ThresholdFamily(2, (4.0,)), [1000.0], [0.0], cfg["n"], RandomStream(104))
    row = rep.stats[0]
    eq_ks, diff_ks = row["equal_x0_j1_ks"], row["diff_j1_ks"]
    deg = run_threshold_theorem(ThresholdFamily(2, (0.0,)), [1000.0], [0.0], 20_000, RandomStream(105))
    degenerate = deg.stats[0]["diff_j1_maxabs"] == 0.0
    secs = _elapsed(t0)
    ok = eq_ks <= cfg["ks_final_max"] and diff_ks <= cfg["diff_final_max"] and degenerate and secs <= 60
    criterion(4, "threshold-dependent correlations and difference statistic", ok,
              f"equal KS {eq_ks:.4f}, diff KS {diff_ks:.4f}, lambda=0 exact {degenerate}, {secs:.1f}s")
    assert ok


def _mp_mixed_difference(lam, x, y, h=1e-6):
    # central mixed difference of an independent 60-digit H_lambda (cancellation costs ~35 digits)
    with mpmath.workdps(60):
        s = mpmath.sqrt(lam)

        def H(a, b):
            return mpmath.exp(-mpmath.exp(-a) * mpmath.ncdf(s / 2 + (b - a) / s)
                              - mpmath.exp(-b) * mpmath.ncdf(s / 2 + (a - b) / s))

        x, y, h = mpmath.mpf(x), mpmath.mpf(y), mpmath.mpf(h)
        return float((H(x + h, y + h) - H(x + h, y - h) - H(x - h, y + h) + H(x - h, y - h)) / (4 * h * h))


def test_ac05_husler_reiss(criterion):
    t0 = time.perf_counter()
    mass_err = 0.0
    for lam in (0.25, 1.0, 4.0):
        p = HuslerReissParams(lam)
        mass, _ = integrate.dblquad(lambda y, x: husler_reiss_pdf(p, x, y), -6, 40, -6, 40, epsabs=1e-10)
        mass_err = max(mass_err, abs(mass - 1.0))
    g = product_grid(np.linspace(-2, 3, 7), np.linspace(-2, 3, 7))
    fd_err = 0.0
    for lam in (0.25, 1.0, 4.0):
        p = HuslerReissParams(lam)
        fd = np.array([_mp_mixed_difference(lam, x, y) for x, y in g])
        fd_err = max(fd_err, float(np.max(np.abs(fd / husler_reiss_pdf(p, g[:, 0], g[:, 1]) - 1))))
    x, y = g[:, 0], g[:, 1]
    indep = float(np.max(np.abs(husler_reiss_cdf(HuslerReissParams(1e6), x, y) - gumbel_cdf(x) * gumbel_cdf(y))))
    dep_gap = np.abs(husler_reiss_cdf(HuslerReissParams(1e-6), x, y) - gumbel_cdf(np.minimum(x, y)))
    dep = float(dep_gap.max())
    xd = float(g[int(dep_gap.argmax()), 0])
    # on the diagonal the gap is exp(-e^-x) e^-x (2 Phi(sqrt(lam)/2) - 1) ~ 1.47e-4 max at lam = 1e-6
    predicted = math.exp(-math.exp(-xd)) * math.exp(-xd) * (2 * stats.norm.cdf(math.sqrt(1e-6) / 2) - 1)
    secs = _elapsed(t0)
    ok = mass_err <= 1e-4 and fd_err <= 1e-4 and indep <= 1e-4 and dep <= 1e-4 and secs <= 10
    criterion(5, "Husler-Reiss density, finite differences and limits", ok,
              f"mass err {mass_err:.1e}, fd rel err {fd_err:.1e}, lambda=1e6 gap {indep:.1e}, "
              f"lambda=1e-6 gap {dep:.2e} at x=y={xd:.3f} (analytic {predicted:.2e}), {secs:.1f}s")
    assert ok


def test_ac06_hr_maxima(criterion):
    t0 = time.perf_counter()
    cfg = defaults_for("hr-maxima")
    rep = run_hr_maxima(cfg["lam"], cfg["m"], cfg["n_block_list"], cfg["reps"], RandomStream(106),
                        x_grid=cfg["x_grid"], y_grid=cfg["y_grid"], rule=cfg["rule"], norming=cfg["norming"],
                        sup_final_max=cfg["sup_final_max"], marginal_final_max=cfg["marginal_final_max"])
    secs = _elapsed(t0)
    sups = "/".join(f"{r['grid_sup']:.4f}" for r in rep.stats)
    ok = rep.passed and secs <= 600
    criterion(6, "normalized maxima -> H_1 on the 7x7 grid", ok,
              f"grid sup {sups}, marginal {rep.stats[-1]['marginal_ks']:.4f}, {secs:.1f}s")
    assert ok


def test_ac07_density_convergence(criterion):
    t0 = time.perf_counter()
    cfg = defaults_for("hr-density")
    oracle = husler_reiss_pdf(HuslerReissParams(1.0), 0.0, 0.0)
    rep = run_hr_density(1.0, 2, cfg["n_block_list"], [0.0], [0.0], final_max=cfg["final_max"])
    errs = [r["abs_err(0,0)"] for r in rep.stats]
    secs = _elapsed(t0)
    ok = rep.passed and abs(oracle - H1_PDF_00) < 1e-12 and secs <= 30
    criterion(7, "finite-n density of maxima -> h_1(0,0)", ok,
              "abs err " + "/".join(f"{e:.5f}" for e in errs) + f", h_1(0,0)={oracle:.10f}, {secs:.1f}s")
    assert ok


def test_ac08_sojourn(criterion):
    t0 = time.perf_counter()
    cfg = defaults_for("sojourn")
    rep = run_sojourn(ProcessSpec(1, 1.0, (1.0,)), None, cfg["v_list"], cfg["x_grid"], cfg["reps"],
                      RandomStream(108), b_horizon=cfg["b_horizon"], b_step=cfg["b_step"],
                      b_reps=cfg["b_reps"], step_scaled=cfg["step_scaled"], anchor_tol=cfg["anchor_tol"])
    secs = _elapsed(t0)
    disc = "/".join(f"{r['sup_discrepancy']:.3f}" for r in rep.stats)
    anchors = "/".join(f"{r['anchor']:.3f}" for r in rep.stats)
    ok = rep.passed and secs <= 600
    criterion(8, "integrated sojourn tail -> B(x)", ok, f"anchor {anchors}, sup discrepancy {disc}, {secs:.1f}s")
    assert ok


def _random_walk_pickands(a, K, reps, seed):
    # independent route: Gaussian random walk with increments N(-a, 2a) for sqrt(2) W(t) - t
    gen = np.random.default_rng(seed)
    vals = np.empty(reps)
    for start in range(0, reps, 2000):
        n = min(2000, reps - start)
        walk = np.cumsum(gen.normal(-a, math.sqrt(2 * a), size=(n, K)), axis=1)
        M = walk.max(axis=1)
        vals[start:start + n] = np.where(M < 0, -np.expm1(np.minimum(M, 0.0)), 0.0)
    return vals.mean() / a, 1.96 * vals.std(ddof=1) / math.sqrt(reps) / a


def test_ac09_pickands(criterion):
    t0 = time.perf_counter()
    cfg = defaults_for("pickands")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        main = run_pickands(ProcessSpec(1, 1.0, (1.0,)), cfg["a"], cfg["horizon"], cfg["reps"], RandomStream(109),
                            levels=cfg["levels"], target=cfg["target"], target_tol=cfg["target_tol"])
        others = {(m, al): run_pickands(ProcessSpec(m, al, (1.0,)), cfg["a"], cfg["horizon"], 5000,
                                        RandomStream(110).substream(m, al), levels=1)
                  for m, al in ((2, 1.0), (1, 0.5))}
    rw, rw_hw = _random_walk_pickands(cfg["a"], int(round(cfg["horizon"] / cfg["a"])), cfg["reps"], 111)
    coarse = main.stats[0]
    oracle_ok = abs(coarse["H"] - rw) <= coarse["half_width"] + rw_hw and abs(rw - SPITZER_004) <= rw_hw
    H, hw = main.stats[0]["H_extrapolated"], main.stats[0]["H_extrapolated_half_width"]
    positive = main.verdicts["positive"] and all(o.verdicts["positive"] for o in others.values())
    secs = _elapsed(t0)
    ok = main.verdicts["target"] and positive and oracle_ok and secs <= 900
    lows = ", ".join(f"(m,alpha)={k} H={o.stats[0]['H']:.3f}+-{o.stats[0]['half_width']:.3f}"
                     for k, o in others.items())
    criterion(9, "Pickands constant", ok,
              f"extrapolated {H:.3f}+-{hw:.3f}; a=0.04 Cholesky {coarse['H']:.3f} vs random walk {rw:.3f}"
              f" vs exact {SPITZER_004:.3f}; {lows}; {secs:.1f}s")
    assert ok


def test_ac10_sup_tail(criterion):
    t0 = time.perf_counter()
    cfg = defaults_for("sup-tail")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        rep = run_sup_tail(ProcessSpec(1, 1.0, (1.0,)), cfg["T"], cfg["v_list"], cfg["reps"], RandomStream(112),
                           step_scaled=cfg["step_scaled"], floor_events=cfg["floor_events"],
                           pickands_reps=cfg["pickands_reps"], pickands_horizon=cfg["pickands_horizon"])
    secs = _elapsed(t0)
    ratios = "/".join(f"{r['ratio']:.3f}+-{r['ratio_half_width']:.3f}" for r in rep.stats)
    ok = rep.verdicts["ratio_trend"] and rep.verdicts["floor"] and secs <= 900
    criterion(10, "supremum tail ratio trend", ok, f"ratios {ratios}, {secs:.1f}s")
    assert ok


def test_ac11_log_chi_aggregation(criterion):
    t0 = time.perf_counter()
    cfg = defaults_for("logchi-tail")
    results, detail = {}, []
    for m, log_u in ((1, np.arange(3.0, 6.51, 0.5)), (3, np.arange(4.0, 7.51, 0.5))):
        model = LogChiModel(tuple(cfg["sigma"]), tuple(cfg["mu"]), cfg["p"], classical_model(m, cfg["rho"]))
        rep = run_logchi_tail(model, np.exp(log_u), cfg["reps"], RandomStream(113).substream(m),
                              floor_events=cfg["floor_events"], mills_log_u=cfg["mills_log_u"],
                              mills_tol=cfg["mills_tol"])
        results[m] = rep
        last = [r for r in rep.stats if r["reachable"]][-1]
        detail.append(f"m={m} ln u={last['log_u']:.1f}: ratio {last['ratio']:.3f} "
                      f"[{last['ratio_lo']:.3f},{last['ratio_hi']:.3f}], max/sum {last['max_sum_ratio']:.3f} "
                      f"[{last['max_sum_lo']:.3f},{last['max_sum_hi']:.3f}]")
    mills = results[1].stats[0]["mills_ratio"]
    secs = _elapsed(t0)
    mills_ok = results[1].verdicts["mills_check"]
    ratio_ok = all(r.verdicts["ratio_within_ci"] for r in results.values())
    equiv_ok = all(r.verdicts["max_sum_within_ci"] for r in results.values())
    ok = mills_ok and ratio_ok and equiv_ok and secs <= 600
    criterion(11, "log-chi aggregate tail", ok,
              f"Mills ratio {mills:.4f} ({mills_ok}); formula ratio in CI {ratio_ok}; max/sum in CI {equiv_ok}; "
              + "; ".join(detail) + f"; {secs:.1f}s")
    assert ok


DETERMINISM_RUNS = {
    "simulate": ["--n", "200", "--mode", "equal"],
    "gaussian-approx": ["--v-list", "10,100", "--n", "2000"],
    "threshold-clt": ["--v-list", "100,1000", "--n", "2000"],
    "hr-maxima": ["--n-block-list", "100,200", "--reps", "500"],
    "hr-density": ["--n-block-list", "1000,100000"],
    "sojourn": ["--reps", "200", "--b-reps", "200"],
    "sup-tail": ["--reps", "1000", "--v-list", "8,10", "--pickands-reps", "500"],
    "pickands": ["--reps", "500", "--levels", "2"],
    "logchi-tail": ["--reps", "100000", "--log-u-list", "1,2"],
    "special": ["--fn", "chi2_tail", "--m", "3", "--v", "12"],
}


def test_ac12_determinism(criterion, tmp_path):
    t0 = time.perf_counter()
    mismatched = []
    for sub, extra in DETERMINISM_RUNS.items():
        docs = []
        for rep in range(2):
            out = tmp_path / f"{sub}-{rep}.json"
            parse_and_dispatch([sub, *extra, "--seed", "5", "--shards", "2", "--out-json", str(out),
                                "--out-csv", str(tmp_path / f"{sub}-{rep}.csv")])
            d = json.loads(out.read_text())
            d.pop("runtime", None)
            docs.append(json.dumps(d, sort_keys=True))
        if docs[0] != docs[1]:
            mismatched.append(sub)
    secs = _elapsed(t0)
    ok = not mismatched and secs <= 60
    criterion(12, "byte-identical reports for equal (config, seed, shards)", ok,
              f"{len(DETERMINISM_RUNS)} subcommands, mismatched {mismatched or 'none'}, {secs:.1f}s")
    assert ok
