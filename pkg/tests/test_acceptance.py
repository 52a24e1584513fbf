"""Acceptance criteria, one test each. Tolerances are pinned here rather than
read from the configs, so editing a config cannot loosen a criterion.

Each test appends one ``PASS/FAIL criterion k: ...`` line, printed in the
terminal summary.
"""

import math
from pathlib import Path

import mpmath
import numpy as np
import pytest
from scipy import special

from conftest import CRITERIA_LINES
from oracles import FE_GAUSS_MEAN, FE_GAUSS_VAR, FE_RAD_MEAN, FE_RAD_VAR, RHO_03, even_subgraph_counts
from spinlab.config import load_config
from spinlab.density import FisherSet, fisher_information, gaussian_density, rho_L, second_fisher
from spinlab.ensembles import DisorderSpec, PriorSpec, make_rng, sample_wigner
from spinlab.experiments import run_experiment
from spinlab.free_energy import predict_free_energy_fluctuation
from spinlab.likelihood import predict_loglr
from spinlab.multigraph import (
    EdgeWeightSample, ExpansionMoments, cutoff_sum, expansion_sum, free_energy_moments, hermite_weights,
    loglr_moments, multicycle_table, rho_prediction, second_moment_formula, sign_average, table_weights,
)
from spinlab.stats import ks_pvalue, ks_statistic, second_moment_estimate

pytestmark = pytest.mark.acceptance

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
TRIALS_MIN = 500
Z_TOL, FINITE_SIZE, VAR_TOL, KS_P = 3.0, 0.03, 0.35, 0.001


def record(k, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {k}: {detail}"
    CRITERIA_LINES.append(line)
    print(line)
    return ok


def clt_checks(x, mean_pred, var_pred):
    """Mean band, variance ratio band and KS against N(empirical mean, V_pred)."""
    n = x.size
    mean, var = float(x.mean()), float(x.var(ddof=1))
    band = Z_TOL * math.sqrt(var / n) + FINITE_SIZE
    sd = math.sqrt(var_pred)
    p = ks_pvalue(ks_statistic(x, lambda t: special.ndtr((t - mean) / sd)), n)
    checks = {"mean": abs(mean - mean_pred) <= band, "variance": abs(var / var_pred - 1) <= VAR_TOL,
              "ks": p >= KS_P}
    detail = (f"mean {mean:.6f} vs {mean_pred:.6f} (band {band:.4f}), var {var:.6f} vs {var_pred:.6f} "
              f"(ratio {var / var_pred:.3f}), KS p {p:.3g}")
    return checks, detail


def fluctuation_samples(config):
    cfg = load_config(CONFIGS / config)
    res = run_experiment(cfg, threads=1)
    x = np.array([row[5] for row in res.rows])
    assert x.size >= TRIALS_MIN
    return cfg, x


@pytest.fixture(scope="module")
def loglr_run():
    cfg = load_config(CONFIGS / "loglr_gaussian.json")
    res = run_experiment(cfg, threads=1)
    out = {h: np.array([r[5] for r in res.rows if r[4] == h]) for h in ("H0", "H1")}
    assert out["H0"].size >= TRIALS_MIN and out["H1"].size >= TRIALS_MIN
    return cfg, out


def test_criterion_1_free_energy_clt_gaussian():
    cfg, x = fluctuation_samples("free_energy_gaussian.json")
    pred = predict_free_energy_fluctuation(0.5, cfg.disorder.w_4, cfg.prior.m_4)
    pred_ok = abs(pred.mean - FE_GAUSS_MEAN) <= 1e-12 and abs(pred.variance - FE_GAUSS_VAR) <= 1e-12
    checks, detail = clt_checks(x, pred.mean, pred.variance)
    ok = pred_ok and all(checks.values())
    assert record(1, ok, f"{x.size} trials, {detail}, checks {checks}")


def test_criterion_2_disorder_universality():
    cfg, x = fluctuation_samples("free_energy_rademacher.json")
    pred = predict_free_energy_fluctuation(0.5, cfg.disorder.w_4, cfg.prior.m_4)
    gauss = predict_free_energy_fluctuation(0.5, 3.0, cfg.prior.m_4)
    pred_ok = abs(pred.mean - FE_RAD_MEAN) <= 1e-12 and abs(pred.variance - FE_RAD_VAR) <= 1e-12
    checks, detail = clt_checks(x, pred.mean, pred.variance)
    var = float(x.var(ddof=1))
    checks["closer_than_kappa0"] = abs(var - pred.variance) < abs(var - gauss.variance)
    ok = pred_ok and all(checks.values())
    assert record(2, ok, f"{x.size} trials, {detail}, kappa_4=0 var {gauss.variance:.6f}, checks {checks}")


def test_criterion_3_loglr_clt_h0(loglr_run):
    cfg, samples = loglr_run
    x = samples["H0"]
    pred = predict_loglr(0.3, FisherSet(1.0, 0.5, 2.0))["H0"]
    pred_ok = abs(pred.mean + RHO_03) <= 1e-12 and abs(pred.variance - 2 * RHO_03) <= 1e-12
    checks, detail = clt_checks(x, pred.mean, pred.variance)
    lik = np.exp(x)
    se = lik.std(ddof=1) / math.sqrt(lik.size)
    checks["unit_mean"] = abs(lik.mean() - 1.0) <= 4 * se
    ok = pred_ok and all(checks.values())
    assert record(3, ok, f"{x.size} trials, {detail}, mean L {lik.mean():.4f} +- {se:.4f}, checks {checks}")


def test_criterion_4_le_cam_shift(loglr_run):
    cfg, samples = loglr_run
    x0, x1 = samples["H0"], samples["H1"]
    mean1 = float(x1.mean())
    band = Z_TOL * math.sqrt(x1.var(ddof=1) / x1.size) + FINITE_SIZE
    shift = mean1 - float(x0.mean())
    checks = {"h1_mean": abs(mean1 - RHO_03) <= band, "shift": abs(shift - 2 * RHO_03) <= 0.25 * 2 * RHO_03}
    ok = all(checks.values())
    assert record(4, ok, f"H1 mean {mean1:.6f} vs {RHO_03:.6f} (band {band:.4f}), shift {shift:.6f} vs "
                         f"{2 * RHO_03:.6f} (+-25%), checks {checks}")


def test_criterion_5_second_moment():
    base = load_config(CONFIGS / "second_moment.json")
    assert base.params["N"] == 2000 and base.params["M"] == 200_000
    ref = 1 / math.sqrt(0.5)
    rad = second_moment_estimate(PriorSpec("rademacher"), 0.5, 2000, 200_000, base.seed)
    sph = second_moment_estimate(PriorSpec("gaussian", normalized=True), 0.5, 2000, 200_000, base.seed + 1,
                                 mode="normalized")
    errs = (rad.estimate / ref - 1, sph.estimate / ref - 1)
    ok = abs(rad.reference - 1.41421356) < 1e-8 and all(abs(e) <= 0.03 for e in errs)
    assert record(5, ok, f"rademacher {rad.estimate:.5f} ({errs[0]:+.4f}), normalized gaussian "
                         f"{sph.estimate:.5f} ({errs[1]:+.4f}) vs {ref:.5f}, tol 3%")


def test_criterion_6_expansion_identity():
    seed = load_config(CONFIGS / "graph_identities.json").seed
    prior = PriorSpec("rademacher", max_degree=32)
    worst = {}
    for N in (2, 3, 4):
        rng = make_rng(seed, N)
        errs = []
        for _ in range(20):
            w = EdgeWeightSample.random(N, rng)
            y = sign_average(N, w)
            errs.append(abs(expansion_sum(N, w, prior) - y) / (1 + abs(y)))
        worst[N] = max(errs)
    ok = all(v <= 1e-10 for v in worst.values())
    assert record(6, ok, "max scaled error " + ", ".join(f"N={n}: {v:.2e}" for n, v in worst.items())
                  + " (tol 1e-10)")


def test_criterion_7_fisher_table():
    g = gaussian_density()
    fs = FisherSet(fisher_information(g), fisher_information(g.scaled(2.0)), second_fisher(g))
    rho = rho_L(0.5, fs)
    target = -0.25 * math.log(0.5)
    ok = (abs(fs.F_p - 1) <= 1e-8 and abs(fs.F_d - 0.5) <= 1e-8 and abs(fs.G_p - 2) <= 1e-7
          and abs(rho - target) <= 1e-9)
    assert record(7, ok, f"F_p {fs.F_p:.12f}, F_d {fs.F_d:.12f}, G_p {fs.G_p:.10f}, "
                         f"rho_L(0.5) {rho:.12f} vs {target:.12f}")


def test_criterion_8_cutoff_scan():
    first, bad, counts_ok = {}, [], True
    for N in (5, 6, 7):
        counts = even_subgraph_counts(N)
        counts_ok &= counts == multicycle_table(N, 1).size_counts()
        for alpha in (0.3, 0.5):
            # sizes above N(N-1)/2 leave an empty sum, so this covers every s >= 4
            for s in range(4, N * (N - 1) // 2 + 2):
                r = cutoff_sum(N, alpha, s)
                oracle = math.fsum(c * (alpha / N) ** m for m, c in counts.items() if m >= s)
                counts_ok &= abs(r.total - oracle) <= 1e-15 * max(oracle, 1e-300)
                if r.holds:
                    first.setdefault((N, alpha), s)
                else:
                    bad.append((N, alpha, s))
    ok = counts_ok and not bad
    report = ", ".join(f"N={n} a={a}: first s {s}" for (n, a), s in first.items())
    assert record(8, ok, f"{report}; violations {bad}; count oracle {'agrees' if counts_ok else 'DISAGREES'}")


def test_criterion_9_rho_decomposition():
    rng = make_rng(9)
    worst = 0.0
    for _ in range(100):
        F = float(rng.uniform(0.0, 0.95))
        G, Fd = float(rng.uniform(0, 2)), float(rng.uniform(0, 2))
        r = rho_prediction(ExpansionMoments(F, G, Fd))
        with mpmath.workdps(40):
            direct = float(-(mpmath.log1p(-F) + F + mpmath.mpf(F) ** 2 / 2) / 4 + mpmath.mpf(G) / 4
                           + mpmath.mpf(Fd) / 2)
        for value in (r.rho_1 + r.rho_2 + r.rho_3, direct):
            worst = max(worst, abs(r.rho - value) / abs(r.rho))
    inst = 0.0
    for beta in (0.1, 0.3, 0.5, 0.8, 0.95):
        for w_4 in (1.0, 3.0, 4.2):
            vf = predict_free_energy_fluctuation(beta, w_4, 1.0).variance
            inst = max(inst, abs(rho_prediction(free_energy_moments(beta, w_4)).rho - vf / 2) / (vf / 2))
    fs = FisherSet(1.0966227112321, 0.45, 2.1646464674223)
    for lam in (0.05, 0.3, 0.5, 0.9):
        target = rho_L(lam, fs)
        inst = max(inst, abs(rho_prediction(loglr_moments(lam, fs)).rho - target) / target)
    ok = worst <= 1e-12 and inst <= 1e-12
    assert record(9, ok, f"100 random sets max rel err {worst:.2e}, instantiations max rel err {inst:.2e} "
                         "(tol 1e-12)")


def test_criterion_10_orthogonality_suite():
    N, beta, draws, chunk = 4, 0.5, 100_000, 10_000
    table = multicycle_table(N, 4, False, max_size=6)
    G = len(table)
    S = np.zeros((G, G))
    S2 = np.zeros((G, G))
    rng = make_rng(10)
    for start in range(0, draws, chunk):
        Z = np.array([table_weights(table, hermite_weights(sample_wigner(DisorderSpec(), N, rng), beta))
                      for _ in range(chunk)])
        S += Z.T @ Z
        S2 += (Z * Z).T @ (Z * Z)
    mean = S / draws
    se = np.sqrt(np.maximum(S2 / draws - mean**2, 0.0) / (draws - 1))
    expect = np.zeros((G, G))
    mom = free_energy_moments(beta)
    np.fill_diagonal(expect, [second_moment_formula(table.graph(r), mom) for r in range(G)])
    # E[Z(g)] = 0 for nonempty g, so the raw mixed moment is the covariance
    dev = np.abs(mean - expect)
    within = dev <= 4 * se + 1e-15 * np.abs(expect)
    off = ~np.eye(G, dtype=bool)
    bad_off = int(np.count_nonzero(~within & off) // 2)
    bad_diag = int(np.count_nonzero(~np.diag(within)))
    z = np.divide(dev, se, out=np.zeros_like(dev), where=se > 0)
    ok = bad_off == 0 and bad_diag == 0
    # diagnostic only: outliers driven by heavy-tailed P^(4) products
    has4 = np.array([any(m == 4 for _, _, m in table.graph(r).edges) for r in range(G)])
    outl = np.argwhere(~within)
    with4 = int(sum(has4[a] or has4[b] for a, b in outl if a <= b))
    assert record(10, ok, f"{G} multicycles, {G * (G - 1) // 2} distinct pairs: {bad_off} outside 4 stderr, "
                          f"max |z| {z[off].max():.2f}; diagonal {bad_diag} outside, max |z| "
                          f"{np.diag(z).max():.2f}; {with4} of {bad_off + bad_diag} outliers involve a "
                          "multiplicity-4 edge")
