import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import RHO_03, brute_log_lr_gaussian, brute_log_lr_logistic, brute_logz
from spinlab.density import FisherSet, from_logpdf, gaussian_density, logistic_density
from spinlab.ensembles import DisorderSpec, PriorSpec, derive_seed, disorder_from_density, make_rng, \
    sample_spike, sample_wigner
from spinlab.errors import ConfigError, NumericError
from spinlab.likelihood import (
    NoiseModel, SupercriticalWarning, log_lr, predict_loglr, sample_data_matrix, spike_log_ratio,
    truncated_expansion_lr,
)

GAUSS = NoiseModel.from_disorder(DisorderSpec("gaussian"))
RAD = PriorSpec("rademacher")


def test_lambda_zero_is_exactly_zero():
    W = sample_wigner(DisorderSpec(), 6, 1)
    assert log_lr(W, 0.0, GAUSS, RAD).logL == 0.0
    assert log_lr(W, 0.0, GAUSS, PriorSpec("gaussian"), mode="mc", M=10).logL == 0.0


def test_two_nodes_closed_form():
    lam = 0.3
    W = sample_wigner(DisorderSpec(), 2, 8)
    # a = sqrt(lam/N); diagonal factor exp(sum_k (a sqrt(N) W_kk - a^2/2) / w_2)
    a = math.sqrt(lam / 2)
    diag = np.exp(np.sum(a * math.sqrt(2) * np.diag(W) - a * a / 2) / 2.0)
    expect = math.log(math.exp(-lam / 4) * diag * math.cosh(math.sqrt(lam) * W[0, 1]))
    got = log_lr(W, lam, GAUSS, RAD).logL
    assert got == pytest.approx(expect, rel=1e-12)
    assert got == pytest.approx(brute_log_lr_gaussian(W, lam), rel=1e-12)


@pytest.mark.parametrize("N", [3, 8])
def test_exact_matches_brute_force_gaussian(N):
    W = sample_wigner(DisorderSpec(), N, 30 + N)
    assert log_lr(W, 0.4, GAUSS, RAD).logL == pytest.approx(brute_log_lr_gaussian(W, 0.4), rel=1e-10)


def test_exact_matches_brute_force_logistic():
    noise = NoiseModel.from_disorder(disorder_from_density(logistic_density()))
    W = sample_wigner(DisorderSpec(), 7, 3)
    assert log_lr(W, 0.5, noise, RAD).logL == pytest.approx(brute_log_lr_logistic(W, 0.5), rel=1e-10)


@given(st.integers(2, 6), st.floats(0.0, 0.95), st.integers(0, 2**32))
def test_exact_property(N, lam, seed):
    W = sample_wigner(DisorderSpec(), N, seed)
    assert log_lr(W, lam, GAUSS, RAD).logL == pytest.approx(brute_log_lr_gaussian(W, lam), rel=1e-9, abs=1e-12)


def test_gaussian_reduction_closed_form():
    N, lam = 10, 0.3
    W = sample_wigner(DisorderSpec(), N, 12)
    a = math.sqrt(lam / N)
    diag = np.sum(a * math.sqrt(N) * np.diag(W) - a * a / 2) / 2.0
    closed = diag - lam * (N - 1) / 4 + brute_logz(W, math.sqrt(lam))
    assert log_lr(W, lam, GAUSS, RAD).logL == pytest.approx(closed, rel=1e-9)


def test_exact_matches_mc_n12():
    W = sample_wigner(DisorderSpec(), 12, 99)
    exact = log_lr(W, 0.3, GAUSS, RAD).logL
    mc = log_lr(W, 0.3, GAUSS, RAD, mode="mc", M=1_000_000, seed=4)
    assert abs(mc.logL - exact) < 4 * mc.stderr
    assert mc.method == "mc" and mc.stderr > 0


def test_sample_fields():
    W = sample_wigner(DisorderSpec(), 5, 1)
    s = log_lr(W, 0.2, GAUSS, RAD, hypothesis="H1")
    assert (s.method, s.stderr, s.hypothesis, s.prior_mode, s.N) == ("exact", None, "H1", "iid", 5)
    assert math.isfinite(s.logL)


def test_prior_modes_agree_for_rademacher():
    W = sample_wigner(DisorderSpec(), 9, 2)
    norm = PriorSpec("rademacher", normalized=True)
    assert log_lr(W, 0.4, GAUSS, RAD).logL == log_lr(W, 0.4, GAUSS, norm).logL
    a = log_lr(W, 0.4, GAUSS, RAD, mode="mc", M=5000, seed=1)
    b = log_lr(W, 0.4, GAUSS, norm, mode="mc", M=5000, seed=1)
    assert a.logL == b.logL


def test_spike_log_ratio_oracle():
    N, lam = 5, 0.6
    W = sample_wigner(DisorderSpec(), N, 5)
    x = sample_spike(PriorSpec("gaussian"), N, 6)
    p, pd = gaussian_density(), gaussian_density(2.0)
    total = 0.0
    for i in range(N):
        for j in range(i, N):
            dens = pd if i == j else p
            w = math.sqrt(N) * W[i, j]
            total += float(dens.logpdf(w - math.sqrt(lam * N) * x[i] * x[j]) - dens.logpdf(w))
    assert spike_log_ratio(W, lam, x, GAUSS)[0] == pytest.approx(total, rel=1e-12)


def test_mode_checks():
    W = sample_wigner(DisorderSpec(), 4, 1)
    with pytest.raises(ConfigError):
        log_lr(W, 0.2, GAUSS, PriorSpec("gaussian"))
    with pytest.raises(ConfigError):
        log_lr(W, 0.2, GAUSS, RAD, mode="mc", M=0)
    with pytest.raises(ConfigError):
        log_lr(W, 0.2, GAUSS, RAD, mode="fast")
    with pytest.raises(ConfigError):
        log_lr(W, -0.1, GAUSS, RAD)


def test_supercritical_warns():
    W = sample_wigner(DisorderSpec(), 4, 1)
    with pytest.warns(SupercriticalWarning):
        log_lr(W, 1.2, GAUSS, RAD)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_underflow_names_entry():
    p = from_logpdf("clipped", lambda x: np.where(np.abs(x) < 3.0, -0.5 * x * x, -np.inf))
    noise = NoiseModel(p, p)
    W = np.zeros((3, 3))
    W[0, 2] = W[2, 0] = 2.9 / math.sqrt(3)
    with pytest.raises(NumericError, match=r"\(0, 2\)"):
        log_lr(W, 0.9, noise, RAD)


def test_data_matrix_hypotheses():
    dis = DisorderSpec()
    W0 = sample_data_matrix(0.5, dis, RAD, 30, 3, "H0")
    W1 = sample_data_matrix(0.5, dis, RAD, 30, 3, "H1")
    x = sample_spike(RAD, 30, derive_seed(3, 1))
    assert np.allclose(W1 - W0, math.sqrt(0.5) * np.outer(x, x), rtol=0, atol=1e-15)
    assert np.allclose(np.diag(W1 - W0), math.sqrt(0.5) / 30, rtol=0, atol=1e-15)
    assert np.array_equal(sample_data_matrix(0.0, dis, RAD, 30, 3, "H1"), W0)
    assert np.array_equal(W0, sample_wigner(dis, 30, derive_seed(3, 0)))
    with pytest.raises(ConfigError):
        sample_data_matrix(0.5, dis, RAD, 30, 3, "H2")


def test_bbp_top_eigenvalue():
    wins = 0
    for seed in range(40):
        M = sample_data_matrix(4.0, DisorderSpec(), PriorSpec("gaussian", normalized=True), 200, seed, "H1")
        wins += np.linalg.eigvalsh(M)[-1] > 2.1
    assert wins >= 38


def test_truncated_expansion():
    N, lam = 50, 0.2
    W = sample_wigner(DisorderSpec(), N, 21)
    x = sample_spike(PriorSpec("gaussian"), N, 22)
    exact = math.exp(spike_log_ratio(W, lam, x, GAUSS)[0])
    approx = truncated_expansion_lr(W, lam, x, GAUSS)
    assert abs(approx - exact) <= 1e-3 * abs(exact)
    assert truncated_expansion_lr(W, 0.0, x, GAUSS) == 1.0


def test_truncated_expansion_zeroed_entry():
    N = 6
    W = sample_wigner(DisorderSpec(), N, 2)
    x = sample_spike(PriorSpec("gaussian"), N, 3)
    x[0] = 0.0
    V = W.copy()
    V[0, 1:] = V[1:, 0] = make_rng(9).standard_normal(N - 1)
    V[0, 0] = 0.37
    assert truncated_expansion_lr(W, 0.3, x, GAUSS) == pytest.approx(truncated_expansion_lr(V, 0.3, x, GAUSS),
                                                                     rel=1e-14)


def test_predictions():
    pred = predict_loglr(0.3, FisherSet(1.0, 0.5, 2.0))
    assert pred["H0"].mean == pytest.approx(-RHO_03, abs=1e-12)
    assert pred["H0"].variance == pytest.approx(2 * RHO_03, abs=1e-12)
    assert pred["H1"].mean - pred["H0"].mean == pytest.approx(pred["H0"].variance, abs=1e-15)
    zero = predict_loglr(0.0, FisherSet(1.0, 0.5, 2.0))
    assert (zero["H0"].mean, zero["H0"].variance, zero["H1"].mean) == (0.0, 0.0, 0.0)


def test_unit_mean_under_h0():
    N, lam, trials = 8, 0.4, 600
    L = np.array([math.exp(log_lr(sample_data_matrix(lam, DisorderSpec(), RAD, N, derive_seed(5, t)),
                                  lam, GAUSS, RAD).logL) for t in range(trials)])
    assert abs(L.mean() - 1.0) < 4 * L.std(ddof=1) / math.sqrt(trials)


def test_detectability_direction():
    N, lam = 8, 0.5
    diffs = []
    for t in range(100):
        s = derive_seed(6, t)
        W1 = sample_data_matrix(lam, DisorderSpec(), RAD, N, s, "H1")
        W0 = sample_data_matrix(lam, DisorderSpec(), RAD, N, s, "H0")
        diffs.append(log_lr(W1, lam, GAUSS, RAD).logL - log_lr(W0, lam, GAUSS, RAD).logL)
    assert np.mean(diffs) > 0


def test_noise_fisher_cached():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        fs = GAUSS.fisher
    assert fs.F_p == pytest.approx(1.0, abs=1e-8) and fs.F_d == pytest.approx(0.5, abs=1e-8)
    assert GAUSS.fisher is fs
