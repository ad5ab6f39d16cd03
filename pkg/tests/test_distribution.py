import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, stats
from scipy.special import erfcx

from mlfpp import (Admissibility, DomainError, MlfEvalConfig, MlfParams, QuantileSet, cdf,
                   check_quantile_admissibility, dF_dbeta, dF_dsigma, log_pdf, pdf, quantile,
                   sample, sf)

from conftest import ml_reference

EXACT = MlfEvalConfig()
betas = st.floats(0.2, 1.0)
probs = st.floats(1e-6, 1 - 1e-6)


def test_params_validation():
    with pytest.raises(DomainError):
        MlfParams(0.0, 1.0)
    with pytest.raises(DomainError):
        MlfParams(1.01, 1.0)
    with pytest.raises(DomainError):
        MlfParams(0.5, -1.0)
    with pytest.raises(DomainError):
        QuantileSet((0.5,))
    with pytest.raises(DomainError):
        QuantileSet((0.5, 0.4))
    with pytest.raises(DomainError):
        QuantileSet((0.0, 0.4))


def test_cdf_examples():
    assert cdf(MlfParams(1.0, 2.0), 2.0) == pytest.approx(1 - math.exp(-1), rel=1e-14)
    assert cdf(MlfParams(0.9, 5.0), 0.0) == 0.0
    assert cdf(MlfParams(0.9, 5.0), -3.0) == 0.0
    assert cdf(MlfParams(0.5, 1.0), 1.0) == pytest.approx(1 - math.e * math.erfc(1), rel=1e-12)
    with pytest.raises(DomainError):
        cdf(MlfParams(0.9, 5.0), float("inf"))


@pytest.mark.parametrize("config", [None, EXACT], ids=["table", "exact"])
@pytest.mark.parametrize("beta", [0.25, 0.55, 0.8, 0.97])
def test_cdf_against_extended_precision(beta, config):
    p = MlfParams(beta, 3.0)
    for u in [0.05, 0.7, 1.3, 4.0, 20.0]:
        x = 3.0 * u
        g = ml_reference(beta, -(mp.mpf(u) ** beta))
        assert cdf(p, x, config) == pytest.approx(float(1 - g), rel=1e-10)
        assert sf(p, x, config) == pytest.approx(float(g), rel=1e-10)


def test_half_order_closed_form_over_range():
    p = MlfParams(0.5, 1.0)
    x = np.geomspace(0.01, 100, 200)
    np.testing.assert_allclose(cdf(p, x), 1 - erfcx(np.sqrt(x)), rtol=1e-10, atol=0)


def test_pdf_examples():
    assert pdf(MlfParams(1.0, 2.0), 2.0) == pytest.approx(0.5 * math.exp(-1), rel=1e-13)
    with pytest.raises(DomainError):
        pdf(MlfParams(0.8, 1.0), 0.0)


@pytest.mark.parametrize("x", [0.5, 1.0, 5.0])
def test_pdf_is_derivative_of_cdf(x):
    p = MlfParams(0.8, 1.0)
    h = 1e-5 * x
    fd = (cdf(p, x + h) - cdf(p, x - h)) / (2 * h)
    assert pdf(p, x) == pytest.approx(fd, rel=1e-6)


def test_pdf_integrates_to_one():
    p = MlfParams(0.6, 3.0)
    # substitution x = exp(t) to resolve the singularity at 0 and the heavy tail
    body, _ = integrate.quad(lambda t: pdf(p, math.exp(t)) * math.exp(t), -30, math.log(1e6),
                             limit=400, epsabs=1e-12)
    assert body + sf(p, 1e6) + cdf(p, math.exp(-30)) == pytest.approx(1.0, abs=1e-6)


def test_log_pdf_deep_tail_is_finite():
    p = MlfParams(0.7, 1.0)
    lp = log_pdf(p, 1e300)
    assert math.isfinite(lp)
    # tail density ~ beta x^(-beta-1) / Gamma(1-beta)
    ref = math.log(0.7) - 1.7 * math.log(1e300) - math.lgamma(0.3)
    assert lp == pytest.approx(ref, rel=1e-6)
    assert math.isfinite(log_pdf(MlfParams(1.0, 1.0), 1e5))
    assert log_pdf(MlfParams(1.0, 1.0), 1e5) == pytest.approx(-1e5)


def test_quantile_examples():
    assert quantile(MlfParams(1.0, 1.0), 0.5) == pytest.approx(math.log(2), rel=1e-13)
    assert quantile(MlfParams(1.0, 100.0), 0.75) == pytest.approx(100 * math.log(4), rel=1e-13)
    p = MlfParams(0.7, 1.0)
    lo, hi = 1e-6, 1e6
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        if cdf(p, mid, EXACT) < 0.9:
            lo = mid
        else:
            hi = mid
    assert quantile(p, 0.9) == pytest.approx(math.sqrt(lo * hi), rel=1e-10)
    with pytest.raises(DomainError):
        quantile(p, 1.0)


@pytest.mark.parametrize("beta", np.round(np.arange(0.6, 1.0001, 0.05), 2))
def test_cdf_quantile_identity(beta):
    a = np.round(np.arange(0.01, 0.995, 0.01), 2)
    for s in (1.0, 100.0):
        p = MlfParams(beta, s)
        np.testing.assert_allclose(cdf(p, quantile(p, a)), a, atol=1e-10, rtol=0)


@given(betas, st.floats(1e-3, 1e3), probs, st.floats(1e-3, 1e3))
def test_quantile_scale_equivariance(beta, sigma, alpha, c):
    a = quantile(MlfParams(beta, c * sigma), alpha)
    b = c * quantile(MlfParams(beta, sigma), alpha)
    assert a == pytest.approx(b, rel=1e-10)


@given(betas, st.floats(-8, 8))
def test_quantile_inverts_cdf(beta, logx):
    p = MlfParams(beta, 1.0)
    x = math.exp(logx)
    a = cdf(p, x)
    if not (1e-12 < a < 1 - 1e-9):
        return
    # rounding of a itself moves the exact inverse by about eps / pdf(x)
    slack = 4 * np.finfo(float).eps / pdf(p, x)
    assert quantile(p, a) == pytest.approx(x, rel=1e-8, abs=slack)


@given(betas, st.floats(-10, 12))
def test_table_matches_exact_kernel(beta, logx):
    p = MlfParams(beta, 1.0)
    x = math.exp(logx)
    assert cdf(p, x) == pytest.approx(cdf(p, x, EXACT), rel=1e-10, abs=1e-300)
    assert sf(p, x) == pytest.approx(sf(p, x, EXACT), rel=1e-10)
    assert log_pdf(p, x) == pytest.approx(log_pdf(p, x, EXACT), rel=1e-9, abs=1e-9)


@given(betas, st.floats(-6, 6), st.floats(-6, 6))
def test_cdf_monotone(beta, a, b):
    p = MlfParams(beta, 1.0)
    lo, hi = sorted((math.exp(a), math.exp(b)))
    assert cdf(p, lo) <= cdf(p, hi)


def test_exponential_reductions():
    p = MlfParams(1.0, 7.0)
    x = np.array([0.1, 1.0, 10.0, 50.0])
    np.testing.assert_allclose(cdf(p, x), -np.expm1(-x / 7), rtol=1e-13)
    np.testing.assert_allclose(pdf(p, x), np.exp(-x / 7) / 7, rtol=1e-13)
    np.testing.assert_allclose(quantile(p, [0.1, 0.9]), -7 * np.log1p(-np.array([0.1, 0.9])),
                               rtol=1e-13)
    u = sample(p, 5, 3)
    assert np.all(u > 0)


@pytest.mark.parametrize("beta", [0.5, 0.8, 0.95])
def test_heavy_tail(beta):
    p = MlfParams(beta, 2.0)
    x = quantile(p, 0.9999) * 100
    ratio = sf(p, x) / ((x / 2.0) ** -beta / math.gamma(1 - beta))
    assert abs(ratio - 1) < 0.05


def test_sample_determinism_and_mean():
    p = MlfParams(0.8, 2.0)
    np.testing.assert_array_equal(sample(p, 5, 11), sample(p, 5, 11))
    assert not np.array_equal(sample(p, 5, 11), sample(p, 5, 12))
    x = sample(MlfParams(1.0, 5.0), 100_000, 1)
    assert abs(x.mean() - 5.0) < 3 * 5.0 / math.sqrt(x.size)


@pytest.mark.parametrize("beta", [0.3, 0.8, 0.99])
def test_sample_ks(beta):
    p = MlfParams(beta, 1.0)
    x = sample(p, 100_000, 7)
    res = stats.kstest(x, lambda v: cdf(p, v))
    assert res.pvalue > 0.01


def test_sample_rejects_bad_n():
    with pytest.raises(DomainError):
        sample(MlfParams(0.5, 1.0), 0, 1)


def test_dF_dsigma_examples():
    assert dF_dsigma(MlfParams(1.0, 1.0), 1.0) == pytest.approx(-math.exp(-1), rel=1e-13)
    p = MlfParams(0.8, 2.0)
    h = 1e-6 * 2.0
    fd = (cdf(MlfParams(0.8, 2.0 + h), 1.0) - cdf(MlfParams(0.8, 2.0 - h), 1.0)) / (2 * h)
    assert dF_dsigma(p, 1.0) == pytest.approx(fd, rel=1e-5)


def test_dF_dbeta_examples():
    p = MlfParams(0.9, 1.0)
    assert dF_dbeta(p, quantile(p, 0.05)) < 0
    assert dF_dbeta(p, quantile(p, 0.8)) > 0
    h = 1e-6
    fd = (cdf(MlfParams(0.7 + h, 3.0), 2.0) - cdf(MlfParams(0.7 - h, 3.0), 2.0)) / (2 * h)
    val, fallback = dF_dbeta(MlfParams(0.7, 3.0), 2.0, with_info=True)
    assert val == pytest.approx(fd, rel=1e-5)
    assert not fallback


@pytest.mark.parametrize("beta,u", [(0.4, 0.3), (0.75, 2.5), (0.9, 9.0), (0.6, 40.0), (1.0, 3.0)])
def test_dF_dbeta_against_extended_precision(beta, u):
    # d/dbeta of 1 - E_beta(-u^beta) at fixed u by an mpmath derivative of the series
    def F(b):
        return 1 - ml_reference(b, -(mp.mpf(u) ** b), digits=50)

    with mp.workdps(50):
        ref = float(mp.diff(F, mp.mpf(beta), h=mp.mpf(10) ** -20, direction=-1 if beta == 1 else 0))
    got = dF_dbeta(MlfParams(beta, 1.0), u, EXACT)
    assert got == pytest.approx(ref, rel=1e-8, abs=1e-13)


@pytest.mark.parametrize("beta", [0.6, 0.75, 0.9])
@pytest.mark.parametrize("sigma", [1.0, 100.0])
def test_derivatives_against_finite_differences(beta, sigma):
    p = MlfParams(beta, sigma)
    for a in np.arange(0.05, 0.951, 0.1):
        x = quantile(p, a)
        hs = 1e-6 * sigma
        fd_s = (cdf(MlfParams(beta, sigma + hs), x) - cdf(MlfParams(beta, sigma - hs), x)) / (2 * hs)
        hb = 1e-6
        fd_b = (cdf(MlfParams(beta + hb, sigma), x) - cdf(MlfParams(beta - hb, sigma), x)) / (2 * hb)
        assert dF_dsigma(p, x) == pytest.approx(fd_s, rel=1e-5)
        assert dF_dbeta(p, x) == pytest.approx(fd_b, rel=1e-5, abs=1e-9)


@given(st.floats(0.05, 1.0), st.floats(-8, 8))
def test_dF_dsigma_negative(beta, logx):
    assert dF_dsigma(MlfParams(beta, 1.0), math.exp(logx)) <= 0


@given(st.floats(0.6, 0.95), st.floats(0.001, 0.999))
def test_dF_dbeta_sign_pattern(beta, alpha):
    p = MlfParams(beta, 1.0)
    d = dF_dbeta(p, quantile(p, alpha))
    if alpha < 0.1797:
        assert d < 0
    elif alpha > 0.5935:
        assert d > 0


def test_admissibility():
    assert check_quantile_admissibility(QuantileSet((0.1, 0.3, 0.5, 0.8, 0.925))) is \
        Admissibility.CONJECTURED
    assert check_quantile_admissibility(QuantileSet((0.3, 0.7))) is Admissibility.NOT_ESTABLISHED
    assert check_quantile_admissibility(QuantileSet((0.02, 0.7))) is Admissibility.GUARANTEED
    assert check_quantile_admissibility((0.1, 0.5)) is Admissibility.NOT_ESTABLISHED


def test_array_shapes():
    p = MlfParams(0.8, 1.0)
    x = np.ones((2, 3))
    assert cdf(p, x).shape == (2, 3)
    assert isinstance(cdf(p, 1.0), float)
