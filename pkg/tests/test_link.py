import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from smvlc.link import (NoiseModel, cond_logpdf, cond_pdf, db_to_linear, dbm_to_watts, pep, q_function,
                        reference_gains, sample_output, snr_power, watts_to_dbm)


def test_q_function_against_mpmath():
    mpmath.mp.dps = 30
    for u in (0.0, 0.5, 1.0, 3.0, 6.0, 10.0):
        ref = mpmath.erfc(mpmath.mpf(u) / mpmath.sqrt(2)) / 2
        assert q_function(u) == pytest.approx(float(ref), rel=1e-13)
    assert q_function(3.0) == pytest.approx(1.3499e-3, rel=1e-4)
    np.testing.assert_allclose(q_function(np.array([0.0, 0.0])), [0.5, 0.5])


def test_unit_conversions():
    assert dbm_to_watts(-104) == pytest.approx(10 ** (-134 / 10), rel=1e-14)
    assert dbm_to_watts(30) == pytest.approx(1.0)
    assert watts_to_dbm(dbm_to_watts(-17.3)) == pytest.approx(-17.3)
    assert db_to_linear(20) == pytest.approx(100.0)


def test_noise_model_from_dbm():
    n = NoiseModel.from_dbm(-104, 50)
    assert n.sigma_sq == pytest.approx(3.981071705534972e-14, rel=1e-12)
    assert n.varsigma_sq == 2500.0
    assert n.varsigma == pytest.approx(50.0)
    assert n.variance(0.1) == pytest.approx((1 + 250) * n.sigma_sq)


@pytest.mark.parametrize("kw", [dict(sigma_sq=0.0), dict(sigma_sq=-1.0), dict(sigma_sq=1.0, varsigma_sq=-1.0),
                                dict(sigma_sq=float("inf"))])
def test_noise_model_validation(kw):
    with pytest.raises(ValueError):
        NoiseModel(**kw)


@pytest.mark.parametrize("h,x,vs2", [(0.5, 2.0, 0.0), (0.2, 1.0, 4.0), (1.0, 0.0, 9.0)])
def test_cond_pdf_normalized_with_moments(h, x, vs2):
    noise = NoiseModel(0.3, vs2)
    mass = integrate.quad(lambda y: cond_pdf(y, h, x, noise), -50, 50, limit=200)[0]
    mean = integrate.quad(lambda y: y * cond_pdf(y, h, x, noise), -50, 50, limit=200)[0]
    var = integrate.quad(lambda y: (y - h * x) ** 2 * cond_pdf(y, h, x, noise), -50, 50, limit=200)[0]
    assert mass == pytest.approx(1.0, abs=1e-10)
    assert mean == pytest.approx(h * x, abs=1e-10)
    assert var == pytest.approx((1 + h * x * vs2) * 0.3, rel=1e-9)


def test_logpdf_matches_pdf():
    noise = NoiseModel(0.7, 2.0)
    y = np.linspace(-3, 5, 11)
    np.testing.assert_allclose(np.exp(cond_logpdf(y, 0.4, 2.0, noise)), cond_pdf(y, 0.4, 2.0, noise), rtol=1e-13)


def test_negative_intensity_rejected():
    noise = NoiseModel(1.0)
    with pytest.raises(ValueError):
        cond_pdf(0.0, 0.5, -1.0, noise)
    with pytest.raises(ValueError):
        sample_output(-0.1, 1.0, noise, np.random.default_rng(0))


def test_sample_output_distribution():
    noise = NoiseModel(0.25, 3.0)
    h, x = 0.8, 1.5
    y = sample_output(h, x, noise, np.random.default_rng(7), size=200_000)
    sd = math.sqrt(noise.variance(h * x))
    res = stats.kstest(y, "norm", args=(h * x, sd))
    assert res.pvalue > 1e-3
    assert y.mean() == pytest.approx(h * x, abs=5 * sd / math.sqrt(y.size))


def test_sample_output_deterministic_and_scalar():
    noise = NoiseModel(1.0, 1.0)
    a = sample_output(0.5, 1.0, noise, np.random.default_rng(3))
    b = sample_output(0.5, 1.0, noise, np.random.default_rng(3))
    assert isinstance(a, float) and a == b


def test_pep_monte_carlo():
    noise = NoiseModel(0.04, 2.0)
    h, xi, xj = 0.5, 1.0, 1.6
    rng = np.random.default_rng(11)
    n = 400_000
    y = sample_output(h, xi, noise, rng, size=n)
    # Threshold test with the transmitted symbol's variance: error past the midpoint.
    rate = np.mean(y > h * (xi + xj) / 2)
    p = pep(xi, xj, h, noise)
    assert rate == pytest.approx(p, abs=4 * math.sqrt(p * (1 - p) / n))


def test_pep_properties():
    noise = NoiseModel(1.0)
    assert pep(1.0, 2.0, 1.0, noise) == pytest.approx(q_function(0.5))
    assert pep(1.0, 2.0, 1.0, noise) == pep(2.0, 1.0, 1.0, noise)
    with pytest.raises(ValueError):
        pep(1.0, 1.0, 1.0, noise)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 5.0), st.floats(0.0, 10.0), st.floats(0.0, 10.0))
def test_pep_decreasing_in_distance(d1, d2, vs):
    noise = NoiseModel(1.0, vs ** 2)
    a, b = sorted((d1, d1 + d2))
    assert pep(1.0, 1.0 + a, 1.0, noise) >= pep(1.0, 1.0 + b, 1.0, noise)


def test_reference_gains_and_snr_power():
    noise = NoiseModel.from_dbm(-104)
    g = reference_gains([2e-6, 5e-6, 1e-6], noise)
    assert max(g) == pytest.approx(1 / noise.sigma)
    assert g[0] / g[1] == pytest.approx(0.4)
    power = snr_power(100.0, noise)
    assert max(g) * power == pytest.approx(100.0 * noise.sigma)
    with pytest.raises(ValueError):
        snr_power(0.0, noise)
    with pytest.raises(ValueError):
        reference_gains([0.0, 0.0], noise)
