import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from pfsburst.errors import DomainError
from pfsburst.radio import LinkBudget, RateMap, rate, sample_sinr
from pfsburst.sinr_model import (
    SinrModel,
    integrate_sinr,
    log_survival,
    rate_stats,
    sinr_cdf,
    sinr_pdf,
)

models = st.builds(
    SinrModel,
    serving_mean=st.floats(0.1, 10.0),
    interferer_means=st.lists(st.floats(0.0, 2.0), max_size=6).map(tuple),
    noise=st.floats(1e-3, 2.0),
)


def test_cdf_at_zero():
    assert sinr_cdf(SinrModel(1.0, (0.3,), 0.2), 0.0) == 0.0


def test_noise_only_is_exponential():
    m = SinrModel(1.0, (), 1.0)
    x = np.linspace(0.01, 10, 50)
    np.testing.assert_allclose(sinr_cdf(m, x), 1 - np.exp(-x), rtol=1e-13)
    np.testing.assert_allclose(sinr_pdf(m, x), np.exp(-x), rtol=1e-13)
    assert sinr_pdf(m, 1e-300) == pytest.approx(1.0)


def test_single_equal_interferer():
    m = SinrModel(1.0, (1.0,), 1e-12)
    assert sinr_cdf(m, 1.0) == pytest.approx(0.5, abs=1e-10)
    # Monte Carlo oracle: P(X < Y) for iid exponentials
    rng = np.random.default_rng(0)
    x, y = rng.exponential(size=(2, 10**6))
    assert np.mean(x / y < 1.0) == pytest.approx(0.5, abs=2e-3)


def test_pdf_requires_positive_phi():
    with pytest.raises(DomainError):
        sinr_pdf(SinrModel(1.0), 0.0)


@settings(max_examples=25, deadline=None)
@given(models)
def test_density_integrates_to_one(m):
    assert integrate_sinr(m, lambda x: 1.0) == pytest.approx(1.0, abs=1e-8)


@settings(max_examples=25, deadline=None)
@given(models)
def test_cdf_derivative_matches_pdf(m):
    for x in np.logspace(-3, 3, 13):
        h = 1e-5 * x
        fd = (sinr_cdf(m, x + h) - sinr_cdf(m, x - h)) / (2 * h)
        assert fd == pytest.approx(sinr_pdf(m, x), rel=1e-6, abs=1e-9)


@settings(max_examples=25, deadline=None)
@given(models, st.floats(1e-3, 1e2), st.floats(1e-3, 1e2))
def test_cdf_increments_match_density(m, a, b):
    lo, hi = min(a, b), max(a, b)
    inside = integrate.quad(lambda x: sinr_pdf(m, x), lo, hi, epsabs=1e-12, epsrel=1e-10, limit=200)[0]
    assert sinr_cdf(m, hi) - sinr_cdf(m, lo) == pytest.approx(inside, abs=1e-8)


@settings(max_examples=50, deadline=None)
@given(models)
def test_cdf_bounded_and_monotone(m):
    x = np.logspace(-6, 6, 200)
    F = sinr_cdf(m, x)
    assert np.all((F >= 0) & (F <= 1))
    assert np.all(np.diff(F) >= 0)
    assert np.all(sinr_pdf(m, x) >= 0)


def test_vanishing_interferer_is_continuous():
    base = SinrModel(1.0, (0.3, 0.2), 0.1)
    plus = SinrModel(1.0, (0.3, 0.2, 1e-15), 0.1)
    x = np.logspace(-4, 4, 40)
    np.testing.assert_allclose(sinr_cdf(plus, x), sinr_cdf(base, x), atol=1e-12)


def test_stronger_serving_dominates():
    weak, strong = SinrModel(1.0, (0.3,), 0.1), SinrModel(2.0, (0.3,), 0.1)
    x = np.logspace(-4, 1.5, 40)  # beyond this both laws are 1 to double precision
    assert np.all(sinr_cdf(strong, x) < sinr_cdf(weak, x))
    assert np.all(sinr_cdf(strong, np.logspace(1.5, 4, 20)) <= sinr_cdf(weak, np.logspace(1.5, 4, 20)))


def test_equal_interferer_tiers_are_stable():
    m = SinrModel(1.0, (0.05,) * 18, 1e-3)
    assert np.isfinite(log_survival(m, 1e8))
    assert sinr_cdf(m, 1e-12) == pytest.approx(1e-12 * (1e-3 + 0.9), rel=1e-6)


def test_unit_mean_rate_matches_closed_form(frozen):
    st_ = rate_stats(SinrModel(1.0), RateMap(1.0, 1e6))
    assert st_.mean_rate == pytest.approx(frozen["unit_mean_se_closed"], rel=1e-10)
    # the Monte Carlo value agrees within its own sampling error
    assert st_.mean_rate == pytest.approx(frozen["unit_mean_se_mc_1e7"], rel=1e-3)


def test_bandwidth_scales_rate():
    m = SinrModel(1.0, (0.3,), 0.1)
    a = rate_stats(m, RateMap(1.0))
    b = rate_stats(m, RateMap(1e-9))
    assert b.mean_rate == pytest.approx(1e-9 * a.mean_rate, rel=1e-12)


@pytest.mark.parametrize("cap", [1e3, 1e6])
def test_rate_moments_match_monte_carlo(cap):
    link = LinkBudget.from_powers(5.0, (0.4, 0.2, 0.1), 0.05)
    rm = RateMap(1.0, cap)
    r = rate(rm, sample_sinr(link, 10**7, np.random.default_rng(7)))
    st_ = rate_stats(SinrModel.from_link(link), rm)
    assert st_.mean_rate == pytest.approx(r.mean(), rel=5e-3)
    assert st_.std_rate == pytest.approx(r.std(), rel=5e-3)


def test_capped_moments_include_atom():
    m = SinrModel(1.0, (), 1e-4)
    rm = RateMap(1.0, 10.0)
    st_ = rate_stats(m, rm)
    assert st_.mean_rate <= math.log2(11.0)
    p_cap = math.exp(-1e-4 * 10.0)
    assert st_.mean_rate > p_cap * math.log2(11.0)
