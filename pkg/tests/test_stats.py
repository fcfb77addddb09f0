import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rilab.errors import ArgumentError
from rilab.stats import (binomial_ci, exp1_cdf, fit_power, fit_stretched_exp, ks_one_sample,
                         ks_two_sample, mean_estimate, variance_estimate)


def test_ks_identical_and_disjoint():
    assert ks_two_sample([1, 2, 3], [3, 2, 1])[0] == 0
    assert ks_two_sample([0, 0], [1, 1])[0] == 1
    with pytest.raises(ArgumentError):
        ks_two_sample([], [1])


def test_ks_matches_scipy():
    scipy_stats = pytest.importorskip("scipy.stats")
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=300), rng.normal(0.2, size=400)
    assert math.isclose(ks_two_sample(a, b)[0], scipy_stats.ks_2samp(a, b).statistic)


def test_ks_null_pvalues_uniform():
    # unequal sizes: with n = m the statistic lives on a coarse lattice and p-values have atoms
    rng = np.random.default_rng(1)
    p = np.array([ks_two_sample(rng.normal(size=300), rng.normal(size=457))[1]
                  for _ in range(1000)])
    _, pp = ks_one_sample(p, lambda x: np.clip(x, 0, 1))
    assert pp > 0.01


def test_ks_one_sample_exponential():
    x = np.random.default_rng(2).exponential(size=5000)
    assert ks_one_sample(x, exp1_cdf)[1] > 0.01
    assert ks_one_sample(2 * x, exp1_cdf)[1] < 1e-6


def test_binomial_ci():
    lo, hi = binomial_ci(50, 100)
    assert abs(lo - 0.404) < 1e-3 and abs(hi - 0.596) < 1e-3
    assert binomial_ci(0, 10)[0] == 0.0
    assert binomial_ci(10, 10)[1] == 1.0
    for bad in [(-1, 10), (11, 10), (0, 0)]:
        with pytest.raises(ArgumentError):
            binomial_ci(*bad)


def test_fit_power():
    xs = np.arange(1.0, 10.0)
    e, a, _ = fit_power(xs, xs ** 2)
    assert abs(e - 2) < 1e-12
    e, a, _ = fit_power(xs, 3 * xs)
    assert abs(e - 1) < 1e-12 and abs(a - 3) < 1e-12
    rng = np.random.default_rng(3)
    e, _, _ = fit_power(xs, xs * np.exp(rng.normal(0, 0.01, xs.size)))
    assert 0.9 <= e <= 1.1
    with pytest.raises(ArgumentError):
        fit_power([1, 2, 0], [1, 2, 3])


def test_fit_stretched_exp():
    L = np.arange(1.0, 40.0)
    fit = fit_stretched_exp(L, np.exp(-0.5 * L ** 0.5))
    assert abs(fit.c - 1) < 0.1 and abs(fit.c_prime - 0.5) < 0.05 and abs(fit.rho - 0.5) < 0.05
    assert abs(fit_stretched_exp(L, np.exp(-L)).rho - 1.0) <= 0.01
    assert fit_stretched_exp(L, np.full(L.size, 0.3)).degenerate


def test_fit_stretched_exp_censoring():
    L = np.arange(1.0, 10.0)
    p = np.exp(-L)
    p[-1] = 0
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        fit = fit_stretched_exp(L, p)
    assert fit.censored == 1 and w


def test_grid_refinement_non_increasing():
    L = np.arange(1.0, 30.0)
    p = 0.8 * np.exp(-0.3 * L ** 0.37)
    coarse = fit_stretched_exp(L, p, np.round(np.arange(1, 11) / 10, 2))
    fine = fit_stretched_exp(L, p)
    assert fine.residual <= coarse.residual + 1e-15


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=4, max_size=50))
def test_estimators_deterministic(xs):
    assert mean_estimate(xs) == mean_estimate(xs)
    assert variance_estimate(xs).value >= 0
