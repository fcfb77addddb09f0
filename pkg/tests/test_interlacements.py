import json
import math

import numpy as np
import pytest
import scipy.stats

from rilab.errors import ArgumentError, ConfigurationError
from rilab.interlacements import (InterlacementSampler, kill_bias, occupation_bias,
                                  occupation_field, sample_interlacement, sigma_field, superpose,
                                  threshold_sets)
from rilab.lattice import Window
from rilab.percolation import SiteConfig, spanning_count
from rilab.potential import equilibrium, green_table
from rilab.stats import exp1_cdf, ks_one_sample, mean_estimate, variance_estimate


def test_u_zero(W3, ri3):
    s = ri3.sample(0.0, seed=1, record=True)
    assert s.count == 0
    assert not occupation_field(s).values.any()
    I, V = threshold_sets(occupation_field(s), 0.0)
    assert not I.bits.any() and V.bits.all()


def test_negative_u(ri3):
    with pytest.raises(ArgumentError):
        ri3.sample(-1.0, seed=0)


def test_kill_radius_too_small(W3, G3):
    with pytest.raises(ConfigurationError):
        InterlacementSampler(W3, G3, kill_radius=3)


def test_count_mean_and_dispersion():
    W = Window.centered(3, 4)
    s = InterlacementSampler(W, green_table(3, 9))
    counts = s.batch(1.0, 10_000, seed=2).counts
    est = mean_estimate(counts)
    assert est.compatible(s.cap)
    assert 0.94 <= counts.var() / counts.mean() <= 1.06


def test_entry_distribution(G3):
    W = Window.centered(3, 2)
    s = InterlacementSampler(W, G3)
    samp = s.sample(400.0, seed=3)
    support = s.entry_sites
    observed = np.array([(samp.entries == i).sum() for i in support])
    expected = s.em.normalized[support] * samp.count
    _, p = scipy.stats.chisquare(observed, expected)
    assert p > 0.01
    assert set(np.unique(samp.entries)) <= set(support.tolist())


def test_sigma_and_occupation_invariants(ri3):
    for seed in range(20):
        s = ri3.sample(1.5, seed=seed, record=True)
        L, sig = occupation_field(s).values, sigma_field(s).values
        assert np.all(L >= 0) and np.all(sig <= L + 1e-15)
        assert np.array_equal(sig > 0, L > 0)
        visited = np.zeros_like(L, dtype=bool)
        for t in s.trajectories:
            visited[t.sites] = True
            assert np.all(t.holds > 0)
        assert np.array_equal(visited, L > 0)
        I0, _ = threshold_sets(occupation_field(s), 0.0)
        assert np.array_equal(I0.bits, visited)


def test_sigma_single_trajectory(ri3):
    for seed in range(200):
        s = ri3.sample(0.05, seed=seed, record=True)
        if s.count == 1:
            t = s.trajectories[0]
            assert sigma_field(s).values[t.sites[0]] == t.holds[0]
            assert t.entry == tuple(ri3.window.sites()[t.sites[0]].tolist())
            return
    pytest.fail("no single-trajectory sample found")


def test_threshold_nesting(ri3):
    L = occupation_field(ri3.sample(2.0, seed=4))
    prev_I, prev_V = threshold_sets(L, 0.0)
    for a in (0.5, 1.0, 3.0):
        I, V = threshold_sets(L, a)
        assert I <= prev_I and prev_V <= V
        assert not np.any(I.bits & V.bits)
        prev_I, prev_V = I, V
    with pytest.raises(ArgumentError):
        threshold_sets(L, -0.1)


def test_moments_at_center(ri3, W3, G3):
    c = W3.index(W3.center)
    means = []
    for u in (0.5, 1.0, 2.0):
        b = ri3.batch(u, 10_000, seed=int(10 * u))
        m = mean_estimate(b.occupation[:, c])
        v = variance_estimate(b.occupation[:, c])
        assert m.compatible(u)
        assert v.compatible(2 * u * G3.g0)
        means.append(m)
    slope = sum(m.value * u for m, u in zip(means, (0.5, 1, 2))) / sum(u * u for u in (0.5, 1, 2))
    se = math.sqrt(sum((m.stderr * u) ** 2 for m, u in zip(means, (0.5, 1, 2)))) / 5.25
    assert abs(slope - 1) <= 3 * se


def test_sigma_exponential(ri3):
    b = ri3.batch(1.0, 3000, seed=5)
    sig = b.sigma[b.sigma > 0]
    assert sig.size >= 10_000
    assert ks_one_sample(sig, exp1_cdf)[1] > 0.01


def test_superposition_monotone(ri3):
    a = ri3.sample(1.0, seed=6, record=True)
    b = ri3.sample(0.5, seed=7, record=True)
    s = superpose(a, b)
    assert s.u == 1.5 and np.all(s.occupation >= a.occupation)
    assert np.all(np.diff(s.labels[:a.count]) > 0)
    assert np.all(s.labels[a.count:] > 1.0)


def test_kill_bias_decay(W3, G3):
    em = equilibrium(W3.sites(), G3)
    b = [kill_bias(W3, R, em, G3) for R in (10, 20, 40)]
    assert b[0] > b[1] > b[2] > 0
    K0 = Window.centered(3, 0)
    em0 = equilibrium(K0.sites(), G3)
    assert abs(kill_bias(K0, 20, em0, G3) - em0.cap * G3.sphere_max(20)) < 1e-15
    ratio = kill_bias(K0, 40, em0, G3) / kill_bias(K0, 20, em0, G3)
    assert abs(ratio - 0.5) < 0.125


def test_killed_sampler_agrees(W3, G3):
    s = InterlacementSampler(W3, G3, kill_radius=20)
    c = W3.index(W3.center)
    b = s.batch(1.0, 4000, seed=8)
    mb, vb = occupation_bias(1.0, s.bias, G3.g0, s.cap)
    assert mean_estimate(b.occupation[:, c], bias=mb).compatible(1.0)
    assert variance_estimate(b.occupation[:, c], bias=vb).compatible(2 * G3.g0)


def test_reproducible_and_jsonl(W3, G3):
    a = sample_interlacement(W3, 1.0, seed=9, G=G3)
    b = sample_interlacement(W3, 1.0, seed=9, G=G3)
    assert a.to_jsonl() == b.to_jsonl()
    lines = a.to_jsonl().splitlines()
    assert json.loads(lines[0])["count"] == a.count == len(lines) - 1
    rec = json.loads(lines[1])
    assert {"label", "entry", "dirs", "holds"} <= set(rec)


def test_exact_sampler_has_zero_bias(ri3):
    assert ri3.method == "exact" and ri3.bias == 0.0
    assert np.all(ri3.return_probability < 1)


@pytest.mark.slow
def test_uniqueness_probe():
    W = Window.centered(3, 20)
    s = InterlacementSampler(W, green_table(3, 41), kill_radius=30)
    multi = 0
    n = 100
    for occ, _, _ in s.iter_batches(1.0, n, seed=10):
        for row in occ:
            multi += spanning_count(SiteConfig(W, row > 0.1)) >= 2
    assert multi / n < 0.05
