import math

import numpy as np
import pytest

from rilab.errors import ArgumentError, CapacityError
from rilab.gff import (FieldSample, GaussianSampler, factorize, one_sided_level_set, sample,
                       sample_array, two_sided_level_set, union_bound_p0)
from rilab.lattice import Window
from rilab.stats import ks_two_sample


def test_single_site_factor(G3):
    f = factorize(Window.centered(3, 0), G3)
    assert f.factor.shape == (1, 1)
    assert abs(f.factor[0, 0] - math.sqrt(G3.g0)) < 1e-14


def test_pair_gram(G3):
    f = factorize(np.array([[0, 0, 0], [1, 0, 0]]), G3)
    expect = np.array([[G3.g0, G3.g0 - 1], [G3.g0 - 1, G3.g0]])
    assert np.allclose(f.gram(), expect, atol=1e-8)


def test_permuted_ordering(G3, W3):
    sites = W3.sites()
    perm = np.random.default_rng(0).permutation(len(sites))
    a = factorize(sites, G3).gram()
    b = factorize(sites[perm], G3).gram()
    assert np.allclose(a[np.ix_(perm, perm)], b, atol=1e-10)


def test_capacity_cap(G3):
    with pytest.raises(CapacityError):
        factorize(Window.centered(3, 6), G3)


def test_single_site_variance(G3):
    f = factorize(Window.centered(3, 0), G3)
    x = sample_array(f, 100_000, seed=1)[:, 0]
    assert abs(x.var() - G3.g0) < 3 * math.sqrt(2 / len(x)) * G3.g0


def test_pair_covariance(G3):
    f = factorize(np.array([[0, 0, 0], [1, 0, 0]]), G3)
    x = sample_array(f, 100_000, seed=2)
    prod = (x[:, 0] - x[:, 0].mean()) * (x[:, 1] - x[:, 1].mean())
    se = prod.std() / math.sqrt(len(prod))
    assert abs(prod.mean() - (G3.g0 - 1)) < 3 * se


def test_sample_edge_cases(fact3):
    assert sample(fact3, 0, seed=1) == []
    a = sample_array(fact3, 5, seed=7)
    b = sample_array(fact3, 5, seed=7)
    assert np.array_equal(a, b)
    assert np.array_equal(GaussianSampler(fact3).draw(5, 7), a)


def test_chunking_invariance(fact3):
    a = sample_array(fact3, 600, seed=3)
    assert np.allclose(a[:5], sample_array(fact3, 5, seed=3), rtol=0, atol=1e-12)


def test_level_sets(fact3, W3):
    f = sample(fact3, 1, seed=4)[0]
    assert two_sided_level_set(f, 0).bits.all()
    big = np.abs(f.values).max() + 1
    assert not two_sided_level_set(f, big).bits.any()
    for h in (0.3, 1.0):
        lo, hi = two_sided_level_set(f, h), two_sided_level_set(f, h + 0.5)
        assert hi <= lo
        assert one_sided_level_set(f, h) <= lo
    assert one_sided_level_set(f, -math.inf).bits.all()
    flipped = one_sided_level_set(-f, 0.7)
    assert np.array_equal(flipped.bits, f.values <= -0.7)
    with pytest.raises(ArgumentError):
        two_sided_level_set(f, -1)


def test_symmetry_in_law(fact3, W3):
    x = sample_array(fact3, 10_000, seed=5)
    c = W3.index(W3.center)
    _, p = ks_two_sample(x[:5000, c], -x[5000:, c])
    assert p > 0.01


def test_union_bound(fact3, W3, G3):
    x = sample_array(fact3, 5000, seed=6)
    box = Window((1, 1, 1), 1).sites() - 1  # {0,1,2}^3 shifted into the window
    idx = W3.index(box)
    for h in (2, 3, 4):
        hits = (x[:, idx].max(axis=1) >= h)
        p = hits.mean()
        se = math.sqrt(max(p * (1 - p), 1e-12) / len(hits))
        assert p <= union_bound_p0(h, len(idx), G3.g0) + 3 * se


def test_csv(fact3, W3):
    f = sample(fact3, 1, seed=8)[0]
    lines = f.to_csv().splitlines()
    assert lines[0] == "x1,x2,x3,phi"
    assert len(lines) == W3.size + 1
    assert isinstance(f, FieldSample)
