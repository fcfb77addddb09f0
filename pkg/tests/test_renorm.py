import math

import numpy as np
import pytest

from rilab.errors import ArgumentError, CapacityError, ConfigurationError
from rilab.gff import GaussianSampler, IndependentSampler, factorize
from rilab.lattice import ScaleSystem
from rilab.potential import green_table
from rilab.renorm import (B_CONST, BadConfig, build_sequences, c3, cascade_bad,
                          cascade_bad_enumeration, classify_bad, embedding_bound,
                          embedding_count_recursive, enumerate_embeddings, estimate_p0,
                          estimate_p1, from_bool, geometric_lemma_check, iter_embeddings,
                          propagate, separated_pair_count, u_infinity)

STRICT = ScaleSystem(1, 1032, 516, 3)
LEMMA = ScaleSystem(1, 136, 68, 2)


def test_constants():
    assert B_CONST == 3 / (1 - math.exp(-1))
    assert abs(B_CONST - 4.7464) < 1e-3
    assert (c3(2, 3), c3(3, 3), c3(1, 2)) == (516, 772, 68)
    with pytest.raises(ArgumentError):
        c3(0, 3)


def test_sequence_identities():
    seq = build_sequences(STRICT, n_max=20)
    assert abs(seq.K0 - 47.08) < 0.01
    assert abs(seq.K0 - (math.log(2 * 1032 ** 6) + seq.B)) < 1e-12
    for n in range(21):
        M = math.sqrt(math.log(2 ** n * 1 ** 3))
        assert abs(seq.M[n] - M) < 1e-12
        beta = math.sqrt(math.log(2)) + M + 2 ** ((n + 1) / 2) * (math.sqrt(n) + math.sqrt(seq.K0))
        assert abs(seq.beta[n] - beta) <= 1e-12 * beta
    for n in range(20):
        inc = seq.beta[n] * 516 * (2 / 1032) ** (n + 1)
        assert abs(seq.dh[n] - inc) <= 1e-12 * inc
        assert abs((seq.h[n + 1] - seq.h[n]) - inc) <= 1e-15
    assert np.all(seq.dh > 0) and np.all(np.diff(seq.h) >= 0)
    assert seq.h[-1] <= seq.h_inf < math.inf and seq.tail_bound < 1e-12


@pytest.mark.parametrize("L0,l0,r,d", [(1, 100, 10, 3), (10, 200, 50, 3), (3, 1032, 516, 3),
                                       (1, 100, 10, 4), (5, 772 * 2, 772, 3)])
def test_strict_configs_finite(L0, l0, r, d):
    seq = build_sequences(ScaleSystem(L0, l0, r, d), c1=1, c2=1, h0=1)
    assert math.isfinite(seq.h_inf) and np.all(seq.dh > 0) and np.all(np.diff(seq.h) >= 0)
    assert propagate(math.exp(-seq.K0), seq).all_pass


def test_sequence_errors():
    with pytest.raises(ConfigurationError):
        build_sequences(ScaleSystem(1, 50, 10, 3))
    with pytest.raises(ConfigurationError):
        build_sequences(ScaleSystem(1, 4, 2, 3), strict=False)
    with pytest.raises(ArgumentError):
        build_sequences(STRICT, h0=0)


def test_propagate_examples():
    seq = build_sequences(ScaleSystem(10, 100, 10, 3), K0=10)
    rep = propagate(math.exp(-10), seq)
    assert abs(math.exp(rep.log_q[1]) - 2.1e-9) < 0.1e-9
    assert abs(math.exp(rep.log_bound[1]) - 2.7e-5) < 0.1e-5
    assert rep.all_pass
    assert propagate(0.0, seq).all_pass
    bad = propagate(1.0, seq)
    assert bad.first_failure == 0 and np.all(bad.log_q >= 0)
    low = build_sequences(ScaleSystem(10, 100, 10, 3), K0=1)
    with pytest.raises(ConfigurationError):
        propagate(0.1, low)


def test_embedding_counts():
    s = ScaleSystem(1, 10, 5, 2)
    assert enumerate_embeddings(0, (0, 0), s) == 1
    assert separated_pair_count(s) == 10 ** 4 - 44 ** 2 == 8064
    assert enumerate_embeddings(1, (0, 0), s) == 8064 == embedding_count_recursive(1, s)
    small = ScaleSystem(1, 4, 2, 2)
    n2 = enumerate_embeddings(2, (16, -16), small)
    assert n2 == embedding_count_recursive(2, small) == 60 ** 3
    assert n2 <= embedding_bound(2, small)
    with pytest.raises(CapacityError):
        enumerate_embeddings(2, (0, 0), s)
    with pytest.raises(ArgumentError):
        enumerate_embeddings(1, (3, 0), s)


def test_embeddings_are_proper():
    s = ScaleSystem(2, 4, 2, 2)
    embs = list(iter_embeddings(1, (0, 8), s))
    assert len(embs) == embedding_count_recursive(1, s)
    assert all(e.is_proper(s) for e in embs)
    e = embs[0]
    broken = dict(e.nodes)
    broken[(1,)] = broken[(0,)]
    assert not type(e)(e.depth, e.root, broken).is_proper(s)


def test_classify_examples():
    s = ScaleSystem(2, 10, 5, 2)
    zero = np.zeros((6, 4))
    bc = classify_bad({"phi": zero, "L": zero}, {"h": 0.5, "alpha": 0.0, "u": 1.0}, s)
    assert bc.bits.shape == (3, 2)
    assert not bc.type_mask(1).any() and not bc.type_mask(2).any()
    assert bc.type_mask(3).all()
    phi = np.random.default_rng(0).normal(size=(6, 4))
    bc = classify_bad({"phi": phi}, {"h": 0.0}, s, types=(1, 2))
    assert (bc.type_mask(1) | bc.type_mask(2)).all()
    assert classify_bad({"phi": zero}, {"h": 0.0}, s, types=(1, 2)).bits.min() == 3
    with pytest.raises(ArgumentError):
        classify_bad({"phi": zero, "L": np.zeros((4, 4))}, {"h": 1, "alpha": 0, "u": 1}, s)
    with pytest.raises(ArgumentError):
        classify_bad({"phi": np.zeros((5, 4))}, {"h": 1}, s, types=(1,))


def test_classify_thresholds():
    s = ScaleSystem(1, 10, 5, 2)
    phi = np.array([[1.0, -1.0], [0.5, 2.0]])
    bc = classify_bad({"phi": phi}, {"h": 1.0}, s, types=(1, 2))
    assert np.array_equal(bc.type_mask(1), phi >= 1)
    assert np.array_equal(bc.type_mask(2), phi <= -1)


def test_cascade_basics():
    s = ScaleSystem(1, 6, 3, 2)
    rng = np.random.default_rng(1)
    bits = rng.random((36, 36)) < 0.3
    bc = from_bool(s, (0, 0), [bits])
    for x in [(0, 0), (5, 7), (35, 35)]:
        assert cascade_bad(bc, 0, x, 1) == bits[x]
    full = from_bool(s, (0, 0), [np.ones((36, 36), dtype=bool)])
    assert cascade_bad(full, 1, (6, 12), 1) and cascade_bad(full, 2, (0, 0), 1)
    with pytest.raises(ArgumentError):
        cascade_bad(bc, 2, (36, 0), 1)


def test_cascade_matches_enumeration():
    s = ScaleSystem(1, 6, 3, 2)
    leaves = [e.leaves() for e in iter_embeddings(1, (0, 0), s)]
    ia = np.array([p[0] for p in leaves])
    ib = np.array([p[1] for p in leaves])
    rng = np.random.default_rng(2)
    for k in range(1000):
        bits = rng.random((6, 6)) < (0.02, 0.1, 0.3)[k % 3]
        bc = from_bool(s, (0, 0), [bits])
        direct = bool(np.any(bits[ia[:, 0], ia[:, 1]] & bits[ib[:, 0], ib[:, 1]]))
        assert cascade_bad(bc, 1, (0, 0), 1) == direct
        if k < 20:
            assert cascade_bad_enumeration(bc, 1, (0, 0), 1) == direct


def _lemma_region(fill=False):
    m = 2 * LEMMA.l0
    bits = np.full((2 * m + 1,) * 2, fill, dtype=bool)
    return bits, (-m, -m)


def test_lemma_trivial_cases():
    bits, origin = _lemma_region()
    v = geometric_lemma_check(from_bool(LEMMA, origin, [bits]), 1, (0, 0))
    assert not v.premise and v.passed
    bits[272, 272] = True
    v = geometric_lemma_check(from_bool(LEMMA, origin, [bits]), 1, (0, 0))
    assert not v.premise and v.passed


def test_lemma_straight_path():
    bits, origin = _lemma_region()
    bits[272, 272:] = True  # from x straight out to S(x, 2 L_1)
    v = geometric_lemma_check(from_bool(LEMMA, origin, [bits]), 1, (0, 0))
    assert v.premise and v.conclusion and v.passed
    assert v.witness_type == 1
    y = np.array(v.witness)
    assert np.all((y + 272) % 136 == 0) and np.all(np.abs(y) <= 272)


def test_lemma_hypotheses():
    bits, origin = _lemma_region()
    with pytest.raises(ConfigurationError):
        geometric_lemma_check(from_bool(ScaleSystem(1, 136, 60, 2), origin, [bits]), 1, (0, 0))
    with pytest.raises(ConfigurationError):
        geometric_lemma_check(BadConfig(LEMMA, origin, bits.astype(np.uint8), 2), 1, (0, 0))
    with pytest.raises(ArgumentError):
        geometric_lemma_check(from_bool(LEMMA, origin, [bits[1:, 1:]]), 1, (0, 0))


def test_lemma_supercritical_densities():
    rng = np.random.default_rng(3)
    premises = 0
    for k in range(40):
        bits = rng.random((545, 545)) < (0.62, 0.7)[k % 2]
        v = geometric_lemma_check(from_bool(LEMMA, (-272, -272), [bits]), 1, (0, 0))
        premises += v.premise
        assert v.passed
    assert premises > 10


def test_p0_estimates(fact3):
    s = ScaleSystem(3, 10, 5, 3)
    gs = GaussianSampler(fact3)
    G = green_table(3, 7)
    assert estimate_p0(0.0, s, gs, 2000, seed=1).value > 0.99
    big = estimate_p0(10.0, s, gs, 10_000, seed=2, g0=G.g0)
    assert big.value == 0 and big.meta["union_bound"] < 1e-11
    ests = [estimate_p0(h, s, gs, 5000, seed=3) for h in (1, 2, 3)]
    for a, b in zip(ests, ests[1:]):
        assert b.value <= a.value + 3 * math.hypot(a.stderr, b.stderr)
    e3 = estimate_p0(3.0, s, gs, 5000, seed=4, g0=G.g0)
    assert e3.value <= e3.meta["union_bound"] + 3 * e3.stderr


def test_p1_independent_sites():
    s = ScaleSystem(2, 4, 2, 2)
    sites = np.stack(np.meshgrid(np.arange(8), np.arange(8), indexing="ij"), -1).reshape(-1, 2)
    sampler = IndependentSampler(sites)
    assert estimate_p1(-math.inf, s, sampler, 10, seed=0).value == 1.0
    h = 1.0
    p0 = estimate_p0(h, s, sampler, 20_000, seed=1)
    p1 = estimate_p1(h, s, sampler, 20_000, seed=2)
    far = p1.farthest_estimate
    assert abs(far.value - p0.value ** 2) <= 3 * math.hypot(far.stderr, 2 * p0.value * p0.stderr)
    assert p1.value <= p0.value + 3 * math.hypot(p0.stderr, p1.stderr)


def test_p1_gff(G3):
    s = ScaleSystem(1, 4, 2, 3)
    fact = factorize(np.stack(np.meshgrid(*[np.arange(4)] * 3, indexing="ij"), -1).reshape(-1, 3),
                     G3)
    gs = GaussianSampler(fact)
    p0 = estimate_p0(1.5, s, gs, 5000, seed=5)
    p1 = estimate_p1(1.5, s, gs, 5000, seed=6)
    assert p1.value <= p0.value + 3 * math.hypot(p0.stderr, p1.stderr)


def test_u_infinity():
    assert u_infinity(0.0, 1.0) == 2.0
    assert abs(u_infinity(2.0, 0.0) - 8.0) < 1e-12
    with pytest.raises(ArgumentError):
        u_infinity(-1, 0)
