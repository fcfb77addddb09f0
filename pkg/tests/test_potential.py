import math

import numpy as np
import pytest

from rilab.errors import ConfigurationError, DomainError
from rilab.lattice import Window, linf_ball
from rilab.potential import (GreenTable, asymptotic_green, capacity, equilibrium,
                             escape_probability_mc, green, green_linear_solve, green_table,
                             hitting_probability,
                             kill_bias_bound, smallest_kill_radius, visit_probability_check)

G0 = 1.516386059151978


def test_g0_and_harmonicity(G3):
    assert abs(G3.g0 - G0) < 1e-10
    assert abs(G3((1, 0, 0)) - (G3.g0 - 1)) < 1e-10
    assert G3.harmonic_residual() < 1e-10


def test_green_symmetries(G3):
    rng = np.random.default_rng(0)
    for x in rng.integers(-7, 8, size=(20, 3)):
        v = G3(x)
        assert v > 0 and v <= G3.g0
        assert G3(-x) == v
        assert G3(x[[2, 0, 1]]) == v
        assert G3(x * np.array([-1, 1, -1])) == v


def test_green_domain():
    with pytest.raises(DomainError):
        green((0, 0), d=2)


def test_higher_dimensions():
    G4 = GreenTable(4, 3)
    assert G4.harmonic_residual() < 1e-9
    assert 1.0 < G4.g0 < G0


def test_asymptotic_continuation(G3):
    far = np.array([30, 4, 0])
    big = GreenTable(3, 30)
    assert abs(G3(far) - big(far)) < 1e-5
    assert abs(asymptotic_green(far) - big(far)) < 1e-5


def test_linear_solve_oracle_small():
    g = green_linear_solve(box_radius=24, out_radius=2, boundary="asymptotic")
    G = GreenTable(3, 2)
    for x in [(0, 0, 0), (1, 0, 0), (1, 1, 1), (2, 1, 0)]:
        assert abs(g[x] - G(x)) < 1e-4


def test_equilibrium_single_point(G3):
    em = equilibrium([(0, 0, 0)], G3)
    assert abs(em.cap - 1 / G3.g0) < 1e-12
    assert abs(em.e[0] - 0.65946) < 1e-5


def test_equilibrium_ball_interior_zero(G3):
    K = linf_ball((0, 0, 0), 2)
    em = equilibrium(K, G3)
    assert abs(em.weight((0, 0, 0))) < 1e-8
    assert abs(em.weight((1, 1, 1))) < 1e-8
    assert np.all(em.e >= 0)
    assert abs(em.normalized.sum() - 1) < 1e-12


def test_equilibrium_pair_symmetry(G3):
    em = equilibrium([(0, 0, 0), (1, 0, 0)], G3)
    assert abs(em.e[0] - em.e[1]) < 1e-12


def test_capacity_monotone_and_translation(G3):
    rng = np.random.default_rng(1)
    for _ in range(10):
        K2 = rng.integers(-2, 3, size=(8, 3))
        K1 = K2[:4]
        assert capacity(K1, G3) <= capacity(K2, G3) + 1e-12
        shift = rng.integers(-5, 6, size=3)
        assert abs(capacity(K2 + shift, G3) - capacity(K2, G3)) < 1e-12


def test_hitting_probability(G3):
    K = linf_ball((0, 0, 0), 1)
    em = equilibrium(K, G3)
    assert np.allclose(hitting_probability(K, em, G3), 1.0, atol=1e-8)
    vals = [hitting_probability((r, 0, 0), em, G3) for r in (10, 20, 40)]
    assert vals[0] > vals[1] > vals[2] > 0
    single = equilibrium([(0, 0, 0)], G3)
    y = np.array([3, 1, 0])
    assert abs(hitting_probability(y, single, G3) - G3(y) / G3.g0) < 1e-12


def test_kill_bias_bound_decay(G3):
    K = Window.centered(3, 1).sites()
    b = [kill_bias_bound(K, R, G3) for R in (10, 20, 40)]
    assert b[0] > b[1] > b[2]
    ratio = kill_bias_bound([(0, 0, 0)], 80, G3) / kill_bias_bound([(0, 0, 0)], 40, G3)
    assert abs(ratio - 0.5) < 0.125


def test_smallest_kill_radius(G3):
    K = [(0, 0, 0)]
    R = smallest_kill_radius(K, G3, target=1e-2)
    assert kill_bias_bound(K, R, G3) <= 1e-2 < kill_bias_bound(K, R - 1, G3)
    with pytest.raises(ConfigurationError):
        smallest_kill_radius(K, G3, target=1e-4, max_radius=100)


def test_escape_single_point(G3):
    est = escape_probability_mc((0, 0, 0), [(0, 0, 0)], 200_000, seed=3, kill_radius=30, G=G3)
    assert est.compatible(1 / G3.g0)
    # killing can only help walks escape
    assert est.value >= 1 / G3.g0 - 3 * est.stderr


def test_escape_reproducible(G3):
    a = escape_probability_mc((0, 0, 0), [(0, 0, 0)], 1000, seed=9, kill_radius=10, G=G3)
    b = escape_probability_mc((0, 0, 0), [(0, 0, 0)], 1000, seed=9, kill_radius=10, G=G3)
    assert a == b


def test_escape_ball_boundary(G3):
    K = linf_ball((0, 0, 0), 1)
    em = equilibrium(K, G3)
    for x in [(1, 1, 1), (1, 0, 0), (1, 1, 0)]:
        est = escape_probability_mc(x, K, 50_000, seed=sum(x), kill_radius=30, G=G3)
        assert est.compatible(em.weight(x))


def test_escape_bias_target(G3):
    with pytest.raises(ConfigurationError):
        escape_probability_mc((0, 0, 0), [(0, 0, 0)], 10, 0, kill_radius=10, G=G3, bias_tol=1e-4)


def test_visit_probability(G3):
    assert visit_probability_check(0, 10, 0).value == 1.0
    rho = 1 - 1 / G3.g0
    assert abs(rho - 0.3405) < 1e-4
    for n in (1, 2):
        est = visit_probability_check(n, 100_000, seed=n, kill_radius=30, G=G3)
        assert est.compatible(rho ** n)


def test_visit_probability_domain():
    with pytest.raises(DomainError):
        visit_probability_check(1, 10, 0, d=2)


def test_table_csv(G3):
    text = GreenTable(3, 2).to_csv()
    lines = text.splitlines()
    assert lines[0] == "x1,x2,x3,g"
    assert lines[1].startswith("0,0,0,")
    assert math.isclose(float(lines[1].split(",")[-1]), G0, abs_tol=1e-10)


def test_absorbing_solve_converges_from_below():
    G = green_table(3, 8)
    exact = np.array([[[G((i, j, k)) for k in range(3)] for j in range(3)] for i in range(3)])
    small = green_linear_solve(box_radius=10, out_radius=2, boundary="absorbing")
    large = green_linear_solve(box_radius=20, out_radius=2, boundary="absorbing")
    assert np.all(small < large) and np.all(large < exact)
    assert np.max(exact - large) < np.max(exact - small) / 1.5
