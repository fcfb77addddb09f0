import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rilab.errors import ArgumentError, ConfigurationError, ScaleOverflowError
from rilab.lattice import (LatticePath, ScaleSystem, Window, box_index, linf_ball, linf_norm,
                           linf_sphere, trace_path)


@pytest.mark.parametrize("r,d,size", [(0, 3, 1), (1, 3, 27), (2, 2, 25)])
def test_ball_sizes(r, d, size):
    assert len(linf_ball((0,) * d, r)) == size


@pytest.mark.parametrize("r,d,size", [(0, 3, 1), (1, 3, 26), (1, 2, 8)])
def test_sphere_sizes(r, d, size):
    assert len(linf_sphere((0,) * d, r)) == size


def test_negative_radius():
    with pytest.raises(ArgumentError):
        linf_ball((0, 0), -1)
    with pytest.raises(ArgumentError):
        linf_sphere((0, 0), -1)


@pytest.mark.parametrize("r", [1, 2, 4])
def test_sphere_and_interior_partition_ball(r):
    ball = {tuple(p) for p in linf_ball((1, -2, 3), r)}
    sph = {tuple(p) for p in linf_sphere((1, -2, 3), r)}
    inner = {tuple(p) for p in linf_ball((1, -2, 3), r - 1)}
    assert sph | inner == ball and not sph & inner
    assert len(sph) == (2 * r + 1) ** 3 - (2 * r - 1) ** 3


def test_window_membership():
    w = Window((1, 2, 3), 2)
    assert w.size == 125
    pts = w.sites()
    assert np.all(w.contains(pts))
    assert not w.contains((4, 2, 3))
    assert np.array_equal(w.index(pts), np.arange(w.size))


def test_box_index_examples():
    s = ScaleSystem(10, 10, 5, 3)
    assert box_index((3, 3, 3), 0, s) == (0, 0, 0)
    assert box_index((-1, 0, 0), 0, s) == (-10, 0, 0)
    assert box_index((25, 0), 1, ScaleSystem(2, 10, 5, 2)) == (20, 0)


@given(st.lists(st.integers(-10 ** 6, 10 ** 6), min_size=2, max_size=2), st.integers(0, 3))
def test_partition_property(x, n):
    s = ScaleSystem(3, 4, 2, 2)
    y = box_index(x, n, s)
    Ln = s.L(n)
    assert all(yi <= xi < yi + Ln for xi, yi in zip(x, y))
    assert box_index(y, n, s) == y


def test_strict_scale_and_overflow():
    with pytest.raises(ConfigurationError):
        ScaleSystem(1, 10, 9, 3, strict=True)
    ScaleSystem(1, 20, 10, 3, strict=True)
    with pytest.raises(ScaleOverflowError):
        ScaleSystem(1, 1000, 10, 3).L(10)


def test_trace_path_examples():
    s = ScaleSystem(2, 10, 5, 2)
    assert trace_path(LatticePath([(0, 0)]), s).tolist() == [(0, 0)]
    assert trace_path(LatticePath([(0, 0), (1, 0), (2, 0)]), s).tolist() == [(0, 0), (2, 0)]
    loop = LatticePath([(0, 0), (1, 0), (1, 1), (0, 1), (0, 0)])
    assert trace_path(loop, s).tolist() == [(0, 0)]


def test_path_rejects_jumps():
    with pytest.raises(ArgumentError):
        LatticePath([(0, 0), (2, 0)])


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(2, 5))
def test_trace_is_nearest_neighbour_on_coarse_lattice(seed, L0):
    rng = np.random.default_rng(seed)
    steps = np.zeros((2000, 3), dtype=np.int64)
    axis = rng.integers(0, 3, 2000)
    steps[np.arange(2000), axis] = rng.choice([-1, 1], 2000)
    pts = np.vstack([[0, 0, 0], np.cumsum(steps, axis=0)])
    out = trace_path(LatticePath(pts), ScaleSystem(L0, 10, 5, 3)).tolist()
    for a, b in zip(out, out[1:]):
        assert linf_norm(np.subtract(a, b)) == L0
        assert np.abs(np.subtract(a, b)).sum() == L0
