"""Geometry of Z^d: sup-norm balls and spheres, windows, renormalized lattices.

Points are represented as tuples of Python ints at the API boundary and as
``(n, d)`` int64 arrays in bulk. Sets of points are returned as arrays in
lexicographic order.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ArgumentError, ConfigurationError, ScaleOverflowError

INT64_MAX = 2 ** 63 - 1


def _checked(value: int) -> int:
    if not -INT64_MAX - 1 <= value <= INT64_MAX:
        raise ScaleOverflowError(f"value {value} does not fit in a signed 64-bit integer")
    return value


def as_point(x) -> tuple:
    """Convert an iterable of integers to a tuple of Python ints."""
    pt = tuple(int(v) for v in np.atleast_1d(np.asarray(x)).ravel())
    for v, raw in zip(pt, np.atleast_1d(np.asarray(x)).ravel()):
        if v != raw:
            raise ArgumentError(f"non-integer coordinate {raw!r}")
        _checked(v)
    if not pt:
        raise ArgumentError("a point needs at least one coordinate")
    return pt


def origin(d: int) -> tuple:
    return (0,) * d


def unit(d: int, axis: int = 0, sign: int = 1) -> tuple:
    e = [0] * d
    e[axis] = sign
    return tuple(e)


def linf_norm(x) -> int:
    return int(np.max(np.abs(np.asarray(x, dtype=np.int64)), axis=-1))


def _grid(center: Sequence[int], r: int) -> np.ndarray:
    d = len(center)
    axes = [np.arange(c - r, c + r + 1, dtype=np.int64) for c in center]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1).reshape(-1, d)


def linf_ball(center, r: int) -> np.ndarray:
    """All ``y`` with ``|y - center|_inf <= r`` as an ``((2r+1)^d, d)`` array."""
    c = as_point(center)
    if r < 0:
        raise ArgumentError(f"radius must be non-negative, got {r}")
    return _grid(c, int(r))


def linf_sphere(center, r: int) -> np.ndarray:
    """All ``y`` with ``|y - center|_inf == r``."""
    c = as_point(center)
    if r < 0:
        raise ArgumentError(f"radius must be non-negative, got {r}")
    pts = _grid(c, int(r))
    dist = np.max(np.abs(pts - np.asarray(c, dtype=np.int64)), axis=1)
    return pts[dist == r]


@dataclass(frozen=True)
class Window:
    """The sup-norm ball ``B(center, radius)``.

    Sites are indexed lexicographically; ``index`` and ``sites`` are inverse
    to each other.
    """

    center: tuple
    radius: int

    def __post_init__(self):
        object.__setattr__(self, "center", as_point(self.center))
        if int(self.radius) != self.radius or self.radius < 0:
            raise ArgumentError(f"radius must be a non-negative integer, got {self.radius}")
        object.__setattr__(self, "radius", int(self.radius))

    @classmethod
    def centered(cls, d: int, radius: int) -> "Window":
        return cls(origin(d), radius)

    @property
    def d(self) -> int:
        return len(self.center)

    @property
    def side(self) -> int:
        return 2 * self.radius + 1

    @property
    def shape(self) -> tuple:
        return (self.side,) * self.d

    @property
    def size(self) -> int:
        return self.side ** self.d

    def sites(self) -> np.ndarray:
        return _grid(self.center, self.radius)

    def contains(self, y) -> bool | np.ndarray:
        y = np.asarray(y, dtype=np.int64)
        dist = np.max(np.abs(y - np.asarray(self.center, dtype=np.int64)), axis=-1)
        return dist <= self.radius

    def index(self, y) -> int | np.ndarray:
        """Flat lexicographic index of ``y`` (scalar or array of points)."""
        y = np.asarray(y, dtype=np.int64)
        if not np.all(self.contains(y)):
            raise ArgumentError("point outside the window")
        local = y - np.asarray(self.center, dtype=np.int64) + self.radius
        idx = np.ravel_multi_index(np.moveaxis(local, -1, 0), self.shape)
        return int(idx) if np.ndim(idx) == 0 else idx

    def inner_boundary_mask(self) -> np.ndarray:
        """Boolean mask of sites on ``S(center, radius)``."""
        local = self.sites() - np.asarray(self.center, dtype=np.int64)
        return np.max(np.abs(local), axis=1) == self.radius

    def face_masks(self) -> list:
        """Pairs of boolean masks (low face, high face) for each axis."""
        local = self.sites() - np.asarray(self.center, dtype=np.int64)
        return [(local[:, a] == -self.radius, local[:, a] == self.radius) for a in range(self.d)]


@dataclass(frozen=True)
class ScaleSystem:
    """Scales ``L_n = l0**n * L0`` of the renormalized lattices.

    With ``strict=True`` the separation hypotheses ``r >= 10`` and
    ``2r <= l0`` are enforced at construction.
    """

    L0: int
    l0: int
    r: int
    d: int
    strict: bool = False

    def __post_init__(self):
        for name in ("L0", "l0", "r", "d"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ArgumentError(f"{name} must be a positive integer, got {v}")
        if self.strict and (self.r < 10 or 2 * self.r > self.l0):
            raise ConfigurationError(
                f"strict scales need r >= 10 and 2r <= l0 (got r={self.r}, l0={self.l0})")

    def L(self, n: int) -> int:
        """``L_n`` with overflow checking."""
        if n < 0:
            raise ArgumentError("level must be non-negative")
        return _checked(self.l0 ** n * self.L0)

    def separation(self, n: int) -> float:
        """Minimal sup-distance ``L_n / r`` required between siblings at level ``n``."""
        return self.L(n) / self.r


def box_index(x, n: int, s: ScaleSystem) -> tuple:
    """The unique ``y`` in ``L_n Z^d`` with ``x`` in ``y + [0, L_n)^d``."""
    Ln = s.L(n)
    return tuple(_checked((v // Ln) * Ln) for v in as_point(x))


def box_index_array(x: np.ndarray, Ln: int) -> np.ndarray:
    """Vectorized ``box_index`` for an ``(m, d)`` array at box side ``Ln``."""
    return np.floor_divide(np.asarray(x, dtype=np.int64), Ln) * Ln


def box_points(y, n: int, s: ScaleSystem) -> np.ndarray:
    """All points of the partition box ``y + [0, L_n)^d``."""
    Ln = s.L(n)
    y = as_point(y)
    axes = [np.arange(c, c + Ln, dtype=np.int64) for c in y]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


class LatticePath:
    """A finite path in ``Z^d`` whose steps have l1-length ``step``.

    ``step`` is 1 for nearest-neighbour paths and ``L_n`` for paths in the
    level-``n`` lattice.
    """

    def __init__(self, points: Iterable, step: int = 1):
        pts = np.asarray(list(points) if not isinstance(points, np.ndarray) else points,
                         dtype=np.int64)
        if pts.ndim == 1:
            pts = pts.reshape(1, -1)
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise ArgumentError("a path needs at least one point")
        jumps = np.abs(np.diff(pts, axis=0)).sum(axis=1)
        if np.any(jumps != step):
            bad = int(np.argmax(jumps != step))
            raise ArgumentError(
                f"steps must have l1-length {step}; step {bad} has length {int(jumps[bad])}")
        self.points = pts
        self.step = int(step)

    def __len__(self):
        return len(self.points)

    def __eq__(self, other):
        if isinstance(other, LatticePath):
            return self.step == other.step and np.array_equal(self.points, other.points)
        return NotImplemented

    def __repr__(self):
        return f"LatticePath({self.points.tolist()}, step={self.step})"

    def tolist(self) -> list:
        return [tuple(p) for p in self.points.tolist()]


def trace_path(pi, s: ScaleSystem) -> LatticePath:
    """Trace of a nearest-neighbour path on the level-0 lattice.

    Records the level-0 box of the starting point and then the box of the
    path each time it leaves the box recorded last.
    """
    path = pi if isinstance(pi, LatticePath) else LatticePath(pi)
    if path.step != 1:
        raise ArgumentError("trace_path needs a nearest-neighbour path")
    boxes = box_index_array(path.points, s.L0)
    change = np.any(boxes[1:] != boxes[:-1], axis=1)
    keep = np.concatenate([[True], change])
    return LatticePath(boxes[keep], step=s.L0)
