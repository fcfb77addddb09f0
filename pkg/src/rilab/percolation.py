"""Cluster analysis of {0,1} site configurations on windows."""
from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ArgumentError
from .lattice import Window, as_point
from .stats import Estimate, proportion


@dataclass(frozen=True)
class SiteConfig:
    """Open/closed state of every site of a window (lexicographic order)."""

    window: Window
    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=bool).ravel()
        if bits.size != self.window.size:
            raise ArgumentError(f"expected {self.window.size} bits, got {bits.size}")
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @classmethod
    def full(cls, window: Window, value: bool = True) -> "SiteConfig":
        return cls(window, np.full(window.size, value, dtype=bool))

    @property
    def grid(self) -> np.ndarray:
        return self.bits.reshape(self.window.shape)

    def restrict(self, sub: Window) -> "SiteConfig":
        return SiteConfig(sub, _restrict(self.grid, self.window, sub).ravel())

    def __le__(self, other: "SiteConfig") -> bool:
        return self.window == other.window and bool(np.all(self.bits <= other.bits))


def _restrict(grid: np.ndarray, window: Window, sub: Window) -> np.ndarray:
    off = np.asarray(sub.center) - np.asarray(window.center)
    if np.max(np.abs(off)) + sub.radius > window.radius:
        raise ArgumentError("sub-window is not contained in the window")
    lo = off - sub.radius + window.radius
    sl = tuple(slice(int(a), int(a) + sub.side) for a in lo)
    return grid[sl]


def neighbour_offsets(d: int, star: bool = False) -> np.ndarray:
    """Backward neighbour displacements: first nonzero coordinate negative."""
    if not star:
        return -np.eye(d, dtype=np.int64)
    offs = [o for o in itertools.product((-1, 0, 1), repeat=d)
            if any(o) and next(v for v in o if v) < 0]
    return np.asarray(offs, dtype=np.int64)


@dataclass(frozen=True)
class ClusterLabels:
    """Cluster labels of a configuration.

    ``labels[i]`` is 0 for closed sites, otherwise ``1 +`` the smallest flat
    index in the cluster of site ``i``; ``sizes`` and ``touching_faces`` are
    keyed by label. Faces are ``(axis, side)`` with side ``-1`` or ``+1``.
    """

    window: Window
    labels: np.ndarray
    sizes: dict
    touching_faces: dict

    @property
    def count(self) -> int:
        return len(self.sizes)

    @property
    def max_size(self) -> int:
        return max(self.sizes.values(), default=0)


def component_roots(bits_grid: np.ndarray, star: bool = False) -> np.ndarray:
    """Flat array: ``-1`` for closed sites, else the min flat index of the site's cluster."""
    grid = np.ascontiguousarray(bits_grid, dtype=np.uint8)
    shape = np.asarray(grid.shape, dtype=np.int64)
    return kernels.label_components(grid.ravel(), shape, neighbour_offsets(grid.ndim, star))


def label_clusters(c: SiteConfig, star: bool = False) -> ClusterLabels:
    """Union-find labelling of open clusters (nearest-neighbour by default)."""
    roots = component_roots(c.grid, star)
    labels = roots + 1
    ids, counts = np.unique(labels[labels > 0], return_counts=True)
    sizes = {int(i): int(n) for i, n in zip(ids, counts)}
    faces: dict = {int(i): set() for i in ids}
    for axis, (low, high) in enumerate(c.window.face_masks()):
        for side, mask in ((-1, low), (1, high)):
            for lab in np.unique(labels[mask & (labels > 0)]):
                faces[int(lab)].add((axis, side))
    return ClusterLabels(c.window, labels, sizes, {k: frozenset(v) for k, v in faces.items()})


def _ball_sphere_masks(side: int, d: int, L: int):
    R = (side - 1) // 2
    ax = np.abs(np.arange(side) - R)
    dist = ax
    for _ in range(d - 1):
        dist = np.maximum.outer(dist, ax)
    dist = dist.ravel()
    return dist <= L, dist == 2 * L


_MASK_CACHE: dict = {}


def crossing_grid(grid: np.ndarray, L: int) -> bool:
    """Crossing for a grid already restricted to ``B(center, 2L)``."""
    key = (grid.shape, L)
    if key not in _MASK_CACHE:
        _MASK_CACHE[key] = _ball_sphere_masks(grid.shape[0], grid.ndim, L)
    ball, sphere = _MASK_CACHE[key]
    roots = component_roots(grid)
    a = roots[ball]
    b = roots[sphere]
    a = a[a >= 0]
    b = b[b >= 0]
    if a.size == 0 or b.size == 0:
        return False
    return bool(np.intersect1d(a, b).size)


def crossing(c: SiteConfig, L: int) -> bool:
    """Whether an open path joins ``B(center, L)`` to ``S(center, 2L)``.

    A path reaching ``S(center, 2L)`` for the first time stays inside
    ``B(center, 2L)`` until then, so the configuration is restricted to
    that ball before labelling.
    """
    if L < 0:
        raise ArgumentError("L must be non-negative")
    if c.window.radius < 2 * L:
        raise ArgumentError(f"window radius {c.window.radius} < 2L = {2 * L}")
    sub = Window(c.window.center, 2 * L)
    return crossing_grid(_restrict(c.grid, c.window, sub), L)


def crossing_many(bits: np.ndarray, window: Window, L: int) -> np.ndarray:
    """Vectorized :func:`crossing` over rows of an ``(n, window.size)`` boolean array."""
    if window.radius < 2 * L:
        raise ArgumentError(f"window radius {window.radius} < 2L = {2 * L}")
    bits = np.asarray(bits, dtype=bool).reshape((-1,) + window.shape)
    sub = Window(window.center, 2 * L)
    out = np.empty(len(bits), dtype=bool)
    for i, g in enumerate(bits):
        out[i] = crossing_grid(_restrict(g, window, sub), L)
    return out


def connectivity(configs, x, origin=None) -> Estimate:
    """Fraction of configurations in which ``origin`` and ``x`` share an open cluster.

    Both points must keep a sup-distance of at least ``|x - origin|_inf`` to
    the window boundary; the margin is recorded in ``meta``.
    """
    configs = list(configs)
    if not configs:
        raise ArgumentError("need at least one configuration")
    window = configs[0].window
    x = np.asarray(as_point(x), dtype=np.int64)
    o = np.zeros_like(x) if origin is None else np.asarray(as_point(origin), dtype=np.int64)
    dist = int(np.max(np.abs(x - o)))
    centre = np.asarray(window.center)
    margin = window.radius - int(max(np.max(np.abs(x - centre)), np.max(np.abs(o - centre))))
    if margin < dist:
        raise ArgumentError(f"boundary margin {margin} < |x|_inf = {dist}")
    ix, io_ = window.index(x), window.index(o)
    hits = np.zeros(len(configs), dtype=bool)
    for k, c in enumerate(configs):
        if c.window != window:
            raise ArgumentError("all configurations must share a window")
        if not (c.bits[ix] and c.bits[io_]):
            continue
        roots = component_roots(c.grid)
        hits[k] = roots[ix] == roots[io_]
    return proportion(hits, margin=margin)


def spanning_count(c: SiteConfig) -> int:
    """Number of clusters touching two opposite faces of the window."""
    cl = label_clusters(c)
    d = c.window.d
    return sum(1 for faces in cl.touching_faces.values()
               if any((a, -1) in faces and (a, 1) in faces for a in range(d)))


def cluster_stats_csv(configs, L: int | None = None) -> str:
    """CSV rows: sample id, cluster count, max size, spanning count, crossing flag."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sample", "clusters", "max_size", "spanning", "crossing"])
    for i, c in enumerate(configs):
        cl = label_clusters(c)
        cross = "" if L is None else int(crossing(c, L))
        w.writerow([i, cl.count, cl.max_size, spanning_count(c), cross])
    return buf.getvalue()
