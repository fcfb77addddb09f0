"""Potential theory of simple random walk on Z^d for d >= 3.

The Green function is tabulated by Fourier quadrature on the positive orthant
``{0..R}^d`` (it is even in every coordinate) and looked up by absolute
value. Points beyond the tabulated radius fall back to the large-distance
expansion, which is accurate to ~1e-7 relative at distance 20 in d = 3.
"""
from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, field
from functools import reduce

import numpy as np
import scipy.linalg
from numpy.polynomial.legendre import leggauss
from scipy.special import gamma

from . import kernels
from .errors import ArgumentError, ConfigurationError, DomainError, NumericalError
from .lattice import Window, as_point
from .rng import bit_generator
from .stats import Estimate

DEFAULT_TOL = 1e-10
DEFAULT_ORDER = 12
TABLE_MAX_RADIUS = 48
# elements of the weight tensor materialized at once
_CHUNK_ELEMENTS = 4_000_000


# ---------------------------------------------------------------------------
# Green function


def _composite(lo, hi, nsub, node, wt):
    edges = np.linspace(lo, hi, nsub + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * (edges[1:] - edges[:-1])
    k = (mid[:, None] + half[:, None] * node[None, :]).ravel()
    w = (half[:, None] * wt[None, :]).ravel()
    return k, w


def _subcube(ks, ws, cos_tables, d):
    """Contract ``prod(w) / F(k)`` against ``prod cos(k_j x_j)`` over one subcube."""
    rest = int(np.prod([len(k) for k in ks[1:]])) if d > 1 else 1
    chunk = max(1, _CHUNK_ELEMENTS // max(rest, 1))
    out = 0.0
    for s in range(0, len(ks[0]), chunk):
        kk = [ks[0][s:s + chunk]] + list(ks[1:])
        ww = [ws[0][s:s + chunk]] + list(ws[1:])
        grids = np.meshgrid(*kk, indexing="ij", sparse=True)
        wgrids = np.meshgrid(*ww, indexing="ij", sparse=True)
        F = sum(np.sin(0.5 * g) ** 2 for g in grids) * (2.0 / d)
        T = reduce(np.multiply, wgrids) / F
        T = np.tensordot(T, cos_tables[0][s:s + chunk], axes=([0], [0]))
        for ax in range(1, d):
            T = np.tensordot(T, cos_tables[ax], axes=([0], [0]))
        out = out + T
    return out


def fourier_green_table(radius: int, d: int = 3, tol: float = DEFAULT_TOL,
                        order: int = DEFAULT_ORDER):
    """Tabulate ``g(x)`` for ``x`` in ``{0..radius}^d``.

    Uses ``g(x) = pi^-d * int_{[0,pi]^d} prod_j cos(k_j x_j) / F(k) dk`` with
    ``F(k) = (2/d) sum_j sin^2(k_j / 2)``. The cube is split into dyadic
    shells around the singular corner ``k = 0``; each shell is integrated
    with a tensor composite Gauss-Legendre rule fine enough to resolve the
    oscillation ``cos(k x)``. Refinement stops once a whole shell contributes
    less than ``tol / 10`` and the remaining shells are summed as a geometric
    series (their contributions shrink by ``2^(2-d)``).

    Returns
    -------
    table : ndarray of shape ``(radius + 1,) * d``
    shells : int
        Number of dyadic shells integrated.
    """
    if d < 3:
        raise DomainError(f"simple random walk is recurrent in d={d}; g is infinite")
    if radius < 0:
        raise ArgumentError("radius must be non-negative")
    node, wt = leggauss(order)
    xs = np.arange(radius + 1, dtype=float)
    out = np.zeros((radius + 1,) * d)
    a = math.pi
    m = 0
    ratio = 2.0 ** (2 - d)
    while True:
        half = 0.5 * a
        nsub = max(1, math.ceil(radius * half / 3.0))
        lo = _composite(0.0, half, nsub, node, wt)
        hi = _composite(half, a, nsub, node, wt)
        cos_lo = np.cos(np.outer(lo[0], xs))
        cos_hi = np.cos(np.outer(hi[0], xs))
        shell = np.zeros_like(out)
        for pattern in itertools.product((0, 1), repeat=d):
            if not any(pattern):
                continue
            ks = [hi[0] if p else lo[0] for p in pattern]
            ws = [hi[1] if p else lo[1] for p in pattern]
            cs = [cos_hi if p else cos_lo for p in pattern]
            shell += _subcube(ks, ws, cs, d)
        out += shell
        m += 1
        if m > 4 and np.max(np.abs(shell)) / math.pi ** d < tol / 10:
            out += shell * ratio / (1.0 - ratio)
            break
        a = half
        if m > 200:  # pragma: no cover - cannot happen for d >= 3
            raise NumericalError("Green quadrature did not converge")
    out /= math.pi ** d
    # exact symmetry under coordinate permutations; averaging removes rounding asymmetry
    perms = list(itertools.permutations(range(d)))
    out = sum(np.transpose(out, p) for p in perms) / len(perms)
    # the summation order differs between entries; read every entry from its sorted representative
    idx = np.sort(np.indices(out.shape), axis=0)
    out = out[tuple(idx)]
    return out, m


def asymptotic_green(x, d: int = 3) -> np.ndarray:
    """Large-distance expansion of ``g``.

    In d = 3 two terms are used,
    ``3/(2 pi r) + 3/(16 pi r^3) * (5 sum x_j^4 / r^4 - 3)``;
    in other dimensions only the leading ``c_d |x|^(2-d)``.
    """
    x = np.asarray(x, dtype=float)
    r = np.sqrt(np.sum(x * x, axis=-1))
    with np.errstate(divide="ignore", invalid="ignore"):
        if d == 3:
            q = np.sum(x ** 4, axis=-1) / r ** 4
            return 3.0 / (2 * math.pi * r) + 3.0 / (16 * math.pi * r ** 3) * (5 * q - 3)
        c = 0.5 * d * gamma(0.5 * d - 1) * math.pi ** (-0.5 * d)
        return c * r ** (2.0 - d)


class GreenTable:
    """Immutable table of ``g(x)`` for ``|x|_inf <= radius``.

    Parameters
    ----------
    d : int
        Dimension, at least 3.
    radius : int
        Tabulated sup-norm radius. Lookups beyond it use
        :func:`asymptotic_green`.
    tol : float
        Absolute quadrature tolerance.
    """

    def __init__(self, d: int = 3, radius: int = 8, tol: float = DEFAULT_TOL,
                 quadrature_order: int = DEFAULT_ORDER):
        if d < 3:
            raise DomainError(f"simple random walk is recurrent in d={d}; g is infinite")
        if radius > TABLE_MAX_RADIUS:
            raise ConfigurationError(f"table radius {radius} exceeds {TABLE_MAX_RADIUS}")
        self.d = d
        self.radius = int(radius)
        self.tol = float(tol)
        self.quadrature_order = int(quadrature_order)
        values, self.shells = fourier_green_table(self.radius, d, tol, quadrature_order)
        values.setflags(write=False)
        self.values = values

    @property
    def g0(self) -> float:
        return float(self.values[(0,) * self.d])

    def covers(self, x) -> bool:
        return bool(np.all(np.max(np.abs(np.asarray(x)), axis=-1) <= self.radius))

    def __call__(self, x):
        """``g(x)`` for a point or an ``(..., d)`` array of points."""
        x = np.abs(np.asarray(x, dtype=np.int64))
        if x.shape[-1] != self.d:
            raise ArgumentError(f"expected points of dimension {self.d}")
        inside = np.max(x, axis=-1) <= self.radius
        if np.all(inside):
            out = self.values[tuple(np.moveaxis(x, -1, 0))]
        else:
            out = np.empty(x.shape[:-1])
            out[inside] = self.values[tuple(np.moveaxis(x[inside], -1, 0))]
            out[~inside] = asymptotic_green(x[~inside], self.d)
        return float(out) if np.ndim(out) == 0 else out

    def gram(self, sites: np.ndarray, rows: slice | None = None) -> np.ndarray:
        """Matrix ``g(x_i - x_j)``; optionally only the rows in ``rows``."""
        sites = np.asarray(sites, dtype=np.int64)
        left = sites if rows is None else sites[rows]
        out = np.empty((len(left), len(sites)))
        step = max(1, _CHUNK_ELEMENTS // max(1, len(sites)))
        for s in range(0, len(left), step):
            diff = left[s:s + step, None, :] - sites[None, :, :]
            out[s:s + step] = self(diff)
        return out

    def sphere_max(self, rho: int) -> float:
        """``max g(z)`` over ``|z|_inf = rho``.

        ``g`` is harmonic away from the origin and vanishes at infinity, so
        by the maximum principle this also bounds ``g`` on ``|z|_inf >= rho``.
        """
        if rho <= 0:
            return self.g0
        face = np.stack(np.meshgrid(*([np.arange(rho + 1)] * (self.d - 1)), indexing="ij"),
                        axis=-1).reshape(-1, self.d - 1)
        pts = np.concatenate([np.full((len(face), 1), rho), face], axis=1)
        return float(np.max(self(pts)))

    def harmonic_residual(self) -> float:
        """Largest violation of the discrete harmonic identities inside the table."""
        d, R = self.d, self.radius
        if R < 1:
            return 0.0
        g = self.values
        # extend by symmetry to [-1, R] so neighbours of 0-coordinates are available
        ext = np.pad(g, [(1, 0)] * d, mode="reflect")
        lap = np.zeros((R,) * d)
        core = (slice(1, R + 1),) * d
        for a in range(d):
            for s in (-1, 1):
                idx = list(core)
                idx[a] = slice(1 + s, R + 1 + s)
                lap += ext[tuple(idx)]
        res = ext[core] - lap / (2 * d)
        res[(0,) * d] -= 1.0
        return float(np.max(np.abs(res)))

    def to_csv(self, fh=None) -> str:
        """Write ``x_1..x_d, g`` for the canonical points ``x_1 >= ... >= x_d >= 0``."""
        buf = fh if fh is not None else io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"x{i + 1}" for i in range(self.d)] + ["g"])
        for x in itertools.combinations_with_replacement(range(self.radius + 1), self.d):
            x = x[::-1]
            w.writerow(list(x) + [repr(float(self.values[x]))])
        return buf.getvalue() if fh is None else ""


_TABLES: dict = {}


def green_table(d: int = 3, radius: int = 8, tol: float = DEFAULT_TOL) -> GreenTable:
    """Cached :class:`GreenTable` covering at least ``radius``."""
    key = (d, tol)
    tab = _TABLES.get(key)
    if tab is None or tab.radius < radius:
        tab = GreenTable(d, radius, tol)
        _TABLES[key] = tab
    return tab


def green(x, d: int = 3, tol: float = DEFAULT_TOL) -> float:
    """Green function ``g(x)`` of simple random walk on Z^d by Fourier quadrature."""
    if d < 3:
        raise DomainError(f"simple random walk is recurrent in d={d}; g is infinite")
    x = as_point(x)
    if len(x) != d:
        raise ArgumentError(f"point {x} is not {d}-dimensional")
    r = max(abs(v) for v in x)
    if r > TABLE_MAX_RADIUS:
        raise ConfigurationError(f"|x|_inf = {r} is beyond the quadrature range {TABLE_MAX_RADIUS}")
    return green_table(d, max(r, 1), tol)(x)


def green_linear_solve(box_radius: int = 60, out_radius: int = 5, d: int = 3,
                       boundary: str = "asymptotic", tol: float = 1e-13) -> np.ndarray:
    """Independent oracle: solve ``g - P g = delta_0`` on a finite box.

    The box ``B(0, box_radius)`` carries Dirichlet data on its boundary:
    either the large-distance expansion (``"asymptotic"``) or zero
    (``"absorbing"``, which gives the killed Green function and converges
    only like ``1/box_radius``). Returns ``g`` on ``{0..out_radius}^d``.
    """
    import scipy.sparse as sp

    R = int(box_radius)
    if boundary not in ("asymptotic", "absorbing"):
        raise ArgumentError(f"unknown boundary {boundary!r}")
    side = 2 * R + 1
    inner = side - 2
    n = inner ** d
    coords = np.stack(np.unravel_index(np.arange(n), (inner,) * d), axis=1) - (R - 1)
    strides = np.array([inner ** (d - 1 - a) for a in range(d)])
    rows, cols = [np.arange(n)], [np.arange(n)]
    vals = [np.ones(n)]
    b = np.zeros(n)
    b[int(np.dot(np.full(d, R - 1), strides))] = 1.0
    for a in range(d):
        for s in (-1, 1):
            nb = coords.copy()
            nb[:, a] += s
            ok = np.abs(nb[:, a]) <= R - 1
            src = np.nonzero(ok)[0]
            rows.append(src)
            cols.append(src + s * strides[a])
            vals.append(np.full(len(src), -1.0 / (2 * d)))
            if boundary == "asymptotic":
                out = np.nonzero(~ok)[0]
                np.add.at(b, out, asymptotic_green(nb[out], d) / (2 * d))
    A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n))
    try:
        import pyamg
    except ImportError:  # pragma: no cover - optional dependency
        from scipy.sparse.linalg import cg
        sol, info = cg(A, b, rtol=tol, maxiter=20000)
        if info != 0:
            raise NumericalError("conjugate gradient did not converge")
    else:
        ml = pyamg.smoothed_aggregation_solver(A, symmetry="symmetric")
        sol = ml.solve(b, tol=tol, accel="cg", maxiter=500)
    full = sol.reshape((inner,) * d)
    sl = (slice(R - 1, R - 1 + out_radius + 1),) * d
    return full[sl].copy()


# ---------------------------------------------------------------------------
# equilibrium measure and capacity


@dataclass(frozen=True)
class EquilibriumMeasure:
    """Equilibrium measure ``e`` of a finite set ``K``.

    ``K`` is an ``(m, d)`` array; ``e[i]`` is the weight of ``K[i]``.
    """

    K: np.ndarray
    e: np.ndarray
    cap: float
    jitter: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def normalized(self) -> np.ndarray:
        return self.e / self.cap

    @property
    def support(self) -> np.ndarray:
        return self.K[self.e > 0]

    def weight(self, x) -> float:
        x = np.asarray(as_point(x), dtype=np.int64)
        hit = np.nonzero(np.all(self.K == x, axis=1))[0]
        return float(self.e[hit[0]]) if len(hit) else 0.0


def as_point_set(K) -> np.ndarray:
    """Convert a window, a point or an iterable of points to a unique ``(m, d)`` array."""
    if isinstance(K, Window):
        return K.sites()
    arr = np.asarray(K, dtype=np.int64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2 or len(arr) == 0:
        raise ArgumentError("K must be a nonempty finite set of points")
    arr = np.unique(arr, axis=0)
    return arr


def inner_boundary(K) -> np.ndarray:
    """Boolean mask over ``as_point_set(K)`` of sites with a neighbour outside ``K``."""
    pts = as_point_set(K)
    d = pts.shape[1]
    lo = pts.min(axis=0) - 1
    shape = tuple(pts.max(axis=0) - lo + 2)
    occ = np.zeros(shape, dtype=bool)
    loc = pts - lo
    occ[tuple(loc.T)] = True
    mask = np.zeros(len(pts), dtype=bool)
    for a in range(d):
        for s in (-1, 1):
            nb = loc.copy()
            nb[:, a] += s
            mask |= ~occ[tuple(nb.T)]
    return mask


def _cholesky_solve(gram: np.ndarray, rhs: np.ndarray):
    jitter = 0.0
    try:
        factor = scipy.linalg.cho_factor(gram, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        jitter = 1e-12
        try:
            factor = scipy.linalg.cho_factor(gram + jitter * np.eye(len(gram)), lower=True,
                                             check_finite=False)
        except np.linalg.LinAlgError:
            cond = float(np.linalg.cond(gram))
            raise NumericalError(f"Gram matrix is not positive definite (condition ~ {cond:.3g})",
                                 condition=cond) from None
    return scipy.linalg.cho_solve(factor, rhs, check_finite=False), jitter, factor


def equilibrium(K, G: GreenTable, reduce_to_boundary: bool = True,
                clip_tol: float = 1e-10) -> EquilibriumMeasure:
    """Solve ``sum_y g(x - y) e(y) = 1`` for ``x`` in ``K``.

    With ``reduce_to_boundary`` the system is solved on the inner boundary
    only, which gives the same measure (a walk entering ``K`` first hits
    the inner boundary) at a fraction of the cost; interior weights are then
    exactly zero. Entries below ``clip_tol`` are set to zero.
    """
    pts = as_point_set(K)
    if pts.shape[1] != G.d:
        raise ArgumentError("dimension of K does not match the Green table")
    if reduce_to_boundary:
        sel = np.nonzero(inner_boundary(pts))[0]
    else:
        sel = np.arange(len(pts))
    gram = G.gram(pts[sel])
    sol, jitter, _ = _cholesky_solve(gram, np.ones(len(sel)))
    resid = float(np.max(np.abs(gram @ sol - 1.0)))
    if resid > 1e-6:
        cond = float(np.linalg.cond(gram))
        raise NumericalError(f"equilibrium solve residual {resid:.3g} (condition ~ {cond:.3g})",
                             condition=cond)
    if np.min(sol) < -1e-6:
        raise NumericalError(f"equilibrium solve produced weight {np.min(sol):.3g} < 0")
    sol[sol < clip_tol] = 0.0
    e = np.zeros(len(pts))
    e[sel] = sol
    cap = float(e.sum())
    return EquilibriumMeasure(pts, e, cap, jitter, {"residual": resid, "solved_sites": len(sel)})


def capacity(K, G: GreenTable) -> float:
    """``cap(K)``, the total mass of the equilibrium measure."""
    return equilibrium(K, G).cap


def hitting_probability(y, em: EquilibriumMeasure, G: GreenTable):
    """``P_y[H_K < inf] = sum_x g(y - x) e(x)`` for one point or an array of points."""
    y = np.asarray(y, dtype=np.int64)
    single = y.ndim == 1
    y = y.reshape(-1, em.K.shape[1])
    supp = em.e > 0
    vals = G(y[:, None, :] - em.K[supp][None, :, :]) @ em.e[supp]
    return float(vals[0]) if single else vals


def kill_bias_bound(K, kill_radius: int, G: GreenTable, cap: float | None = None,
                    center=None) -> float:
    """Bound on the probability that a walk stopped at ``S(center, kill_radius)`` returns to ``K``.

    Uses ``P_y[H_K < inf] <= cap(K) * max_{|z|_inf >= rho} g(z)`` with
    ``rho = kill_radius - max_{x in K} |x - center|_inf``.
    """
    pts = as_point_set(K)
    c = np.zeros(pts.shape[1], dtype=np.int64) if center is None else np.asarray(center)
    reach = int(np.max(np.abs(pts - c)))
    rho = int(kill_radius) - reach
    if rho < 1:
        raise ConfigurationError(f"kill radius {kill_radius} must exceed the extent {reach} of K")
    if cap is None:
        cap = capacity(pts, G)
    return float(cap * G.sphere_max(rho))


def smallest_kill_radius(K, G: GreenTable, target: float = 1e-4, max_radius: int = 500,
                         cap: float | None = None) -> int:
    """Smallest kill radius whose bias bound is at most ``target``.

    Raises
    ------
    ConfigurationError
        If no radius up to ``max_radius`` reaches the target.
    """
    pts = as_point_set(K)
    if cap is None:
        cap = capacity(pts, G)
    reach = int(np.max(np.abs(pts)))
    lo, hi = reach + 1, max_radius
    if kill_bias_bound(pts, hi, G, cap) > target:
        raise ConfigurationError(
            f"bias target {target:g} needs a kill radius beyond {max_radius}; "
            "pass an explicit kill radius and accept the reported bias")
    while lo < hi:
        mid = (lo + hi) // 2
        if kill_bias_bound(pts, mid, G, cap) <= target:
            hi = mid
        else:
            lo = mid + 1
    return lo


def escape_probability_mc(x, K, n: int, seed, kill_radius: int | None = None,
                          G: GreenTable | None = None, bias_tol: float | None = None,
                          max_radius: int = 500) -> Estimate:
    """Monte Carlo estimate of ``P_x[walk never returns to K]``.

    Walks start at ``x`` and count as escaped when they reach
    ``S(0, kill_radius)`` before re-entering ``K``. The estimate is biased
    upward by at most :func:`kill_bias_bound`, reported as ``bias``. When
    ``kill_radius`` is omitted it is chosen by :func:`smallest_kill_radius`
    for ``bias_tol`` (default 1e-4).
    """
    pts = as_point_set(K)
    d = pts.shape[1]
    x = np.asarray(as_point(x), dtype=np.int64)
    if not np.any(np.all(pts == x, axis=1)):
        raise ArgumentError("starting point must belong to K")
    if G is None:
        G = green_table(d, 8)
    cap = capacity(pts, G)
    if kill_radius is None:
        kill_radius = smallest_kill_radius(pts, G, 1e-4 if bias_tol is None else bias_tol,
                                           max_radius, cap)
    bias = kill_bias_bound(pts, kill_radius, G, cap)
    if bias_tol is not None and bias > bias_tol:
        raise ConfigurationError(f"kill radius {kill_radius} gives bias {bias:.3g} > {bias_tol:g}")
    R = int(kill_radius)
    side = 2 * R + 1
    mask = np.zeros(side ** d, dtype=np.uint8)
    mask[np.ravel_multi_index(tuple((pts + R).T), (side,) * d)] = 1
    esc = kernels.escape_walks(d, R, x, mask, int(n), bit_generator(seed))
    p = esc / n if n else float("nan")
    se = math.sqrt(max(p * (1 - p), 0.0) / n) if n else float("nan")
    return Estimate(p, se, int(n), bias, {"kill_radius": R, "escaped": int(esc)})


def visit_probability_check(n: int, samples: int, seed, d: int = 3, kill_radius: int = 40,
                            G: GreenTable | None = None) -> Estimate:
    """Monte Carlo estimate of ``P_0[walk visits 0 at least n + 1 times]``.

    The count includes time 0, so the event is "at least ``n`` returns".
    Walks are stopped at ``S(0, kill_radius)``; each missed return has
    probability at most ``max_{|y|=R} g(y) / g(0)``, so the estimate is low
    by at most ``n`` times that, reported as ``bias``.
    """
    if n < 0:
        raise ArgumentError("n must be non-negative")
    if d < 3:
        raise DomainError("visit probabilities need a transient walk (d >= 3)")
    if n == 0:
        return Estimate(1.0, 0.0, int(samples), 0.0, {"kill_radius": kill_radius})
    if G is None:
        G = green_table(d, min(kill_radius, 8))
    counts = kernels.return_counts(d, int(kill_radius), int(samples), bit_generator(seed))
    p = float(np.mean(counts >= n))
    se = math.sqrt(p * (1 - p) / samples)
    bias = n * G.sphere_max(kill_radius) / G.g0
    return Estimate(p, se, int(samples), bias, {"kill_radius": kill_radius})
