"""Multi-scale renormalization: scale sequences, proper embeddings, bad-vertex cascades.

Vertices of the level-``n`` lattice are the points of ``L_n Z^d``; the box
of ``x`` at level ``n`` is ``x + [0, L_n)^d``. A proper embedding of the
binary tree of depth ``n`` with root ``x`` places the two children of a
node at level ``k`` inside the node's box, on the level ``n-k-1`` lattice,
at sup-distance larger than ``L_{n-k}/r``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ArgumentError, CapacityError, ConfigurationError
from .gff import union_bound_p0
from .lattice import ScaleSystem, as_point, box_index
from .rng import seed_id
from .stats import Estimate, proportion

B_CONST = 3.0 / (1.0 - math.exp(-1.0))
TAIL_TOL = 1e-12


def c3(N: int, d: int) -> int:
    """Separation constant ``4 (N 4^d + 1)`` of the geometric lemma."""
    if N < 1 or d < 1:
        raise ArgumentError("N and d must be positive")
    return 4 * (N * 4 ** d + 1)


def K0_default(l0: int, d: int) -> float:
    return math.log(2.0) + 2 * d * math.log(l0) + B_CONST


def _require_strict(scale: ScaleSystem):
    if scale.r < 10 or scale.l0 < max(100, 2 * scale.r):
        raise ConfigurationError(
            f"scheme needs r >= 10 and l0 >= max(100, 2r); got r={scale.r}, l0={scale.l0}")


@dataclass(frozen=True)
class RenormSequences:
    scale: ScaleSystem
    c1: float
    c2: float
    h0: float
    B: float
    K0: float
    M: np.ndarray
    beta: np.ndarray
    h: np.ndarray
    dh: np.ndarray
    h_inf: float
    tail_bound: float
    meta: dict = field(default_factory=dict)

    @property
    def n_max(self) -> int:
        return len(self.h) - 1

    def to_dict(self) -> dict:
        s = self.scale
        return {"L0": s.L0, "l0": s.l0, "r": s.r, "d": s.d, "c1": self.c1, "c2": self.c2,
                "h0": self.h0, "B": self.B, "K0": self.K0, "M": self.M.tolist(),
                "beta": self.beta.tolist(), "h": self.h.tolist(), "dh": self.dh.tolist(),
                "h_inf": self.h_inf,
                "tail_bound": self.tail_bound}


def _M(n, scale: ScaleSystem, c2: float) -> float:
    return c2 * math.sqrt(n * math.log(2.0) + scale.d * math.log(scale.L0))


def _beta(n, scale: ScaleSystem, c2: float, K0: float) -> float:
    return (math.sqrt(math.log(2.0)) + _M(n, scale, c2)
            + 2.0 ** ((n + 1) / 2) * (math.sqrt(n) + math.sqrt(K0)))


def build_sequences(scale: ScaleSystem, c1: float = 1.0, c2: float = 1.0, h0: float = 1.0,
                    n_max: int = 20, K0: float | None = None, strict: bool = True
                    ) -> RenormSequences:
    """Deterministic sequences ``M(n)``, ``beta_n``, ``h_n`` and the limit ``h_inf``.

    ``h_inf`` is the partial sum plus a certified geometric tail: for
    ``n >= N`` consecutive increments have ratio at most
    ``q sqrt(2 (1 + 1/N))`` with ``q = 2 l0^-(d-2)``, and summation continues
    until the tail bound is below 1e-12.

    Raises
    ------
    ConfigurationError
        If ``4 l0^-(d-2) >= 1`` or (with ``strict``) the scale violates the
        scheme's hypotheses.
    """
    if h0 <= 0:
        raise ArgumentError("h0 must be positive")
    if c1 <= 0 or c2 <= 0:
        raise ArgumentError("c1 and c2 must be positive")
    if strict:
        _require_strict(scale)
    d, l0, r = scale.d, scale.l0, scale.r
    q = 2.0 * float(l0) ** (-(d - 2))
    if 2.0 * q >= 1.0:
        raise ConfigurationError(f"4 l0^-(d-2) = {2 * q:g} >= 1; the h_n series is not controlled")
    K0 = K0_default(l0, d) if K0 is None else float(K0)
    M = np.array([_M(n, scale, c2) for n in range(n_max + 1)])
    beta = np.array([_beta(n, scale, c2, K0) for n in range(n_max + 1)])
    inc = lambda n: c1 * _beta(n, scale, c2, K0) * r ** (d - 2) * q ** (n + 1)  # noqa: E731
    dh = np.array([inc(n) for n in range(n_max)])
    h = np.empty(n_max + 1)
    h[0] = h0
    for n in range(n_max):
        h[n + 1] = h[n] + dh[n]
    total = h[-1]
    N = n_max
    while True:
        ratio = q * math.sqrt(2.0 * (1.0 + 1.0 / max(N, 1)))
        t = inc(N)
        if ratio < 1.0:
            tail = t / (1.0 - ratio)
            if tail < TAIL_TOL:
                break
        total += t
        N += 1
        if N > 10_000:  # pragma: no cover - guarded by the q check
            raise ConfigurationError("h_n series converges too slowly")
    return RenormSequences(scale, c1, c2, h0, B_CONST, K0, M, beta, h, dh, float(total + tail),
                           float(tail), {"terms": N})


def u_infinity(alpha: float, h_inf: float) -> float:
    """Scheme-derived level with ``sqrt(u/2) = sqrt(2 alpha) + h_inf`` (not a certified value)."""
    if alpha < 0:
        raise ArgumentError("alpha must be non-negative")
    return 2.0 * (math.sqrt(2.0 * alpha) + h_inf) ** 2


# ---------------------------------------------------------------------------
# propagation


@dataclass(frozen=True)
class PropagationReport:
    log_q: np.ndarray
    log_bound: np.ndarray
    passed: np.ndarray

    @property
    def all_pass(self) -> bool:
        return bool(np.all(self.passed))

    @property
    def first_failure(self) -> int | None:
        bad = np.nonzero(~self.passed)[0]
        return int(bad[0]) if len(bad) else None

    def to_dict(self) -> dict:
        return {"log_q": [float(v) for v in self.log_q],
                "log_bound": [float(v) for v in self.log_bound],
                "passed": [bool(v) for v in self.passed], "all_pass": self.all_pass}


def propagate(q0: float, seq: RenormSequences, n_max: int | None = None) -> PropagationReport:
    """Iterate ``q_{n+1} = q_n^2 + 3 exp(-(beta_n - M(n))^2)`` and compare with ``exp(-(K0-B) 2^n)``.

    Computed in log space so that the doubly exponential bounds do not
    underflow.
    """
    if seq.K0 < seq.B:
        raise ConfigurationError(f"K0 = {seq.K0:g} < B = {seq.B:g}")
    if not 0 <= q0:
        raise ArgumentError("q0 must be non-negative")
    n_max = seq.n_max if n_max is None else n_max
    log_q = np.empty(n_max + 1)
    log_q[0] = math.log(q0) if q0 > 0 else -math.inf
    for n in range(n_max):
        gap = _beta(n, seq.scale, seq.c2, seq.K0) - _M(n, seq.scale, seq.c2)
        log_q[n + 1] = np.logaddexp(2 * log_q[n], math.log(3.0) - gap * gap)
    log_bound = -(seq.K0 - seq.B) * 2.0 ** np.arange(n_max + 1)
    # one ulp of slack for q0 = exp(-K0) exactly at the n = 0 comparison
    passed = log_q <= log_bound + 1e-12 * np.maximum(1.0, np.abs(log_bound))
    return PropagationReport(log_q, log_bound, passed)


# ---------------------------------------------------------------------------
# embeddings


def _children_grid(y, m: int, scale: ScaleSystem) -> np.ndarray:
    """Points of the level ``m-1`` lattice inside the level ``m`` box of ``y``."""
    step = scale.L(m - 1)
    axes = [c + step * np.arange(scale.l0) for c in y]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([a.ravel() for a in mesh], axis=1)


def separated_pair_count(scale: ScaleSystem) -> int:
    """Ordered pairs in ``{0..l0-1}^d`` at sup-distance larger than ``l0 / r``."""
    l0, d = scale.l0, scale.d
    i = np.arange(l0)
    close = int(np.sum(np.abs(i[:, None] - i[None, :]) * scale.r <= l0))
    return l0 ** (2 * d) - close ** d


def embedding_count_recursive(n: int, scale: ScaleSystem) -> int:
    """Number of proper embeddings from the pair recursion ``c_n = P c_{n-1}^2``."""
    if n < 0:
        raise ArgumentError("n must be non-negative")
    P = separated_pair_count(scale)
    c = 1
    for _ in range(n):
        c = P * c * c
    return c


def embedding_bound(n: int, scale: ScaleSystem) -> int:
    return (scale.l0 ** (2 * scale.d)) ** (2 ** n)


@dataclass(frozen=True)
class Embedding:
    """A map from tree nodes (0/1 tuples, root ``()``) to lattice points."""

    depth: int
    root: tuple
    nodes: dict

    def leaves(self) -> list:
        return [self.nodes[m] for m in itertools.product((0, 1), repeat=self.depth)]

    def is_proper(self, scale: ScaleSystem) -> bool:
        n = self.depth
        if self.nodes.get(()) != self.root:
            return False
        for k in range(n):
            for m in itertools.product((0, 1), repeat=k):
                y = self.nodes[m]
                a, b = self.nodes[m + (0,)], self.nodes[m + (1,)]
                Lc = scale.L(n - k - 1)
                Lb = scale.L(n - k)
                for z in (a, b):
                    if any(c % Lc for c in z):
                        return False
                    if any(not (yi <= zi < yi + Lb) for yi, zi in zip(y, z)):
                        return False
                if max(abs(p - q) for p, q in zip(a, b)) * scale.r <= Lb:
                    return False
        return True


def _embed(n: int, x: tuple, scale: ScaleSystem, prefix: tuple):
    if n == 0:
        yield {prefix: x}
        return
    kids = [tuple(int(v) for v in p) for p in _children_grid(x, n, scale)]
    Ln = scale.L(n)
    for a in kids:
        for b in kids:
            if max(abs(p - q) for p, q in zip(a, b)) * scale.r <= Ln:
                continue
            for left in _embed(n - 1, a, scale, prefix + (0,)):
                for right in _embed(n - 1, b, scale, prefix + (1,)):
                    nodes = {prefix: x}
                    nodes.update(left)
                    nodes.update(right)
                    yield nodes


def iter_embeddings(n: int, x, scale: ScaleSystem, budget: int = 2_000_000):
    """Exhaustively generate the proper embeddings with root ``x``.

    Raises
    ------
    CapacityError
        If the number of embeddings would exceed ``budget``.
    """
    x = as_point(x)
    if len(x) != scale.d:
        raise ArgumentError("root has the wrong dimension")
    if box_index(x, n, scale) != x:
        raise ArgumentError(f"root {x} is not a level-{n} vertex")
    expected = embedding_count_recursive(n, scale)
    if expected > budget:
        raise CapacityError(f"{expected} embeddings exceed the enumeration budget {budget}")
    for nodes in _embed(n, x, scale, ()):
        yield Embedding(n, x, nodes)


def enumerate_embeddings(n: int, x, scale: ScaleSystem, budget: int = 2_000_000) -> int:
    """Exact number of proper embeddings of depth ``n`` rooted at ``x``, by enumeration."""
    return sum(1 for _ in iter_embeddings(n, x, scale, budget))


# ---------------------------------------------------------------------------
# bad vertices


@dataclass(frozen=True)
class BadConfig:
    """Per-vertex bitmask of bad types on a rectangle of the level-0 lattice.

    ``bits[idx]`` belongs to the vertex ``origin + L0 * idx``; bit ``i - 1``
    is set when the vertex is bad of type ``i``.
    """

    scale: ScaleSystem
    origin: tuple
    bits: np.ndarray
    N: int

    def __post_init__(self):
        if self.N < 1:
            raise ArgumentError("N must be at least 1")
        b = np.asarray(self.bits, dtype=np.uint8)
        if b.ndim != self.scale.d:
            raise ArgumentError("bits must have one axis per dimension")
        object.__setattr__(self, "bits", b)
        object.__setattr__(self, "origin", as_point(self.origin))
        if any(c % self.scale.L0 for c in self.origin):
            raise ArgumentError("origin must be a level-0 vertex")

    def type_mask(self, i: int) -> np.ndarray:
        return (self.bits >> (i - 1)) & 1 == 1

    def any_mask(self) -> np.ndarray:
        return self.bits != 0

    def local(self, x) -> np.ndarray:
        """Level-0 grid index of the vertex ``x``."""
        return (np.asarray(as_point(x)) - np.asarray(self.origin)) // self.scale.L0

    def covers(self, lo, hi) -> bool:
        """Whether vertices ``lo .. hi`` (inclusive, level-0 points) lie in the rectangle."""
        a, b = self.local(lo), self.local(hi)
        return bool(np.all(a >= 0) and np.all(b < np.asarray(self.bits.shape)))


def from_bool(scale: ScaleSystem, origin, masks, N: int | None = None) -> BadConfig:
    """Assemble a :class:`BadConfig` from one boolean grid per type."""
    masks = [np.asarray(m, dtype=bool) for m in masks]
    bits = np.zeros(masks[0].shape, dtype=np.uint8)
    for i, m in enumerate(masks):
        bits |= m.astype(np.uint8) << i
    return BadConfig(scale, origin, bits, len(masks) if N is None else N)


def _block_reduce(field_grid: np.ndarray, L0: int, how) -> np.ndarray:
    d = field_grid.ndim
    shp = field_grid.shape
    if any(s % L0 for s in shp):
        raise ArgumentError(f"region sides {shp} are not multiples of L0={L0}")
    split = []
    for s in shp:
        split += [s // L0, L0]
    return how(field_grid.reshape(split), axis=tuple(range(1, 2 * d, 2)))


def type3_threshold(alpha: float, u: float) -> float:
    return 0.5 * (math.sqrt(2.0 * alpha) + math.sqrt(u / 2.0)) ** 2


def classify_bad(fields: dict, params: dict, scale: ScaleSystem, origin=None,
                 types=(1, 2, 3)) -> BadConfig:
    """Level-0 bad types from fields on a rectangle of ``Z^d``.

    ``fields`` holds ``"phi"`` and, for type 3, ``"L"`` (occupation times),
    each an array whose sides are multiples of ``L0``; element ``idx``
    belongs to the site ``origin + idx``. ``params`` holds ``"h"`` for
    types 1 and 2 and ``"alpha"``, ``"u"`` for type 3.

    Type 1: ``max phi >= h`` on the vertex box; type 2: ``min phi <= -h``;
    type 3: ``min (L + phi^2 / 2) < (sqrt(2 alpha) + sqrt(u/2))^2 / 2``.
    """
    phi = np.asarray(fields["phi"], dtype=float)
    if phi.ndim != scale.d:
        raise ArgumentError("phi must have one axis per dimension")
    origin = (0,) * scale.d if origin is None else as_point(origin)
    masks = []
    for t in types:
        if t == 1:
            masks.append(_block_reduce(phi, scale.L0, np.max) >= params["h"])
        elif t == 2:
            masks.append(_block_reduce(phi, scale.L0, np.min) <= -params["h"])
        elif t == 3:
            L = np.asarray(fields["L"], dtype=float)
            if L.shape != phi.shape:
                raise ArgumentError("L and phi must share the region")
            thr = type3_threshold(params["alpha"], params["u"])
            masks.append(_block_reduce(L + 0.5 * phi * phi, scale.L0, np.min) < thr)
        else:
            raise ArgumentError(f"unknown bad type {t}")
    return from_bool(scale, origin, masks)


def cascade_level(bad: np.ndarray, l0: int, r: int) -> np.ndarray:
    """One cascade step on a grid of child vertices (sides multiples of ``l0``).

    A parent is bad when two bad children in its ``l0^d`` block are more
    than ``l0 / r`` apart in sup-norm, i.e. when along some axis the bad
    children's indices span more than ``l0 / r``.
    """
    d = bad.ndim
    if any(s % l0 for s in bad.shape):
        raise ArgumentError("grid sides must be multiples of l0")
    split = []
    for s in bad.shape:
        split += [s // l0, l0]
    blocks = bad.reshape(split)
    inner = tuple(range(1, 2 * d, 2))
    out = np.zeros(tuple(s // l0 for s in bad.shape), dtype=bool)
    idx = np.arange(l0)
    for a in range(d):
        shape = [1] * (2 * d)
        shape[2 * a + 1] = l0
        coord = idx.reshape(shape)
        hi = np.where(blocks, coord, -1).max(axis=inner)
        lo = np.where(blocks, coord, l0).min(axis=inner)
        out |= (hi - lo) * r > l0
    return out


def cascade_bad(bc: BadConfig, n: int, x, i: int) -> bool:
    """Whether the level-``n`` vertex ``x`` is ``n``-bad of type ``i``."""
    s = bc.scale
    x = as_point(x)
    if box_index(x, n, s) != x:
        raise ArgumentError(f"{x} is not a level-{n} vertex")
    if not 1 <= i <= bc.N:
        raise ArgumentError(f"type {i} outside 1..{bc.N}")
    side = s.l0 ** n
    lo = bc.local(x)
    if np.any(lo < 0) or np.any(lo + side > np.asarray(bc.bits.shape)):
        raise ArgumentError("region does not cover the box of x")
    sl = tuple(slice(int(a), int(a) + side) for a in lo)
    grid = bc.type_mask(i)[sl]
    for _ in range(n):
        grid = cascade_level(grid, s.l0, s.r)
    return bool(grid.reshape(-1)[0])


def cascade_bad_enumeration(bc: BadConfig, n: int, x, i: int, budget: int = 2_000_000) -> bool:
    """Reference evaluation: some proper embedding has all leaves bad of type ``i``."""
    mask = bc.type_mask(i)
    for emb in iter_embeddings(n, x, bc.scale, budget):
        if all(mask[tuple(bc.local(y))] for y in emb.leaves()):
            return True
    return False


@dataclass(frozen=True)
class LemmaVerdict:
    premise: bool
    conclusion: bool
    witness: tuple | None
    witness_type: int | None

    @property
    def passed(self) -> bool:
        return (not self.premise) or self.conclusion

    def to_dict(self) -> dict:
        return {"premise": self.premise, "conclusion": self.conclusion,
                "witness": None if self.witness is None else list(self.witness),
                "witness_type": self.witness_type, "passed": self.passed}


def bad_crossing(bc: BadConfig, n: int, x) -> bool:
    """Nearest-neighbour path of bad level-0 vertices from ``B(x, L_n)`` to ``S(x, 2 L_n)``."""
    s = bc.scale
    m = 2 * s.l0 ** n
    x = as_point(x)
    lo = bc.local(x) - m
    if np.any(lo < 0) or np.any(lo + 2 * m + 1 > np.asarray(bc.bits.shape)):
        raise ArgumentError("region does not cover the closed box x + [-2L_n, 2L_n]^d")
    sl = tuple(slice(int(a), int(a) + 2 * m + 1) for a in lo)
    grid = np.ascontiguousarray(bc.any_mask()[sl], dtype=np.uint8)
    roots = kernels.label_components(grid.ravel(), np.asarray(grid.shape, dtype=np.int64),
                                     -np.eye(s.d, dtype=np.int64))
    ax = np.abs(np.arange(2 * m + 1) - m)
    dist = ax
    for _ in range(s.d - 1):
        dist = np.maximum.outer(dist, ax)
    dist = dist.ravel()
    inner = roots[(dist * 2 <= m) & (roots >= 0)]
    outer = roots[(dist == m) & (roots >= 0)]
    return bool(np.intersect1d(inner, outer).size)


def geometric_lemma_check(bc: BadConfig, n: int, x, strict: bool = True) -> LemmaVerdict:
    """Evaluate both sides of the bad-path lemma for the level-``n`` vertex ``x``.

    Premise: a bad path in the level-0 lattice joins ``B(x, L_n)`` to
    ``S(x, 2 L_n)``. Conclusion: some ``y`` in the level-``n`` lattice with
    ``y - x`` in ``[-2L_n, 2L_n)^d`` is ``n``-bad of some type. The verdict
    fails only if the premise holds and the conclusion does not.
    """
    s = bc.scale
    if strict and (s.r < c3(bc.N, s.d) or s.l0 < 2 * s.r):
        raise ConfigurationError(
            f"lemma needs r >= c3(N) = {c3(bc.N, s.d)} and l0 >= 2r; got r={s.r}, l0={s.l0}")
    x = as_point(x)
    if box_index(x, n, s) != x:
        raise ArgumentError(f"{x} is not a level-{n} vertex")
    premise = bad_crossing(bc, n, x)
    Ln = s.L(n)
    for off in itertools.product((-2, -1, 0, 1), repeat=s.d):
        y = tuple(c + o * Ln for c, o in zip(x, off))
        for i in range(1, bc.N + 1):
            if cascade_bad(bc, n, y, i):
                return LemmaVerdict(premise, True, y, i)
    return LemmaVerdict(premise, False, None, None)


# ---------------------------------------------------------------------------
# Monte Carlo estimates of p_0 and p_1


def _site_index(sites: np.ndarray, pts: np.ndarray) -> np.ndarray:
    lookup = {tuple(p): i for i, p in enumerate(sites.tolist())}
    try:
        return np.array([lookup[tuple(p)] for p in pts.tolist()], dtype=np.int64)
    except KeyError:
        raise ArgumentError("sampler does not cover the required box") from None


def _box_sites(y, L0: int) -> np.ndarray:
    axes = [np.arange(c, c + L0) for c in y]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([a.ravel() for a in mesh], axis=1)


def estimate_p0(h: float, scale: ScaleSystem, sampler, n_samples: int, seed,
                g0: float | None = None) -> Estimate:
    """``P[max of phi over the box [0, L0)^d >= h]`` with the union bound in ``meta``."""
    if h == -math.inf:
        return Estimate(1.0, 0.0, n_samples, 0.0, {"union_bound": 1.0})
    idx = _site_index(sampler.sites, _box_sites((0,) * scale.d, scale.L0))
    phi = sampler.draw(n_samples, seed)
    hits = phi[:, idx].max(axis=1) >= h
    meta = {"seed": seed_id(seed)}
    if g0 is not None:
        meta["union_bound"] = union_bound_p0(h, len(idx), g0)
    return proportion(hits, **meta)


@dataclass(frozen=True)
class P1Report:
    value: float
    stderr: float
    n: int
    argmax: tuple
    pairs: list
    estimates: np.ndarray
    farthest: tuple
    farthest_estimate: Estimate


def estimate_p1(h: float, scale: ScaleSystem, sampler, n_samples: int, seed,
                budget: int = 2_000_000) -> P1Report:
    """Supremum over depth-1 embeddings rooted at 0 of ``P[both leaf boxes have max >= h]``."""
    d, l0 = scale.d, scale.l0
    if embedding_count_recursive(1, scale) > budget:
        raise CapacityError("too many embeddings for the p_1 estimate")
    kids = _children_grid((0,) * d, 1, scale)
    pairs = []
    for a in range(len(kids)):
        for b in range(len(kids)):
            if np.max(np.abs(kids[a] - kids[b])) * scale.r > scale.L(1):
                pairs.append((a, b))
    if h == -math.inf:
        ones = np.ones(len(pairs))
        far = pairs[0]
        return P1Report(1.0, 0.0, n_samples, far, pairs, ones, far,
                        Estimate(1.0, 0.0, n_samples))
    phi = sampler.draw(n_samples, seed)
    events = np.empty((n_samples, len(kids)), dtype=bool)
    for k, y in enumerate(kids):
        idx = _site_index(sampler.sites, _box_sites(y, scale.L0))
        events[:, k] = phi[:, idx].max(axis=1) >= h
    ev = events.astype(np.float64)
    joint = ev.T @ ev / n_samples
    ia = np.array([p[0] for p in pairs])
    ib = np.array([p[1] for p in pairs])
    est = joint[ia, ib]
    j = int(np.argmax(est))
    se = math.sqrt(est[j] * (1 - est[j]) / n_samples)
    dist = np.max(np.abs(kids[ia] - kids[ib]), axis=1)
    f = int(np.argmax(dist))
    pf = est[f]
    far = Estimate(float(pf), math.sqrt(pf * (1 - pf) / n_samples), n_samples)
    return P1Report(float(est[j]), se, n_samples, pairs[j], pairs, est, pairs[f], far)
