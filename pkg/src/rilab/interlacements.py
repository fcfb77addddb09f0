"""Random interlacements restricted to a window.

The trajectories entering a window ``K`` form a Poisson number
``N ~ Poi(u cap(K))`` of forward walks started from the normalized
equilibrium measure, each carrying an independent uniform label in
``[0, u]``. Backward parts never enter ``K`` and are not simulated.

Two samplers are provided:

``"exact"`` (default)
    Simulates the trace of each walk on ``K``. When a step leaves ``K`` at an
    outer-boundary site ``z`` the walk returns with probability
    ``s_z = P_z[H_K < inf]`` at a site drawn from the harmonic measure seen
    from ``z``, and is otherwise gone for good. Occupation times inside ``K``
    then have exactly the right law; no truncation bias.
``"killed"``
    Runs plain walks that are stopped on reaching ``S(center, kill_radius)``.
    The chance that a stopped walk would have come back is bounded by
    :func:`kill_bias`, which is reported with every sample.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import kernels
from .errors import ArgumentError, CapacityError, ConfigurationError
from .lattice import Window
from .percolation import SiteConfig
from .potential import (EquilibriumMeasure, GreenTable, equilibrium, green_table,
                        kill_bias_bound)
from .rng import bit_generator, derive, generator, seed_id

EXACT_MAX_BOUNDARY = 6000
BATCH_CHUNK = 256


def kill_bias(K: Window, kill_radius: int, em: EquilibriumMeasure, G: GreenTable) -> float:
    """Bound ``cap(K) * max g`` on the return probability of a walk stopped at ``kill_radius``."""
    if kill_radius <= K.radius:
        raise ConfigurationError(f"kill radius {kill_radius} must exceed window radius {K.radius}")
    return kill_bias_bound(K.sites(), kill_radius, G, em.cap, center=K.center)


@dataclass(frozen=True)
class Trajectory:
    """The part of one interlacement trajectory inside the window.

    ``sites`` are window indices of the successive visits, ``holds`` their
    Exp(1) holding times and ``dirs`` the direction index of the step taken
    after each visit (``2a`` for ``+e_a``, ``2a+1`` for ``-e_a``). A step
    leaving the window is followed by the next re-entry, if any.
    """

    label: float
    entry: tuple
    sites: np.ndarray
    holds: np.ndarray
    dirs: np.ndarray

    def to_json(self, window: Window) -> str:
        pts = window.sites()[self.sites].tolist()
        return json.dumps({"label": self.label, "entry": list(self.entry), "sites": pts,
                           "dirs": self.dirs.tolist(), "holds": self.holds.tolist()})


@dataclass(frozen=True)
class InterlacementSample:
    """Trajectories with label at most ``u`` that enter ``window``, with derived fields."""

    window: Window
    u: float
    labels: np.ndarray
    entries: np.ndarray
    occupation: np.ndarray
    sigma: np.ndarray
    lengths: np.ndarray
    kill_radius: int | None
    bias_bound: float
    seed: object = None
    trajectories: list | None = None

    @property
    def count(self) -> int:
        return len(self.labels)

    def to_jsonl(self) -> str:
        """Header line followed by one line per trajectory (needs ``record=True``)."""
        if self.trajectories is None:
            raise ArgumentError("sample was drawn without record=True")
        head = json.dumps({"center": list(self.window.center), "radius": self.window.radius,
                           "u": self.u, "kill_radius": self.kill_radius,
                           "bias_bound": self.bias_bound, "count": self.count})
        lines = [head] + [t.to_json(self.window) for t in self.trajectories]
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class OccupationField:
    window: Window
    u: float
    values: np.ndarray


@dataclass(frozen=True)
class SigmaField:
    window: Window
    u: float
    values: np.ndarray


class InterlacementSampler:
    """Precomputed data for sampling interlacements on a fixed window.

    Parameters
    ----------
    window : Window
    G : GreenTable, optional
        Must cover differences up to ``2 * radius + 1`` for the exact method.
    kill_radius : int, optional
        If given the ``"killed"`` method is used with this radius; otherwise
        the exact trace sampler.
    em : EquilibriumMeasure, optional
        Reused when supplied.
    """

    def __init__(self, window: Window, G: GreenTable | None = None,
                 kill_radius: int | None = None, em: EquilibriumMeasure | None = None):
        if window.d < 3:
            raise ConfigurationError("interlacements need d >= 3")
        self.window = window
        d, r = window.d, window.radius
        if G is None:
            G = green_table(d, min(2 * r + 1, 48))
        self.G = G
        sites = window.sites()
        self.em = em if em is not None else equilibrium(sites, G)
        if not np.array_equal(self.em.K, sites):
            raise ConfigurationError("equilibrium measure does not belong to this window")
        self.cap = self.em.cap
        self.d = d
        supp = np.nonzero(self.em.e > 0)[0]
        self.entry_sites = supp
        self.entry_cdf = np.cumsum(self.em.e[supp]) / self.cap
        if kill_radius is None:
            self.method = "exact"
            self.kill_radius = None
            self.bias = 0.0
            self._build_exact()
        else:
            self.method = "killed"
            self.kill_radius = int(kill_radius)
            self.bias = kill_bias(window, self.kill_radius, self.em, G)
            self._build_killed()

    # -- setup ---------------------------------------------------------------

    def _build_exact(self):
        w, d, r = self.window, self.d, self.window.radius
        bsites = np.nonzero(w.inner_boundary_mask())[0]
        if len(bsites) > EXACT_MAX_BOUNDARY:
            raise CapacityError(f"exact sampler supports at most {EXACT_MAX_BOUNDARY} boundary "
                                f"sites, window has {len(bsites)}; use a kill radius")
        local = w.sites() - np.asarray(w.center)
        bpts = local[bsites]
        # outer boundary: one coordinate at +-(r+1), others within the window
        outer, zindex = [], {}
        nbr = np.empty((w.size, 2 * d), dtype=np.int64)
        strides = np.array([w.side ** (d - 1 - a) for a in range(d)], dtype=np.int64)
        for k in range(2 * d):
            a, sgn = k >> 1, (-1 if k & 1 else 1)
            tgt = local.copy()
            tgt[:, a] += sgn
            inside = np.abs(tgt[:, a]) <= r
            nbr[inside, k] = np.nonzero(inside)[0] + sgn * strides[a]
            for i in np.nonzero(~inside)[0]:
                key = tuple(tgt[i])
                if key not in zindex:
                    zindex[key] = len(outer)
                    outer.append(key)
                nbr[i, k] = -1 - zindex[key]
        outer = np.asarray(outer, dtype=np.int64)
        G = self.G
        gram = G.gram(bpts)
        factor = scipy.linalg.cho_factor(gram, lower=True, overwrite_a=True, check_finite=False)
        ret = np.empty((len(outer), len(bsites)))
        step = max(1, 2_000_000 // len(bsites))
        for s in range(0, len(outer), step):
            gz = G(outer[s:s + step, None, :] - bpts[None, :, :])
            ret[s:s + step] = scipy.linalg.cho_solve(factor, gz.T, check_finite=False).T
        np.maximum(ret, 0.0, out=ret)
        np.cumsum(ret, axis=1, out=ret)
        if np.max(ret[:, -1]) >= 1.0:
            raise ConfigurationError("return probabilities >= 1; Green table too coarse")
        self._nbr = nbr
        self._bsites = bsites.astype(np.int64)
        self._ret_cdf = ret
        self.return_probability = ret[:, -1].copy()

    def _build_killed(self):
        w, d, R = self.window, self.d, self.kill_radius
        side = 2 * R + 1
        if side ** d > 50_000_000:
            raise CapacityError(f"kill box of radius {R} is too large")
        box = np.full((side,) * d, -1, dtype=np.int64)
        lo = R - w.radius
        box[(slice(lo, lo + w.side),) * d] = np.arange(w.size).reshape(w.shape)
        self._wmap = box.ravel()
        local = w.sites() - np.asarray(w.center) + R
        self._box_index = np.ravel_multi_index(tuple(local.T), (side,) * d).astype(np.int64)

    # -- sampling ------------------------------------------------------------

    def _draw_counts(self, rng: np.random.Generator, u: float, nsamp: int):
        counts = rng.poisson(u * self.cap, size=nsamp)
        total = int(counts.sum())
        labels = rng.uniform(0.0, u, size=total) if u > 0 else np.zeros(0)
        entries = self.entry_sites[np.searchsorted(self.entry_cdf, rng.random(total), side="right")
                                   .clip(max=len(self.entry_sites) - 1)]
        offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        # distinct labels within a sample, sorted so that trajectories run in label order
        for s in range(nsamp):
            sl = slice(offsets[s], offsets[s + 1])
            lab = labels[sl]
            while len(np.unique(lab)) < len(lab):  # pragma: no cover - probability zero
                lab = rng.uniform(0.0, u, size=len(lab))
            order = np.argsort(lab, kind="stable")
            labels[sl] = lab[order]
            entries[sl] = entries[sl][order]
        return counts, labels, entries, offsets

    def _run(self, entries, offsets, bg, record):
        if self.method == "exact":
            return kernels.trace_chain(self._nbr, self._bsites, self._ret_cdf, entries, offsets,
                                       bg, record)
        starts = self._box_index[entries]
        return kernels.killed_chain(self.d, self.kill_radius, self._wmap, starts, offsets,
                                    self.window.size, bg, record)

    def sample(self, u: float, seed, record: bool = False) -> InterlacementSample:
        """One window sample at level ``u``."""
        if u < 0:
            raise ArgumentError("u must be non-negative")
        ss = derive(seed, 0)
        rng = generator(derive(ss, 0))
        counts, labels, entries, offsets = self._draw_counts(rng, u, 1)
        occ, sig, lengths, rec = self._run(entries, offsets, bit_generator(derive(ss, 1)), record)
        trajs = None
        if record:
            trajs = []
            sites, holds, dirs = rec
            pts = self.window.sites()
            bounds = np.concatenate([[0], np.cumsum(lengths)])
            for t in range(len(labels)):
                sl = slice(bounds[t], bounds[t + 1])
                trajs.append(Trajectory(float(labels[t]), tuple(pts[entries[t]].tolist()),
                                        sites[sl], holds[sl], dirs[sl]))
        return InterlacementSample(self.window, float(u), labels, entries, occ[0], sig[0], lengths,
                                   self.kill_radius, self.bias * counts[0] if counts[0] else 0.0,
                                   seed_id(seed), trajs)

    def iter_batches(self, u: float, n: int, seed):
        """Yield ``(occupation, sigma, counts)`` blocks for ``n`` i.i.d. samples.

        Block ``i`` uses the seed ``derive(seed, i)`` and holds up to
        ``BATCH_CHUNK`` samples, so results depend only on ``(u, n, seed)``.
        """
        if u < 0:
            raise ArgumentError("u must be non-negative")
        for i, s in enumerate(range(0, n, BATCH_CHUNK)):
            k = min(BATCH_CHUNK, n - s)
            ss = derive(seed, i)
            rng = generator(derive(ss, 0))
            counts, labels, entries, offsets = self._draw_counts(rng, u, k)
            occ, sig, _, _ = self._run(entries, offsets, bit_generator(derive(ss, 1)), False)
            yield occ, sig, counts

    def batch(self, u: float, n: int, seed) -> "InterlacementBatch":
        occ, sig, cnt = [], [], []
        for o, s, c in self.iter_batches(u, n, seed):
            occ.append(o)
            sig.append(s)
            cnt.append(c)
        if not occ:
            m = self.window.size
            return InterlacementBatch(self.window, u, np.zeros((0, m)), np.zeros((0, m)),
                                      np.zeros(0, dtype=np.int64), self.bias, seed_id(seed))
        return InterlacementBatch(self.window, u, np.concatenate(occ), np.concatenate(sig),
                                  np.concatenate(cnt), self.bias, seed_id(seed))


@dataclass(frozen=True)
class InterlacementBatch:
    """Occupation and sigma fields of ``n`` i.i.d. samples as ``(n, m)`` arrays.

    ``bias`` is the per-trajectory return bound; the bias of a sample mean of
    ``L_x`` is at most ``u * bias`` (see :func:`occupation_bias`).
    """

    window: Window
    u: float
    occupation: np.ndarray
    sigma: np.ndarray
    counts: np.ndarray
    bias: float
    seed: object = None
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.counts)


def occupation_bias(u: float, per_trajectory: float, g0: float, cap: float) -> tuple:
    """Bounds on the bias of ``E[L_x]`` and ``Var[L_x]`` caused by killing.

    ``per_trajectory`` is ``b = cap(K) * max g`` from :func:`kill_bias`. A
    walk stopped at ``y`` misses occupation at ``x`` with mean ``g(y - x)``
    and second moment ``2 g(y - x) g(0)``; summing over the Poisson number of
    trajectories (mean ``u cap``) gives ``|dE| <= u b`` and
    ``|dVar| <= u b (2 / cap + 4 g(0) + 2 u)``.
    """
    mean_b = u * per_trajectory
    var_b = u * per_trajectory * (2.0 / cap + 4.0 * g0 + 2.0 * u)
    return mean_b, var_b


def sample_interlacement(K: Window, u: float, em: EquilibriumMeasure | None = None,
                         kill_radius: int | None = None, seed=0, G: GreenTable | None = None,
                         record: bool = True) -> InterlacementSample:
    """Sample the trajectories with label at most ``u`` entering ``K``.

    ``kill_radius=None`` selects the exact sampler.
    """
    if u < 0:
        raise ArgumentError("u must be non-negative")
    sampler = InterlacementSampler(K, G, kill_radius, em)
    return sampler.sample(u, seed, record)


def occupation_field(s: InterlacementSample) -> OccupationField:
    """``L_{x,u}``: total holding time at each window site."""
    return OccupationField(s.window, s.u, s.occupation.copy())


def sigma_field(s: InterlacementSample) -> SigmaField:
    """Holding time of the first visit to ``x`` by the smallest-label trajectory through ``x``."""
    return SigmaField(s.window, s.u, s.sigma.copy())


def threshold_sets(L: OccupationField, alpha: float) -> tuple:
    """``(I^{u,alpha}, V^{u,alpha}) = ({L > alpha}, {L <= alpha})``."""
    if alpha < 0:
        raise ArgumentError("alpha must be non-negative")
    above = L.values > alpha
    return SiteConfig(L.window, above), SiteConfig(L.window, ~above)


def superpose(a: InterlacementSample, b: InterlacementSample) -> InterlacementSample:
    """Sample at level ``a.u + b.u`` from independent samples at ``a.u`` and ``b.u``.

    The labels of ``b`` are shifted by ``a.u``, so the occupation fields add
    and the sigma field keeps ``a``'s value wherever ``a`` visited.
    """
    if a.window != b.window or a.kill_radius != b.kill_radius:
        raise ArgumentError("samples must share window and kill radius")
    sigma = np.where(a.sigma > 0, a.sigma, b.sigma)
    trajs = None
    if a.trajectories is not None and b.trajectories is not None:
        trajs = list(a.trajectories) + [
            Trajectory(t.label + a.u, t.entry, t.sites, t.holds, t.dirs) for t in b.trajectories]
    return InterlacementSample(a.window, a.u + b.u, np.concatenate([a.labels, b.labels + a.u]),
                               np.concatenate([a.entries, b.entries]), a.occupation + b.occupation,
                               sigma, np.concatenate([a.lengths, b.lengths]), a.kill_radius,
                               a.bias_bound + b.bias_bound, (a.seed, b.seed), trajs)
