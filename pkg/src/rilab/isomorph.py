"""Distributional checks of ``L_{x,u} + phi_x^2 / 2 = (phi_x + sqrt(2u))^2 / 2`` and its consequences."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, ConfigurationError
from .gff import CovFactorization, factorize, iter_sample_arrays, sample_array
from .interlacements import BATCH_CHUNK, InterlacementSampler, occupation_bias
from .lattice import Window
from .percolation import crossing_many
from .potential import GreenTable, green_table
from .rng import seed_id
from .stats import (Estimate, covariance_estimate, intervals_overlap, ks_two_sample,
                    mean_estimate, proportion, variance_estimate)

MIN_POWER_SAMPLES = 1000


@dataclass(frozen=True)
class IsoSamples:
    """``(n, m)`` array of one side of the identity over ``window``.

    ``bias_mean`` and ``bias_var`` bound the sitewise systematic error of
    means and (co)variances; they are zero for the right-hand side.
    """

    window: Window
    u: float
    values: np.ndarray
    bias_mean: float = 0.0
    bias_var: float = 0.0
    seeds: tuple = ()

    @property
    def n(self) -> int:
        return len(self.values)


def _samplers(window: Window, ri, fact, G):
    if G is None:
        G = green_table(window.d, min(2 * window.radius + 1, 48))
    if fact is None:
        fact = factorize(window, G, max_sites=max(window.size, 1))
    if ri is None:
        ri = InterlacementSampler(window, G)
    if fact.window != window or ri.window != window:
        raise ConfigurationError("interlacement and field samplers must share the window")
    return ri, fact


def _check_seeds(seeds) -> tuple:
    try:
        s_ri, s_gff = seeds
    except (TypeError, ValueError):
        raise ArgumentError("seeds must be a pair (interlacement seed, field seed)") from None
    if seed_id(s_ri) == seed_id(s_gff):
        raise ConfigurationError("the two factors need independent seed streams")
    return s_ri, s_gff


def sample_lhs(window: Window, u: float, n: int, seeds, ri: InterlacementSampler | None = None,
               fact: CovFactorization | None = None, G: GreenTable | None = None) -> IsoSamples:
    """``n`` samples of ``L_{x,u} + phi_x^2 / 2`` with independent factors.

    ``seeds = (interlacement seed, field seed)``; equal seeds raise
    :class:`ConfigurationError`.
    """
    if u < 0:
        raise ArgumentError("u must be non-negative")
    s_ri, s_gff = _check_seeds(seeds)
    ri, fact = _samplers(window, ri, fact, G)
    phi = sample_array(fact, n, s_gff)
    vals = 0.5 * phi * phi
    if u > 0:
        vals += ri.batch(u, n, s_ri).occupation
    b_mean, b_var = occupation_bias(u, ri.bias, ri.G.g0, ri.cap)
    return IsoSamples(window, float(u), vals, b_mean, b_var, (seed_id(s_ri), seed_id(s_gff)))


def sample_rhs(window: Window, u: float, n: int, seed, fact: CovFactorization | None = None,
               G: GreenTable | None = None) -> IsoSamples:
    """``n`` samples of ``(phi_x + sqrt(2u))^2 / 2``."""
    if u < 0:
        raise ArgumentError("u must be non-negative")
    if fact is None:
        if G is None:
            G = green_table(window.d, min(2 * window.radius + 1, 48))
        fact = factorize(window, G, max_sites=max(window.size, 1))
    phi = sample_array(fact, n, seed) + math.sqrt(2.0 * u)
    return IsoSamples(window, float(u), 0.5 * phi * phi, 0.0, 0.0, (seed_id(seed),))


@dataclass(frozen=True)
class IsoReport:
    ks_stat: np.ndarray
    ks_pvalue: np.ndarray
    ks_pass_rate: float
    means_ok: np.ndarray
    vars_ok: np.ndarray
    covs_ok: np.ndarray
    sites: np.ndarray
    pairs: list
    passed: bool
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "ks_pass_rate": self.ks_pass_rate,
                "sites": self.sites.tolist(),
                "ks_stat": [float(v) for v in self.ks_stat],
                "ks_pvalue": [float(v) for v in self.ks_pvalue],
                "means_ok": [bool(v) for v in self.means_ok],
                "vars_ok": [bool(v) for v in self.vars_ok],
                "pairs": [list(p) for p in self.pairs],
                "covs_ok": [bool(v) for v in self.covs_ok], **self.meta}


def default_pairs(window: Window) -> list:
    """Centre paired with each site along the first axis, in flat indices."""
    c = window.index(window.center)
    out = []
    for k in range(1, window.radius + 1):
        y = list(window.center)
        y[0] += k
        out.append((c, window.index(tuple(y))))
    return out


def iso_test(lhs: IsoSamples, rhs: IsoSamples, sites=None, pairs=None, level: float = 0.01,
             pass_rate: float = 0.95, k: float = 3.0) -> IsoReport:
    """Compare two batches site by site.

    Passes iff at least ``pass_rate`` of the per-site two-sample KS tests
    have p-value above ``level`` and every mean, variance and pair
    covariance interval (``k`` stderr plus bias) overlaps.
    """
    if lhs.n != rhs.n:
        raise ArgumentError("both batches need the same number of samples")
    if lhs.values.shape[1] != rhs.values.shape[1]:
        raise ArgumentError("batches cover different site sets")
    if set(lhs.seeds) & set(rhs.seeds):
        raise ConfigurationError("batches share a seed stream")
    n = lhs.n
    if n < MIN_POWER_SAMPLES:
        warnings.warn(f"n = {n} < {MIN_POWER_SAMPLES}: the test has little power", RuntimeWarning,
                      stacklevel=2)
    m = lhs.values.shape[1]
    sites = np.arange(m) if sites is None else np.asarray(sites, dtype=np.int64)
    pairs = default_pairs(lhs.window) if pairs is None else [tuple(p) for p in pairs]
    a, b = lhs.values, rhs.values
    stat = np.empty(len(sites))
    pval = np.empty(len(sites))
    m_ok = np.empty(len(sites), dtype=bool)
    v_ok = np.empty(len(sites), dtype=bool)
    for j, s in enumerate(sites):
        stat[j], pval[j] = ks_two_sample(a[:, s], b[:, s])
        m_ok[j] = intervals_overlap(mean_estimate(a[:, s], lhs.bias_mean),
                                    mean_estimate(b[:, s], rhs.bias_mean), k)
        v_ok[j] = intervals_overlap(variance_estimate(a[:, s], lhs.bias_var),
                                    variance_estimate(b[:, s], rhs.bias_var), k)
    c_ok = np.array([intervals_overlap(covariance_estimate(a[:, i], a[:, j], lhs.bias_var),
                                       covariance_estimate(b[:, i], b[:, j], rhs.bias_var), k)
                     for i, j in pairs], dtype=bool)
    rate = float(np.mean(pval > level))
    passed = rate >= pass_rate and bool(m_ok.all() and v_ok.all() and c_ok.all())
    meta = {"n": n, "level": level, "pass_rate_required": pass_rate, "k": k,
            "bias_mean": lhs.bias_mean + rhs.bias_mean, "bias_var": lhs.bias_var + rhs.bias_var,
            "u_lhs": lhs.u, "u_rhs": rhs.u}
    return IsoReport(stat, pval, rate, m_ok, v_ok, c_ok, sites, pairs, passed, meta)


def domination_level(u: float, alpha: float) -> float:
    """``h(u, alpha) = sqrt(2 alpha) - sqrt(2 u)``."""
    if u < 0:
        raise ArgumentError("u must be non-negative")
    if alpha < u:
        raise ArgumentError(f"alpha = {alpha} < u = {u}: the level would be negative")
    return math.sqrt(2.0 * alpha) - math.sqrt(2.0 * u)


@dataclass(frozen=True)
class DominationReport:
    u: float
    alpha: float
    h: float
    L: int
    inclusion_lhs: float
    inclusion_rhs: float
    crossing_I: Estimate
    crossing_G: Estimate
    ordering_ok: bool

    @property
    def passed(self) -> bool:
        return self.inclusion_lhs == 1.0 and self.inclusion_rhs == 1.0 and self.ordering_ok

    def to_dict(self) -> dict:
        return {"u": self.u, "alpha": self.alpha, "h": self.h, "L": self.L,
                "inclusion_lhs": self.inclusion_lhs, "inclusion_rhs": self.inclusion_rhs,
                "crossing_I": self.crossing_I.to_dict(), "crossing_G": self.crossing_G.to_dict(),
                "ordering_ok": self.ordering_ok, "passed": self.passed}


def domination_check(u: float, alpha: float, n: int, seeds, L: int = 5, d: int = 3,
                     window: Window | None = None, ri: InterlacementSampler | None = None,
                     fact: CovFactorization | None = None, G: GreenTable | None = None,
                     k: float = 3.0) -> DominationReport:
    """Coupled-sample checks behind the comparison of ``I^{u,alpha}`` with ``{|phi| >= h}``.

    Sitewise, ``L + phi^2/2 > alpha`` whenever ``L > alpha``, and
    ``(phi + sqrt(2u))^2 / 2 > alpha`` forces ``|phi| > h``. Both are checked
    on every sample. The crossing probabilities of ``{L > alpha}`` and of
    ``{|phi| >= h}`` at scale ``L`` are compared within ``k`` joint stderr.
    """
    h = domination_level(u, alpha)
    s_ri, s_gff = _check_seeds(seeds)
    if window is None:
        window = Window.centered(d, 2 * L)
    ri, fact = _samplers(window, ri, fact, G)
    shift = math.sqrt(2.0 * u)
    ok_lhs = ok_rhs = 0
    cross_I = np.empty(n, dtype=bool)
    cross_G = np.empty(n, dtype=bool)
    pos = 0
    gff_chunks = iter_sample_arrays(fact, n, s_gff, chunk=BATCH_CHUNK)
    ri_chunks = ri.iter_batches(u, n, s_ri)
    for phi, (occ, _, _) in zip(gff_chunks, ri_chunks):
        kk = len(phi)
        half = 0.5 * phi * phi
        ok_lhs += int(np.all((occ + half > alpha) >= (occ > alpha), axis=1).sum())
        ok_rhs += int(np.all(~(0.5 * (phi + shift) ** 2 > alpha) | (np.abs(phi) > h),
                             axis=1).sum())
        cross_I[pos:pos + kk] = crossing_many(occ > alpha, window, L)
        cross_G[pos:pos + kk] = crossing_many(np.abs(phi) >= h, window, L)
        pos += kk
    eI = proportion(cross_I, bias=ri.bias * u)
    eG = proportion(cross_G)
    joint = math.sqrt(eI.stderr ** 2 + eG.stderr ** 2)
    ordering = eI.value <= eG.value + k * joint + eI.bias
    return DominationReport(float(u), float(alpha), h, L, ok_lhs / n, ok_rhs / n, eI, eG,
                            bool(ordering))
