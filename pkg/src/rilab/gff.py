"""Gaussian free field on a finite window with the full-space covariance ``g(x - y)``."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import ArgumentError, CapacityError, NumericalError
from .lattice import Window
from .percolation import SiteConfig
from .potential import GreenTable, green_table
from .rng import generator, seed_id

DEFAULT_MAX_SITES = 11 ** 3
_DRAW_CHUNK = 512


@dataclass(frozen=True)
class CovFactorization:
    """Lower Cholesky factor of the Green Gram matrix of ``sites``.

    ``window`` is ``None`` when the factorization was built for an explicit
    site list.
    """

    sites: np.ndarray
    factor: np.ndarray
    window: Window | None = None
    jitter: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return len(self.sites)

    def gram(self) -> np.ndarray:
        return self.factor @ self.factor.T


def factorize(window, G: GreenTable | None = None, max_sites: int = DEFAULT_MAX_SITES,
              jitter: float = 1e-12) -> CovFactorization:
    """Cholesky factorization of ``(g(x - y))`` over a window or a site array.

    Raises
    ------
    CapacityError
        More than ``max_sites`` sites.
    NumericalError
        The matrix is not positive definite even after adding ``jitter``.
    """
    if isinstance(window, Window):
        sites, win = window.sites(), window
    else:
        sites, win = np.asarray(window, dtype=np.int64), None
        if sites.ndim != 2 or len(sites) == 0:
            raise ArgumentError("sites must be a nonempty (m, d) array")
    m, d = sites.shape
    if m > max_sites:
        raise CapacityError(f"{m} sites exceed the dense factorization cap of {max_sites}")
    if G is None:
        span = int(np.max(np.ptp(sites, axis=0))) if m > 1 else 0
        G = green_table(d, max(span, 1))
    gram = G.gram(sites)
    used = 0.0
    try:
        L = scipy.linalg.cholesky(gram, lower=True, overwrite_a=True, check_finite=False)
    except np.linalg.LinAlgError:
        used = jitter
        gram = G.gram(sites)
        gram[np.diag_indices(m)] += jitter
        try:
            L = scipy.linalg.cholesky(gram, lower=True, overwrite_a=True, check_finite=False)
        except np.linalg.LinAlgError:
            cond = float(np.linalg.cond(gram))
            raise NumericalError(f"Green Gram matrix not positive definite (condition ~ {cond:.3g})",
                                 condition=cond) from None
    return CovFactorization(sites, L, win, used, {"d": d, "table_radius": G.radius})


@dataclass(frozen=True)
class FieldSample:
    """One realization ``phi`` over ``sites`` (lexicographic for windows)."""

    window: Window | None
    values: np.ndarray
    seed: object = None
    index: int = 0

    def __neg__(self) -> "FieldSample":
        return FieldSample(self.window, -self.values, self.seed, self.index)

    def to_csv(self, sites: np.ndarray | None = None) -> str:
        if sites is None:
            sites = self.window.sites()
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"x{i + 1}" for i in range(sites.shape[1])] + ["phi"])
        for s, v in zip(sites.tolist(), self.values.tolist()):
            w.writerow(s + [repr(v)])
        return buf.getvalue()


def sample_array(fact: CovFactorization, n: int, seed) -> np.ndarray:
    """``(n, m)`` array of i.i.d. field samples.

    Standard normals are drawn row by row from one generator, so the normals
    do not depend on the internal chunking; for fixed ``n`` the output is
    bit-reproducible.
    """
    if n < 0:
        raise ArgumentError("n must be non-negative")
    rng = generator(seed)
    out = np.empty((n, fact.size))
    LT = fact.factor.T
    for s in range(0, n, _DRAW_CHUNK):
        k = min(_DRAW_CHUNK, n - s)
        z = rng.standard_normal((k, fact.size))
        np.matmul(z, LT, out=out[s:s + k])
    return out


def iter_sample_arrays(fact: CovFactorization, n: int, seed, chunk: int = _DRAW_CHUNK):
    """Yield consecutive blocks of :func:`sample_array` without holding all of them."""
    rng = generator(seed)
    LT = fact.factor.T
    for s in range(0, n, chunk):
        k = min(chunk, n - s)
        yield rng.standard_normal((k, fact.size)) @ LT


def sample(fact: CovFactorization, n: int, seed) -> list:
    """``n`` i.i.d. :class:`FieldSample` objects."""
    arr = sample_array(fact, n, seed)
    sid = seed_id(seed)
    return [FieldSample(fact.window, arr[i], sid, i) for i in range(n)]


class GaussianSampler:
    """Draws ``(n, m)`` field arrays over fixed sites; used by the renormalization estimators."""

    def __init__(self, fact: CovFactorization):
        self.fact = fact
        self.sites = fact.sites

    def draw(self, n: int, seed) -> np.ndarray:
        return sample_array(self.fact, n, seed)


class IndependentSampler:
    """I.i.d. centred normals with variance ``var`` at every site (diagonal covariance)."""

    def __init__(self, sites: np.ndarray, var: float = 1.0):
        self.sites = np.asarray(sites, dtype=np.int64)
        self.sd = math.sqrt(var)

    def draw(self, n: int, seed) -> np.ndarray:
        return self.sd * generator(seed).standard_normal((n, len(self.sites)))


def _values(f) -> tuple:
    if isinstance(f, FieldSample):
        return f.window, f.values
    raise ArgumentError("expected a FieldSample")


def two_sided_level_set(f: FieldSample, h: float) -> SiteConfig:
    """Sites with ``|phi_x| >= h``."""
    if h < 0:
        raise ArgumentError("h must be non-negative")
    window, v = _values(f)
    return SiteConfig(window, np.abs(v) >= h)


def one_sided_level_set(f: FieldSample, h: float) -> SiteConfig:
    """Sites with ``phi_x >= h``; ``h = -inf`` gives every site."""
    window, v = _values(f)
    return SiteConfig(window, v >= h)


def union_bound_p0(h: float, nsites: int, g0: float) -> float:
    """``nsites * P[N(0, g0) >= h]``, the union bound for the box maximum."""
    from scipy.special import ndtr
    return float(nsites * ndtr(-h / math.sqrt(g0)))
