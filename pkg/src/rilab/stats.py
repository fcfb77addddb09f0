"""Estimators shared by the experiments.

Everything here is a deterministic function of its inputs.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import kolmogorov, ndtri

from .errors import ArgumentError


@dataclass(frozen=True)
class Estimate:
    """A Monte Carlo estimate with its standard error.

    ``bias`` is a bound on the absolute systematic error (e.g. from killing
    walks at a finite radius) and is added to every tolerance.
    """

    value: float
    stderr: float
    n: int
    bias: float = 0.0
    meta: dict = field(default_factory=dict)

    def compatible(self, target: float, k: float = 3.0) -> bool:
        """``|value - target| <= k * stderr + bias``."""
        return abs(self.value - target) <= k * self.stderr + self.bias

    def to_dict(self) -> dict:
        return {"value": self.value, "stderr": self.stderr, "n": self.n, "bias": self.bias,
                **self.meta}


def proportion(hits, n: int | None = None, bias: float = 0.0, **meta) -> Estimate:
    """Estimate of a probability from a boolean array (or a count and ``n``)."""
    if n is None:
        hits = np.asarray(hits, dtype=bool)
        n = hits.size
        k = int(hits.sum())
    else:
        k = int(hits)
    if n == 0:
        return Estimate(float("nan"), float("nan"), 0, bias, dict(meta))
    p = k / n
    return Estimate(p, math.sqrt(p * (1 - p) / n), n, bias, dict(meta))


def mean_estimate(x, bias: float = 0.0, **meta) -> Estimate:
    x = np.asarray(x, dtype=float)
    n = x.size
    se = float(x.std(ddof=1) / math.sqrt(n)) if n > 1 else float("nan")
    return Estimate(float(x.mean()), se, n, bias, dict(meta))


def variance_estimate(x, bias: float = 0.0, **meta) -> Estimate:
    """Sample variance with its standard error from the fourth central moment."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 4:
        raise ArgumentError("need at least 4 values for a variance standard error")
    c = x - x.mean()
    m2 = float(np.mean(c ** 2))
    m4 = float(np.mean(c ** 4))
    var = m2 * n / (n - 1)
    se = math.sqrt(max(m4 - m2 * m2, 0.0) / n)
    return Estimate(var, se, n, bias, dict(meta))


def covariance_estimate(x, y, bias: float = 0.0, **meta) -> Estimate:
    """Sample covariance with the delta-method standard error."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    if n != y.size or n < 4:
        raise ArgumentError("need two equally long samples of size >= 4")
    prod = (x - x.mean()) * (y - y.mean())
    cov = float(prod.sum() / (n - 1))
    se = float(prod.std(ddof=1) / math.sqrt(n))
    return Estimate(cov, se, n, bias, dict(meta))


def intervals_overlap(a: Estimate, b: Estimate, k: float = 3.0) -> bool:
    """Whether ``value +- (k * stderr + bias)`` intervals intersect."""
    wa = k * a.stderr + a.bias
    wb = k * b.stderr + b.bias
    return abs(a.value - b.value) <= wa + wb


# ---------------------------------------------------------------------------
# Kolmogorov-Smirnov


def _ks_pvalue(stat: float, en: float) -> float:
    # Stephens' finite-sample correction of the asymptotic Kolmogorov law
    return float(min(1.0, max(0.0, kolmogorov((en + 0.12 + 0.11 / en) * stat))))


def ks_two_sample(a, b) -> tuple[float, float]:
    """Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value.

    The statistic is the largest gap between the two empirical distribution
    functions, evaluated at every pooled data point so that ties are
    handled exactly.
    """
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    n, m = a.size, b.size
    if n == 0 or m == 0:
        raise ArgumentError("both samples must be nonempty")
    pooled = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, pooled, side="right") / n
    cdf_b = np.searchsorted(b, pooled, side="right") / m
    stat = float(np.max(np.abs(cdf_a - cdf_b)))
    en = math.sqrt(n * m / (n + m))
    return stat, _ks_pvalue(stat, en)


def ks_one_sample(x, cdf) -> tuple[float, float]:
    """One-sample KS statistic and asymptotic p-value against a continuous ``cdf``."""
    x = np.sort(np.asarray(x, dtype=float).ravel())
    n = x.size
    if n == 0:
        raise ArgumentError("sample must be nonempty")
    f = cdf(x)
    i = np.arange(1, n + 1)
    stat = float(max(np.max(i / n - f), np.max(f - (i - 1) / n)))
    return stat, _ks_pvalue(stat, math.sqrt(n))


def exp1_cdf(x):
    return -np.expm1(-np.asarray(x, dtype=float))


# ---------------------------------------------------------------------------
# intervals and fits


def binomial_ci(k: int, n: int, level: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for ``k`` successes in ``n`` trials."""
    if n < 1 or k < 0 or k > n or int(k) != k or int(n) != n:
        raise ArgumentError(f"invalid binomial counts k={k}, n={n}")
    if not 0 < level < 1:
        raise ArgumentError("level must lie in (0, 1)")
    z = float(ndtri(0.5 + level / 2))
    p = k / n
    denom = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    lo = 0.0 if k == 0 else max(0.0, centre - half)
    hi = 1.0 if k == n else min(1.0, centre + half)
    return lo, hi


@dataclass(frozen=True)
class PowerFit:
    exponent: float
    prefactor: float
    residual: float

    def __iter__(self):
        return iter((self.exponent, self.prefactor, self.residual))


def fit_power(xs, ys) -> PowerFit:
    """Least-squares fit of ``log y = log A + b log x``."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.size < 3:
        raise ArgumentError("need at least 3 paired points")
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise ArgumentError("power fits need positive data")
    lx, ly = np.log(xs), np.log(ys)
    A = np.column_stack([np.ones_like(lx), lx])
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = float(np.sum((A @ coef - ly) ** 2))
    return PowerFit(float(coef[1]), float(math.exp(coef[0])), resid)


@dataclass(frozen=True)
class StretchedExpFit:
    c: float
    c_prime: float
    rho: float
    residual: float
    degenerate: bool = False
    censored: int = 0

    def __iter__(self):
        return iter((self.c, self.c_prime, self.rho, self.residual))


def fit_stretched_exp(Ls, ps, rho_grid=None) -> StretchedExpFit:
    """Fit ``p = c * exp(-c' L^rho)`` by least squares on ``log p``.

    For each ``rho`` on the grid (default 0.05 to 1.0 in steps of 0.01) the
    problem is linear in ``(log c, c')``; the ``rho`` with the smallest
    residual wins. Zero probabilities are dropped and counted in
    ``censored``. Data without decay is flagged ``degenerate``.
    """
    Ls = np.asarray(Ls, dtype=float)
    ps = np.asarray(ps, dtype=float)
    if Ls.shape != ps.shape or Ls.size < 4:
        raise ArgumentError("need at least 4 paired points")
    if np.any(np.diff(Ls) <= 0):
        raise ArgumentError("Ls must be increasing")
    if np.any(ps < 0) or np.any(ps > 1):
        raise ArgumentError("probabilities must lie in [0, 1]")
    keep = ps > 0
    censored = int((~keep).sum())
    if censored:
        warnings.warn(f"dropped {censored} zero probabilities", RuntimeWarning, stacklevel=2)
    Lk, lp = Ls[keep], np.log(ps[keep])
    if Lk.size < 2 or np.ptp(lp) < 1e-12:
        c = float(np.exp(lp.mean())) if lp.size else 0.0
        return StretchedExpFit(c, 0.0, float("nan"), 0.0, True, censored)
    if rho_grid is None:
        rho_grid = np.round(np.arange(5, 101) / 100.0, 2)
    best = None
    for rho in rho_grid:
        A = np.column_stack([np.ones_like(Lk), -Lk ** rho])
        coef, *_ = np.linalg.lstsq(A, lp, rcond=None)
        res = float(np.sum((A @ coef - lp) ** 2))
        if best is None or res < best[0]:
            best = (res, float(rho), coef)
    res, rho, coef = best
    degenerate = coef[1] <= 0
    return StretchedExpFit(float(math.exp(coef[0])), float(coef[1]), rho, res, bool(degenerate),
                           censored)
