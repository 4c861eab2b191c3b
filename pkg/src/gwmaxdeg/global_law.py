"""Law of the global maximal out-degree ``M`` via fixed points of ``G_r``.

``q_[0,r] = P[M <= r]`` is the fixed point of the truncated PGF on [0, 1]
(unique when ``F(r) < 1``; equal to 1 when ``F(r) = 1``).  In the
(sub)critical regime it is solved in the tail variable ``s = 1 - t``; in the
supercritical regime with ``p_0 > 0`` it is solved for the deficit
``d_r = q - q_[0,r]`` below the extinction probability ``q``, which keeps the
super-exponentially small ``q_r`` accurate.
"""

from __future__ import annotations

import math
import threading
import weakref
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .exact import DistRow, DistTable
from .offspring import EPS, ConvergenceError, OffspringDistribution

SOLVER_RTOL = 4 * EPS
RESIDUAL_TOL = 1e-12


@dataclass(frozen=True)
class FixedPoint:
    r: int
    cdf: float
    tail: float
    deficit: float | None   # q - cdf, supercritical regime only
    iterations: int
    residual: float          # |G_r(t) - t| at the returned point
    slope: float             # G_r'(t) at the returned point


@dataclass
class GlobalLaw:
    rows: list[DistRow]
    limit_mass_at_infinity: float
    iterations: list[int] = field(default_factory=list)
    residuals: list[float] = field(default_factory=list)
    pmf_relerr: list[float] = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(row, name) for row in self.rows])


_CACHES: "weakref.WeakKeyDictionary[OffspringDistribution, dict]" = weakref.WeakKeyDictionary()
_CACHE_LOCK = threading.Lock()


def _cache(dist: OffspringDistribution) -> dict:
    with _CACHE_LOCK:
        c = _CACHES.get(dist)
        if c is None:
            c = {}
            _CACHES[dist] = c
        return c


def clear_cache() -> None:
    with _CACHE_LOCK:
        _CACHES.clear()


# ---------------------------------------------------------------------------
# series helpers for the deficit equation


def _weighted_tail_series(dist: OffspringDistribution, r: int, t: float, deriv: bool) -> float:
    """``sum_{k > r} p_k t^k`` (or ``sum_{k>r} k p_k t^{k-1}``) for ``t < 1``."""
    if t == 0.0:
        return 0.0
    if dist.bounded and r >= dist.support_max:
        return 0.0
    total = 0.0
    start = r + 1
    block = 64
    logt = math.log(t)
    while True:
        stop = start + block
        pk = dist.pmf_array(stop - 1)[start:stop]
        k = np.arange(start, stop, dtype=float)
        with np.errstate(under="ignore"):
            if deriv:
                terms = k * pk * np.exp((k - 1) * logt)
            else:
                terms = pk * np.exp(k * logt)
        part = math.fsum(terms.tolist())
        total += part
        if dist.bounded and stop > dist.support_max:
            break
        last = terms[-1]
        if last == 0.0 or last < 1e-20 * total and np.all(np.diff(terms[-8:]) <= 0):
            break
        if stop > r + 200_000:
            break
        start = stop
        block *= 2
    return total


def _log1p_plus(u: float) -> float:
    # log(1 - u) + u without cancellation
    if abs(u) < 1e-3:
        s = 0.0
        term = u
        for j in range(2, 12):
            term *= u
            s -= term / j
        return s
    return math.log1p(-u) + u


def _expm1_minus(x: np.ndarray) -> np.ndarray:
    # exp(x) - 1 - x without cancellation
    out = np.empty_like(x)
    small = np.abs(x) < 1e-2
    xs = x[small]
    acc = np.zeros_like(xs)
    term = np.ones_like(xs)
    for j in range(1, 9):
        term = term * xs / j
        if j >= 2:
            acc = acc + term
    out[small] = acc
    xl = x[~small]
    out[~small] = np.expm1(xl) - xl
    return out


def _bregman(dist: OffspringDistribution, q: float, d: float) -> float:
    """``G(q - d) - G(q) + d G'(q) >= 0`` without cancellation."""
    if d == 0.0:
        return 0.0
    u = d / q
    kmax = dist.support_max if dist.bounded else None
    total = 0.0
    start = 0
    block = 64
    if u > 0.5:
        # no cancellation issue: evaluate directly
        return dist.pgf(q - d) - q + d * dist.pgf_derivative(q, 1)
    lg = math.log1p(-u)
    l2 = _log1p_plus(u)
    logq = math.log(q)
    while True:
        stop = start + block if kmax is None else kmax + 1
        pk = dist.pmf_array(stop - 1)[start:stop]
        k = np.arange(start, stop, dtype=float)
        with np.errstate(under="ignore"):
            w = pk * np.exp(k * logq)
        psi = _expm1_minus(k * lg) + k * l2
        terms = w * psi
        total += math.fsum(terms.tolist())
        if kmax is not None:
            break
        if w[-1] == 0.0 or w[-1] * (k[-1] ** 2) < 1e-30:
            break
        start = stop
        block *= 2
    return max(total, 0.0)


def _solve_deficit(dist: OffspringDistribution, r: int, q: float) -> tuple[float, int]:
    one_minus_gq = 1.0 - dist.pgf_derivative(q, 1)
    e_q = _weighted_tail_series(dist, r, q, False)
    if e_q == 0.0:
        return 0.0, 0
    d = min(e_q / one_minus_gq, q)
    lo, hi = 0.0, q
    it = 0
    for it in range(1, 400):
        f = d * one_minus_gq + _bregman(dist, q, d) - _weighted_tail_series(dist, r, q - d, False)
        if f > 0.0:
            hi = d
        elif f < 0.0:
            lo = d
        else:
            break
        fp = 1.0 - dist.pgf_derivative(q - d, 1) + _weighted_tail_series(dist, r, q - d, True)
        d_new = d - f / fp if fp > 0.0 else -1.0
        if not (lo <= d_new <= hi):
            d_new = 0.5 * (lo + hi)
        if abs(d_new - d) <= 4 * EPS * d_new or hi - lo <= 4 * EPS * hi:
            d = d_new
            break
        d = d_new
    return d, it


# ---------------------------------------------------------------------------
# solver


def solve(dist: OffspringDistribution, r: int) -> FixedPoint:
    """Fixed point of ``G_r`` selected as ``P[M <= r]`` (cached per distribution)."""
    if r < 0:
        raise ValueError("r must be nonnegative")
    cache = _cache(dist)
    hit = cache.get(r)
    if hit is not None:
        return hit
    fp = _solve_uncached(dist, r)
    cache[r] = fp
    return fp


def _solve_uncached(dist: OffspringDistribution, r: int) -> FixedPoint:
    fbar = dist.tail(r)
    p = dist.pmf_array(r)
    if fbar == 0.0:
        slope = _backend.kernels.trunc_tail(p, r, 0.0, 0.0)[1]
        return FixedPoint(r, 1.0, 0.0, None, 0, 0.0, slope)
    if dist.is_supercritical:
        q = dist.extinction_probability()
        if dist.p0 == 0.0:
            return FixedPoint(r, 0.0, 1.0, 0.0, 0, 0.0, dist.pmf(1))
        d, it = _solve_deficit(dist, r, q)
        cdf = q - d
        residual = abs(dist.pgf_truncated(r, cdf) - cdf)
        slope = dist.pgf_derivative(cdf, 1, truncation=r)
        if residual >= RESIDUAL_TOL:
            raise ConvergenceError(f"deficit solve for r={r} did not converge", cdf, residual)
        return FixedPoint(r, cdf, (1.0 - q) + d, d, it, residual, slope)
    max_iter = 2000 + 10 * r
    s, it, res, slope = _backend.kernels.solve_tail(p, r, fbar, SOLVER_RTOL, max_iter)
    if it >= max_iter and abs(res) >= RESIDUAL_TOL:
        raise ConvergenceError(f"fixed point for r={r} did not converge", 1.0 - s, abs(res))
    return FixedPoint(r, 1.0 - s, s, None, it, abs(res), slope)


def global_cdf(dist: OffspringDistribution, r: int) -> float:
    """``q_[0,r] = P[M <= r]``."""
    return solve(dist, r).cdf


def global_tail(dist: OffspringDistribution, r: int) -> float:
    """``H̄(r) = 1 - q_[0,r]`` computed natively in the tail variable."""
    return solve(dist, r).tail


def _pmf_and_relerr(dist: OffspringDistribution, r: int) -> tuple[float, float]:
    cur = solve(dist, r)
    if r == 0:
        return max(cur.cdf, 0.0), EPS
    prev = solve(dist, r - 1)
    if cur.deficit is not None and prev.deficit is not None:
        val = prev.deficit - cur.deficit
        scale = prev.deficit
    else:
        val = prev.tail - cur.tail
        scale = prev.tail
    cond = 1.0 / max(1.0 - prev.slope, EPS) if cur.deficit is None else 1.0 / max(1.0 - dist.pgf_derivative(dist.extinction_probability(), 1), EPS)
    if -1e-12 < val < 0.0:
        val = 0.0
    relerr = math.inf if val <= 0.0 else 8 * EPS * scale * cond / val
    return val, relerr


def global_pmf(dist: OffspringDistribution, r: int) -> float:
    """``q_r = q_[0,r] - q_[0,r-1]`` (``q_0 = q_[0,0]``)."""
    return _pmf_and_relerr(dist, r)[0]


def global_pmf_relerr(dist: OffspringDistribution, r: int) -> float:
    """Estimated relative rounding error of :func:`global_pmf`."""
    return _pmf_and_relerr(dist, r)[1]


def infinite_mass(dist: OffspringDistribution) -> float:
    """``lim_r H̄(r) = P[M = inf]``."""
    if not dist.is_supercritical or dist.bounded:
        return 0.0
    return 1.0 - dist.extinction_probability()


def global_law(dist: OffspringDistribution, r_max: int) -> GlobalLaw:
    law = GlobalLaw([], infinite_mass(dist))
    for r in range(r_max + 1):
        fp = solve(dist, r)
        pmf, relerr = _pmf_and_relerr(dist, r)
        law.rows.append(DistRow(r, fp.cdf, pmf, fp.tail))
        law.iterations.append(fp.iterations)
        law.residuals.append(fp.residual)
        law.pmf_relerr.append(relerr)
    return law


def global_table(dist: OffspringDistribution, r_max: int) -> DistTable:
    law = global_law(dist, r_max)
    return DistTable(
        "global",
        None,
        law.rows,
        {
            "limit_mass_at_infinity": law.limit_mass_at_infinity,
            "iterations": law.iterations,
            "residuals": law.residuals,
        },
    )


def local_limit_gap(dist: OffspringDistribution, r: int, tol: float = 1e-8, max_n: int = 10_000_000):
    """Iterate ``G_r`` from 1 until within ``tol`` of ``q_[0,r]``.

    Returns ``(n, gaps)`` where ``gaps`` holds ``local_cdf(k, r) - global_cdf(r)``
    sampled along the way (nonincreasing) and ``n`` is the stopping horizon.
    """
    target = solve(dist, r)
    p = dist.pmf_array(r)
    fbar = dist.tail(r)
    kern = _backend.kernels
    s = 0.0
    gaps = []
    n = -1
    chunk = 1
    while n < max_n:
        caps = np.full(chunk, r, dtype=np.int64)
        s = kern.tail_orbit(p, caps, np.full(chunk, fbar), s)
        n += chunk
        gap = target.tail - s
        gaps.append((n, gap))
        if gap < tol:
            return n, gaps
        chunk = min(chunk * 2, 4096)
    raise ConvergenceError(f"local cdf did not reach the global cdf at r={r}", 1.0 - s, target.tail - s)
