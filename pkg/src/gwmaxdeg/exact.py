"""Exact laws of per-generation and local maximal out-degrees.

All compositions run in the tail variable.  A cdf ``C`` is represented by
``1 - C``; differences of two cdfs (the pmfs) are propagated alongside as a
separate nonnegative gap so that no near-1 numbers are ever subtracted.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from . import _backend
from .offspring import OffspringDistribution


class DistRow(NamedTuple):
    r: int
    cdf: float
    pmf: float
    tail: float


@dataclass
class DistTable:
    """Law of ``M_n`` (``generation``), ``M_[0,n]`` (``local``) or ``M`` (``global``)."""

    target: str
    horizon: int | None
    rows: list[DistRow]
    metadata: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(row, name) for row in self.rows])

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def label(self) -> str:
        return self.target if self.horizon is None else f"{self.target}:{self.horizon}"


@dataclass(frozen=True)
class GenerationCapVector:
    """Pairs ``(n_i, r_i)`` with strictly increasing generation indices."""

    pairs: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if not self.pairs:
            raise ValueError("cap vector must be nonempty")
        prev = -1
        for n, r in self.pairs:
            if n < 0 or r < 0:
                raise ValueError("generation indices and caps must be nonnegative")
            if n <= prev:
                raise ValueError("generation indices must increase strictly")
            prev = n

    @classmethod
    def of(cls, pairs: Iterable[Sequence[int]]) -> "GenerationCapVector":
        return cls(tuple((int(n), int(r)) for n, r in pairs))


# ---------------------------------------------------------------------------
# primitive steps on (b, delta) pairs: b is a tail value, delta >= 0 the gap
# to the companion orbit that uses one-smaller caps


def _full_step(dist: OffspringDistribution, b: float, delta: float) -> tuple[float, float]:
    if delta != 0.0:
        delta = dist.tail_pgf_divdiff(b + delta, b) * delta
    return dist.tail_pgf(b), delta


def _trunc_step(dist: OffspringDistribution, r: int, b: float, delta: float) -> tuple[float, float]:
    k = _backend.kernels
    p = dist.pmf_array(r)
    if r == 0:
        # G_{-1} is identically 0 (every vertex violates the cap)
        nb = k.trunc_tail(p, 0, dist.tail(0), b)[0]
        return nb, 1.0 - nb
    dd = k.trunc_divdiff(p, r - 1, b + delta, b) if delta != 0.0 else 0.0
    delta = dd * delta + p[r] * (1.0 - b) ** r
    nb = k.trunc_tail(p, r, dist.tail(r), b)[0]
    return nb, delta


# ---------------------------------------------------------------------------
# finite-dimensional distributions


def finite_dim_tail(dist: OffspringDistribution, caps: Sequence[int]) -> float:
    """``1 - P[M_i <= caps[i], 0 <= i <= n]``."""
    caps = [int(c) for c in caps]
    if not caps:
        raise ValueError("cap list must be nonempty")
    if min(caps) < 0:
        raise ValueError("caps must be nonnegative")
    order = caps[::-1]
    p = dist.pmf_array(max(order))
    fbars = [dist.tail(c) for c in order]
    return _backend.kernels.tail_orbit(p, np.array(order, dtype=np.int64), np.array(fbars), 0.0)


def finite_dim_cdf(dist: OffspringDistribution, caps: Sequence[int]) -> float:
    """``P[M_i <= r_i, 0 <= i <= n] = G_{r_0} G_{r_1} ... G_{r_n}(1)``."""
    return 1.0 - finite_dim_tail(dist, caps)


# ---------------------------------------------------------------------------
# per-generation maximum M_n


def _generation_pair(dist: OffspringDistribution, n: int, r: int) -> tuple[float, float]:
    """Return ``(P[M_n > r], P[M_n = r])``."""
    if n < 0 or r < 0:
        raise ValueError("n and r must be nonnegative")
    b = dist.tail(r)
    delta = dist.pmf(r)
    for _ in range(n):
        b, delta = _full_step(dist, b, delta)
    return b, delta


def generation_tail(dist: OffspringDistribution, n: int, r: int) -> float:
    return _generation_pair(dist, n, r)[0]


def generation_cdf(dist: OffspringDistribution, n: int, r: int) -> float:
    """``P[M_n <= r] = G^n(p_0 + ... + p_r)``; extinct-by-n trees count as ``<= r``."""
    return 1.0 - generation_tail(dist, n, r)


def generation_pmf(dist: OffspringDistribution, n: int, r: int) -> float:
    """``P[M_n = r]`` with ``P[M_n <= -1] := G^n(0)`` (extinction before n)."""
    return _generation_pair(dist, n, r)[1]


def generation_extinct(dist: OffspringDistribution, n: int) -> float:
    """``G^n(0)``: probability that generation n is empty."""
    s = 1.0
    for _ in range(n):
        s = dist.tail_pgf(s)
    return 1.0 - s


def generation_table(dist: OffspringDistribution, n: int, r_max: int) -> DistTable:
    rows = []
    for r in range(r_max + 1):
        tail, pmf = _generation_pair(dist, n, r)
        rows.append(DistRow(r, 1.0 - tail, pmf, tail))
    meta = {"cdf_below_zero": generation_extinct(dist, n)}
    return DistTable("generation", n, rows, meta)


# ---------------------------------------------------------------------------
# local maximum M_[0,n]


def _local_pair(dist: OffspringDistribution, n: int, r: int) -> tuple[float, float]:
    """Return ``(P[M_[0,n] > r], P[M_[0,n] = r])``."""
    if n < 0 or r < 0:
        raise ValueError("n and r must be nonnegative")
    if r == 0:
        # G_0 is the constant p_0: the root alone decides
        return dist.tail(0), dist.p0
    b, delta = _backend.kernels.local_pair(dist.pmf_array(r), r, dist.tail(r), n + 1)
    return float(b[n + 1]), float(delta[n + 1])


def local_tail(dist: OffspringDistribution, n: int, r: int) -> float:
    return _local_pair(dist, n, r)[0]


def local_cdf(dist: OffspringDistribution, n: int, r: int) -> float:
    """``P[M_[0,n] <= r] = G_r^{n+1}(1)``."""
    return 1.0 - local_tail(dist, n, r)


def local_pmf(dist: OffspringDistribution, n: int, r: int) -> float:
    """``P[M_[0,n] = r]``; the gap between the cap-``r`` and cap-``r-1`` orbits."""
    return _local_pair(dist, n, r)[1]


def local_table(dist: OffspringDistribution, n: int, r_max: int) -> DistTable:
    rows = []
    for r in range(r_max + 1):
        tail, pmf = _local_pair(dist, n, r)
        rows.append(DistRow(r, 1.0 - tail, pmf, tail))
    return DistTable("local", n, rows, {})


def local_tails_all_n(dist: OffspringDistribution, r: int, n_max: int) -> tuple[np.ndarray, np.ndarray]:
    """Tails and pmfs of ``M_[0,n]`` at ``r`` for every ``n <= n_max`` in one pass."""
    if r == 0:
        return np.full(n_max + 1, dist.tail(0)), np.full(n_max + 1, dist.p0)
    b, delta = _backend.kernels.local_pair(dist.pmf_array(r), r, dist.tail(r), n_max + 1)
    return np.asarray(b[1:]), np.asarray(delta[1:])


# ---------------------------------------------------------------------------
# joint events over several generations


def joint_union_prob(dist: OffspringDistribution, caps: GenerationCapVector) -> float:
    """Difference of interleaved compositions for the multi-generation event.

    Returns ``C(caps) - C(caps - 1)`` where
    ``C = G^{n_1} G_{r_1} G^{n_2 - n_1 - 1} G_{r_2} ... G_{r_m}(1)``.
    """
    if any(r < 1 for _, r in caps.pairs):
        raise ValueError("all caps must be >= 1")
    b, delta = 0.0, 0.0
    pairs = list(caps.pairs)
    for idx in range(len(pairs) - 1, -1, -1):
        n_i, r_i = pairs[idx]
        b, delta = _trunc_step(dist, r_i, b, delta)
        gap = n_i if idx == 0 else n_i - pairs[idx - 1][0] - 1
        for _ in range(gap):
            b, delta = _full_step(dist, b, delta)
    return delta


def table(dist: OffspringDistribution, target: str, horizon: int | None, r_max: int) -> DistTable:
    """Dispatch on ``target`` in {generation, local, global}."""
    if target == "generation":
        return generation_table(dist, int(horizon), r_max)
    if target == "local":
        return local_table(dist, int(horizon), r_max)
    if target == "global":
        from .global_law import global_table

        return global_table(dist, r_max)
    raise ValueError(f"unknown target {target!r}")
