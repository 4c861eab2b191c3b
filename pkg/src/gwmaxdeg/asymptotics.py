"""Asymptotic constants and bounds tabulated against exact values.

Each report holds one or more series of rows ``(r, numerator, denominator,
ratio, bound_ok)``.  A series is one of

* ``limit``:    ratio should approach ``target``;
* ``bound``:    ``numerator <= denominator`` must hold (ratio <= 1);
* ``diverge``:  ratio should grow without bound;
* ``limsup``:   ratio's limsup should not exceed ``target``.

Rows are restricted to a trusted window: the leading run of ``r`` values at
which every quantity is a normal float well above underflow and the
estimated relative rounding error stays below ``TRUST_RELERR``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from . import exact, global_law
from .offspring import EPS, OffspringDistribution

BOUND_TOL = 1e-12
TRUST_RELERR = 1e-6
TINY = 1e-280
DIVERGE_FACTOR = 10.0
DIVERGE_FLOOR = 5.0
LIMSUP_REL = 0.05
LIMSUP_ZERO_ABS = 0.01
LIMIT_REL_TOL = 0.02


class RegimeError(ValueError):
    """Distribution does not satisfy a report's hypotheses."""


class PrecisionFloorError(ArithmeticError):
    """No row of the requested range survives the precision floor."""


class RatioRow(NamedTuple):
    r: int
    numerator: float
    denominator: float
    ratio: float
    bound_ok: bool


@dataclass
class RatioSeries:
    name: str
    kind: str                  # limit | bound | diverge | limsup
    target: float | None
    rows: list[RatioRow]
    verdict: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(row, name) for row in self.rows])

    @property
    def ratios(self) -> np.ndarray:
        return self.column("ratio")

    @property
    def passed(self) -> bool:
        return bool(self.verdict.get("ok", True))


@dataclass
class RatioReport:
    regime: str
    constant_claimed: float
    constant_label: str
    series: list[RatioSeries]
    precision_floor_r: int | None
    window: tuple[int, int] | None
    verdict: dict = field(default_factory=dict)

    def get(self, name: str) -> RatioSeries:
        for s in self.series:
            if s.name == name:
                return s
        raise KeyError(name)

    @property
    def bound_violations(self) -> list[tuple[str, int]]:
        return [(s.name, row.r) for s in self.series for row in s.rows if not row.bound_ok]

    @property
    def ok(self) -> bool:
        return not self.bound_violations and all(s.passed for s in self.series)


# ---------------------------------------------------------------------------
# helpers


def truncated_first_moment(dist: OffspringDistribution, r: int) -> float:
    """``sum_{i > r} i p_i``."""
    if r < 0:
        return float(dist.mean)
    if dist.bounded and r >= dist.support_max:
        return 0.0
    return float(dist.tail_first_moment(r))


def _geom_sum(mu: float, n: int) -> float:
    return math.fsum(mu ** i for i in range(n + 1))


def _trusted(*vals: float, relerr: float = 0.0) -> bool:
    return all(math.isfinite(v) and v > TINY for v in vals) and relerr < TRUST_RELERR


def _support_rows(dist: OffspringDistribution, r_range: Iterable[int]) -> list[int]:
    rs = sorted({int(r) for r in r_range})
    if not rs or rs[0] < 0:
        raise ValueError("r_range must be a nonempty set of nonnegative integers")
    return [r for r in rs if dist.pmf(r) > 0.0]


def _cut_window(rs: list[int], trust: list[bool]) -> list[int]:
    out = []
    for r, ok in zip(rs, trust):
        if not ok:
            break
        out.append(r)
    return out


def _row(r: int, num: float, den: float, bound: bool) -> RatioRow:
    ratio = num / den if den != 0.0 else math.inf
    ok = True
    if bound:
        ok = not (num - den > BOUND_TOL)
    return RatioRow(r, num, den, ratio, ok)


def _finish_series(s: RatioSeries) -> RatioSeries:
    rat = s.ratios
    v: dict = {"n_rows": len(s.rows)}
    if len(rat) == 0:
        v["ok"] = False
        s.verdict = v
        return s
    if s.kind == "limit":
        dev = np.abs(rat / s.target - 1.0)
        v["max_rel_dev"] = float(dev.max())
        v["start_rel_dev"] = float(dev[0])
        v["end_rel_dev"] = float(dev[-1])
        v["end_abs_dev"] = float(abs(rat[-1] - s.target))
        v["trend_ok"] = bool(dev[-1] <= dev[0])
        v["ok"] = v["trend_ok"] and v["end_rel_dev"] <= LIMIT_REL_TOL
    elif s.kind == "bound":
        excess = [(row.numerator - row.denominator) / row.denominator for row in s.rows]
        v["max_rel_excess"] = float(max(excess))
        v["violations"] = sum(not row.bound_ok for row in s.rows)
        v["ok"] = v["violations"] == 0
    elif s.kind == "diverge":
        v["start"] = float(rat[0])
        v["end"] = float(rat[-1])
        v["growth"] = float(rat[-1] / rat[0])
        v["ok"] = bool(rat[-1] >= DIVERGE_FACTOR * rat[0] and rat[-1] > DIVERGE_FLOOR)
    elif s.kind == "limsup":
        half = rat[len(rat) // 2:]
        run_max = float(half.max())
        v["start"] = float(rat[0])
        v["end"] = float(rat[-1])
        v["running_max_last_half"] = run_max
        v["decreasing"] = bool(rat[-1] < rat[0])
        if s.target == 0.0:
            v["ok"] = run_max <= LIMSUP_ZERO_ABS
        else:
            v["ok"] = run_max <= s.target * (1.0 + LIMSUP_REL)
    s.verdict = v
    return s


def _report(regime, constant, label, series, rs_window, extra=None) -> RatioReport:
    for s in series:
        _finish_series(s)
    window = (rs_window[0], rs_window[-1]) if rs_window else None
    verdict = {
        "bound_violation": any(not row.bound_ok for s in series for row in s.rows),
        "series_ok": {s.name: s.passed for s in series},
    }
    lim = [s.verdict["max_rel_dev"] for s in series if s.kind == "limit" and "max_rel_dev" in s.verdict]
    if lim:
        verdict["max_rel_dev"] = max(lim)
    if extra:
        verdict.update(extra)
    return RatioReport(regime, constant, label, series, window[1] if window else None, window, verdict)


def _require_window(rs: list[int], what: str) -> None:
    if not rs:
        raise PrecisionFloorError(f"{what}: precision floor lies below the requested range")


# ---------------------------------------------------------------------------
# finite horizons


def generation_ratio_table(dist: OffspringDistribution, n: int, r_range: Iterable[int]) -> RatioReport:
    """``P[M_n = r] / (mu^n p_r)`` and ``P[M_n > r] / (mu^n F̄(r))``."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    mu = float(dist.mean)
    c = mu ** n
    rs = _support_rows(dist, r_range)
    vals = []
    for r in rs:
        tail, pmf = exact._generation_pair(dist, n, r)
        vals.append((r, pmf, c * dist.pmf(r), tail, c * dist.tail(r)))
    trust = [_trusted(v[1], v[2]) for v in vals]
    win = _cut_window(rs, trust)
    _require_window(win, "generation ratios")
    vals = vals[: len(win)]
    pmf_s = RatioSeries("pmf", "limit" if not dist.bounded else "bound", 1.0,
                        [_row(r, a, b, True) for r, a, b, _, _ in vals])
    tail_rows = [_row(r, t, tb, True) for r, _, _, t, tb in vals if tb > 0.0]
    series = [pmf_s]
    if not dist.bounded:
        series.append(RatioSeries("pmf_bound", "bound", 1.0, list(pmf_s.rows)))
        series.append(RatioSeries("tail", "limit", 1.0, tail_rows))
    series.append(RatioSeries("tail_bound", "bound", 1.0, tail_rows))
    return _report("generation", c, f"mu^{n}", series, win, {"n": n})


def local_ratio_table(dist: OffspringDistribution, n: int, r_range: Iterable[int]) -> RatioReport:
    """``P[M_[0,n] = r] / ((1 + mu + ... + mu^n) p_r)`` and the tail analogue."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    mu = float(dist.mean)
    c = _geom_sum(mu, n)
    rs = _support_rows(dist, r_range)
    vals = []
    for r in rs:
        tail, pmf = exact._local_pair(dist, n, r)
        vals.append((r, pmf, c * dist.pmf(r), tail, c * dist.tail(r)))
    trust = [_trusted(v[1], v[2]) for v in vals]
    win = _cut_window(rs, trust)
    _require_window(win, "local ratios")
    vals = vals[: len(win)]
    pmf_rows = [_row(r, a, b, True) for r, a, b, _, _ in vals]
    tail_rows = [_row(r, t, tb, True) for r, _, _, t, tb in vals if tb > 0.0]
    series = [RatioSeries("pmf_bound", "bound", 1.0, pmf_rows),
              RatioSeries("tail_bound", "bound", 1.0, tail_rows)]
    if not dist.bounded:
        series = [RatioSeries("pmf", "limit", 1.0, list(pmf_rows)),
                  RatioSeries("tail", "limit", 1.0, list(tail_rows))] + series
    return _report("local", c, "sum_{i<=%d} mu^i" % n, series, win, {"n": n})


# ---------------------------------------------------------------------------
# global maximum


def _global_vals(dist: OffspringDistribution, rs: list[int]):
    out = []
    for r in rs:
        q_r, relerr = global_law._pmf_and_relerr(dist, r)
        hbar = global_law.global_tail(dist, r)
        out.append((r, q_r, relerr, hbar))
    return out


def _require_unbounded(dist: OffspringDistribution, what: str) -> None:
    if dist.bounded:
        raise RegimeError(f"{what} requires an unbounded offspring law")


def subcritical_global_ratio_table(dist: OffspringDistribution, r_range: Iterable[int]) -> RatioReport:
    """``p_r / q_r`` and ``F̄(r) / H̄(r)`` against ``1 - mu``."""
    if dist.criticality.value != "subcritical":
        raise RegimeError(f"law is {dist.criticality.value}, not subcritical")
    _require_unbounded(dist, "subcritical global ratios")
    c = 1.0 - float(dist.mean)
    rs = _support_rows(dist, r_range)
    vals = _global_vals(dist, rs)
    trust = [_trusted(q, h, dist.pmf(r), relerr=e) for r, q, e, h in vals]
    win = _cut_window(rs, trust)
    _require_window(win, "subcritical global ratios")
    vals = vals[: len(win)]
    series = [
        RatioSeries("p/q", "limit", c, [_row(r, dist.pmf(r), q, False) for r, q, _, _ in vals]),
        RatioSeries("Fbar/Hbar", "limit", c, [_row(r, dist.tail(r), h, False) for r, _, _, h in vals]),
    ]
    return _report("subcritical", c, "1 - mu", series, win)


def critical_bounds_report(dist: OffspringDistribution, r_range: Iterable[int]) -> RatioReport:
    """Bounds and growth of ``q_r`` and ``H̄(r)`` for a critical unbounded law."""
    if not dist.is_critical:
        raise RegimeError(f"law is {dist.criticality.value}, not critical")
    _require_unbounded(dist, "critical bounds")
    var = float(dist.variance)
    target = 0.0 if not math.isfinite(var) else 2.0 / var
    rs = _support_rows(dist, r_range)
    vals = _global_vals(dist, rs)
    trust = [_trusted(q, h, dist.pmf(r), dist.tail(r), relerr=e) for r, q, e, h in vals]
    win = _cut_window(rs, trust)
    _require_window(win, "critical bounds")
    vals = vals[: len(win)]
    rows_div, rows_qb, rows_hb, rows_q2, rows_h2, rows_hf = [], [], [], [], [], []
    for r, q, _, h in vals:
        p, fb = dist.pmf(r), dist.tail(r)
        t = truncated_first_moment(dist, r)
        rows_div.append(_row(r, q, p, False))
        rows_qb.append(_row(r, q * t, p, True))
        rows_hb.append(_row(r, h * t, fb, True))
        rows_q2.append(_row(r, q * q, p, False))
        rows_h2.append(_row(r, h * h, fb, False))
        rows_hf.append(_row(r, h, fb, False))
    series = [
        RatioSeries("q/p", "diverge", None, rows_div),
        RatioSeries("Hbar/Fbar", "diverge", None, rows_hf),
        RatioSeries("q*T<=p", "bound", 1.0, rows_qb),
        RatioSeries("Hbar*T<=Fbar", "bound", 1.0, rows_hb),
        RatioSeries("q^2/p", "limsup", target, rows_q2),
        RatioSeries("Hbar^2/Fbar", "limsup", target, rows_h2),
    ]
    end_hf = rows_hf[-1].ratio
    extra = {
        "two_over_sigma2": target,
        "liminf_Hbar_over_Fbar": {str(n): bool(end_hf > n + 1) for n in (1, 2, 3)},
    }
    return _report("critical", target, "2/sigma^2", series, win, extra)


def supercritical_limits_report(dist: OffspringDistribution, r_range: Iterable[int]) -> RatioReport:
    """Limits of ``H̄(r)`` and of ``p_r q^(r-1) / q_r`` for a supercritical law.

    The series ``p q^r/q`` carries the same ratio with one more factor of
    ``q``; its limit is also ``1 - G'(q)``, and it is the one the deficit
    expansion of the fixed-point equation predicts.
    """
    if not dist.is_supercritical:
        raise RegimeError(f"law is {dist.criticality.value}, not supercritical")
    _require_unbounded(dist, "supercritical limits")
    if dist.p0 <= 0.0:
        raise RegimeError("supercritical limits require p_0 > 0")
    q = dist.extinction_probability()
    c = 1.0 - dist.pgf_derivative(q, 1)
    logq = math.log(q)
    rs = _support_rows(dist, r_range)
    vals = _global_vals(dist, rs)
    trust = [_trusted(qr, dist.pmf(r), relerr=e) for r, qr, e, _ in vals]
    win = _cut_window(rs, trust)
    _require_window(win, "supercritical limits")
    vals = vals[: len(win)]
    rows_h, rows_a, rows_b = [], [], []
    for r, qr, _, h in vals:
        lp = math.log(dist.pmf(r))
        rows_h.append(_row(r, h, 1.0 - q, False))
        rows_a.append(_row(r, math.exp(lp + (r - 1) * logq), qr, False))
        rows_b.append(_row(r, math.exp(lp + r * logq), qr, False))
    series = [
        RatioSeries("Hbar", "limit", 1.0, rows_h),
        RatioSeries("p q^(r-1)/q", "limit", c, rows_a),
        RatioSeries("p q^r/q", "limit", c, rows_b),
    ]
    extra = {"q": q, "one_minus_q": 1.0 - q, "end_cdf_gap": abs(vals[-1][3] - (1.0 - q))}
    return _report("supercritical", c, "1 - G'(q)", series, win, extra)


REGIMES = ("generation", "local", "subcritical", "critical", "supercritical")


def ratio_report(dist: OffspringDistribution, regime: str, r_range: Sequence[int], n: int | None = None) -> RatioReport:
    """Dispatch on ``regime``."""
    if regime == "generation":
        return generation_ratio_table(dist, int(n or 0), r_range)
    if regime == "local":
        return local_ratio_table(dist, int(n or 0), r_range)
    if regime == "subcritical":
        return subcritical_global_ratio_table(dist, r_range)
    if regime == "critical":
        return critical_bounds_report(dist, r_range)
    if regime == "supercritical":
        return supercritical_limits_report(dist, r_range)
    raise ValueError(f"unknown regime {regime!r}")
