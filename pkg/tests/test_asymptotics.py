from __future__ import annotations

import math

import pytest

from gwmaxdeg import asymptotics as A
from gwmaxdeg import global_law

from conftest import law
from oracle_values import (GEO13_FBAR40_OVER_HBAR40, GEO13_GEN2_R40_RATIO, GEO13_LOCAL3_R40_RATIO,
                           GEO13_P40_OVER_Q40, POIS15_ONE_MINUS_GPRIME_Q, POIS15_Q)


def _row(series, r):
    return next(row for row in series.rows if row.r == r)


def test_generation_n0_exact_one(laws):
    for name in ("geo13", "pois15", "pow3", "binary"):
        rep = A.generation_ratio_table(laws[name], 0, range(0, 20))
        assert all(row.ratio == 1.0 for row in rep.series[0].rows)


def test_generation_geometric(laws):
    rep = A.generation_ratio_table(laws["geo13"], 2, range(0, 61))
    row = _row(rep.get("pmf"), 40)
    assert abs(row.ratio - 1) < 0.01
    assert row.ratio == pytest.approx(GEO13_GEN2_R40_RATIO, rel=1e-12)
    assert all(r.ratio <= 1 + 1e-12 for r in rep.get("pmf").rows)
    assert not rep.bound_violations


def test_generation_binary_bound_only(laws):
    rep = A.generation_ratio_table(laws["binary"], 1, range(0, 3))
    assert _row(rep.series[0], 2).ratio == 0.75
    assert rep.series[0].kind == "bound"
    assert [r.r for r in rep.series[0].rows] == [0, 2]  # p_1 = 0 omitted


def test_local_geometric(laws):
    rep = A.local_ratio_table(laws["geo13"], 3, range(0, 81))
    assert rep.constant_claimed == pytest.approx(1.875, rel=1e-15)
    assert _row(rep.get("pmf"), 40).ratio == pytest.approx(GEO13_LOCAL3_R40_RATIO, rel=1e-12)
    assert rep.get("pmf").verdict["end_rel_dev"] < 0.01
    n0 = A.local_ratio_table(laws["geo13"], 0, range(0, 30))
    assert all(row.ratio == 1.0 for row in n0.get("pmf").rows)


def test_subcritical(laws):
    rep = A.subcritical_global_ratio_table(laws["geo13"], range(1, 61))
    assert rep.constant_claimed == 0.5
    r40 = _row(rep.get("p/q"), 40)
    assert abs(r40.ratio - 0.5) < 0.01
    assert r40.ratio == pytest.approx(GEO13_P40_OVER_Q40, rel=1e-12)
    assert _row(rep.get("Fbar/Hbar"), 40).ratio == pytest.approx(GEO13_FBAR40_OVER_HBAR40, rel=1e-12)
    # shared cache: identical q_r
    assert all(row.denominator == global_law.global_pmf(laws["geo13"], row.r) for row in rep.get("p/q").rows)
    p = A.subcritical_global_ratio_table(laws["pois08"], range(1, 100))
    assert p.get("p/q").ratios[-1] == pytest.approx(0.2, rel=1e-6)


def test_regime_mismatch(laws):
    with pytest.raises(A.RegimeError):
        A.subcritical_global_ratio_table(laws["binary"], range(1, 5))
    with pytest.raises(A.RegimeError):
        A.critical_bounds_report(laws["geo13"], range(1, 5))
    with pytest.raises(A.RegimeError):
        A.supercritical_limits_report(laws["super_bounded"], range(1, 5))
    with pytest.raises(A.RegimeError):
        A.critical_bounds_report(laws["binary"], range(1, 5))


def test_precision_floor_error(laws):
    with pytest.raises(A.PrecisionFloorError):
        A.subcritical_global_ratio_table(laws["geo13"], range(1000, 1010))


def test_critical_geometric(laws):
    rep = A.critical_bounds_report(laws["geo12"], range(1, 200))
    assert not rep.bound_violations
    assert rep.get("q/p").passed
    assert rep.verdict["two_over_sigma2"] == 1.0
    assert all(rep.verdict["liminf_Hbar_over_Fbar"].values())
    assert rep.precision_floor_r is not None and rep.precision_floor_r < 199


def test_critical_power_law(laws):
    rep = A.critical_bounds_report(laws["pow3"], range(10, 501))
    assert not rep.bound_violations
    q2 = rep.get("q^2/p").ratios
    assert q2[-1] < q2[0]
    assert rep.get("q^2/p").passed
    assert rep.get("q/p").verdict["growth"] >= 10


def test_supercritical(laws):
    rep = A.supercritical_limits_report(laws["pois15"], range(1, 200))
    assert rep.constant_claimed == pytest.approx(POIS15_ONE_MINUS_GPRIME_Q, rel=1e-14)
    assert rep.verdict["one_minus_q"] == pytest.approx(1 - POIS15_Q, rel=1e-15)
    b = rep.get("p q^r/q")
    assert abs(b.ratios[-1] / rep.constant_claimed - 1) < 1e-10
    # the q^(r-1) series tends to the same constant divided by q
    a = rep.get("p q^(r-1)/q")
    assert a.ratios[-1] == pytest.approx(POIS15_ONE_MINUS_GPRIME_Q / POIS15_Q, rel=1e-10)


def test_truncated_first_moment(laws):
    assert A.truncated_first_moment(laws["geo13"], -1) == laws["geo13"].mean
    assert A.truncated_first_moment(laws["binary"], 2) == 0.0
    assert A.truncated_first_moment(laws["binary"], 1) == 1.0
    g = laws["geo13"]
    direct = math.fsum(k * g.pmf(k) for k in range(6, 300))
    assert A.truncated_first_moment(g, 5) == pytest.approx(direct, rel=1e-12)
