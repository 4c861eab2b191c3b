from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gwmaxdeg import exact, global_law
from gwmaxdeg.offspring import OffspringSpec, build

from conftest import law
from oracle_values import (GEO12_HBAR10, GEO12_Q10, GEO13_Q40, POIS08_Q20, POIS15_CDF, POIS15_QR,
                           POW3_HBAR)


def test_binary_fixed_points(laws):
    b = laws["binary"]
    assert [global_law.global_cdf(b, r) for r in range(3)] == [0.5, 0.5, 1.0]
    assert [global_law.global_pmf(b, r) for r in range(3)] == [0.5, 0.0, 0.5]


def test_supercritical_bounded(laws):
    d = laws["super_bounded"]
    assert global_law.global_cdf(d, 0) == 0.25
    assert global_law.global_cdf(d, 1) == 0.25
    assert global_law.global_cdf(d, 2) == 1.0
    assert global_law.infinite_mass(d) == 0.0


def test_no_death_law(laws):
    d = laws["no_death"]
    assert [global_law.global_cdf(d, r) for r in range(5)] == [0.0, 0.0, 0.0, 1.0, 1.0]


def test_infinite_mass(laws):
    assert global_law.infinite_mass(laws["pois15"]) == pytest.approx(0.5828116438658114, rel=1e-15)
    assert global_law.infinite_mass(laws["geo13"]) == 0.0


@pytest.mark.parametrize("name,r,want", [
    ("geo13", 40, GEO13_Q40),
    ("pois08", 20, POIS08_Q20),
    ("geo12", 10, GEO12_Q10),
] + [("pois15", r, v) for r, v in POIS15_QR.items()])
def test_pmf_against_multiprecision(name, r, want):
    assert global_law.global_pmf(law(name), r) == pytest.approx(want, rel=1e-13)


def test_tails_against_multiprecision(laws):
    assert global_law.global_tail(laws["geo12"], 10) == pytest.approx(GEO12_HBAR10, rel=1e-13)
    for r, v in POW3_HBAR.items():
        assert global_law.global_tail(laws["pow3"], r) == pytest.approx(v, rel=1e-12)
    for r, v in POIS15_CDF.items():
        assert global_law.global_cdf(laws["pois15"], r) == pytest.approx(v, rel=1e-15)


@pytest.mark.parametrize("name", ["binary", "geo13", "geo12", "pois08", "pois15", "pow3",
                                  "super_bounded", "no_death"])
def test_residuals_and_monotonicity(name):
    d = law(name)
    law_ = global_law.global_law(d, 60)
    cdf = law_.column("cdf")
    assert np.all(np.diff(cdf) >= 0)
    for row in law_.rows:
        assert abs(d.pgf_truncated(row.r, row.cdf) - row.cdf) < 1e-10
        assert row.cdf + row.tail == pytest.approx(1.0, abs=4e-16)


def test_local_decreases_to_global(laws):
    for name in ("geo13", "pois15", "binary", "pow3"):
        d = laws[name]
        for r in (1, 2, 5):
            n, gaps = global_law.local_limit_gap(d, r, tol=1e-8)
            vals = [g for _, g in gaps]
            assert all(b <= a for a, b in zip(vals, vals[1:]))
            assert 0.0 <= vals[-1] < 1e-8
            assert exact.local_cdf(d, n, r) - global_law.global_cdf(d, r) < 1e-8


def test_cache_is_shared(laws):
    d = laws["geo13"]
    a = global_law.solve(d, 17)
    assert global_law.solve(d, 17) is a


def test_table(laws):
    t = global_law.global_table(laws["pois15"], 10)
    assert t.target == "global" and len(t) == 11
    assert t.metadata["limit_mass_at_infinity"] == pytest.approx(0.58281164386581, rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 0.95), st.integers(0, 60))
def test_geometric_fixed_point_property(a, r):
    d = build(OffspringSpec.geometric(a))
    fp = global_law.solve(d, r)
    # G_r(t) = t within rounding and t below the extinction probability
    assert abs(d.pgf_truncated(r, fp.cdf) - fp.cdf) < 1e-12
    assert fp.cdf <= d.extinction_probability() + 1e-15
    # the selected root is the limit of the decreasing iteration from 1
    t = 1.0
    for _ in range(3):
        t = d.pgf_truncated(r, t)
    assert fp.cdf <= t + 1e-15
