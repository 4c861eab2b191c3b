from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gwmaxdeg import exact
from gwmaxdeg.exact import GenerationCapVector
from gwmaxdeg.offspring import OffspringError, OffspringSpec, build

from conftest import law
from oracle_values import GEO13_LOCAL4_CDF_R3


def _enumerate_generation_law(p, n):
    """Brute-force law of (M_0..M_n) for a small explicit pmf by enumerating trees."""
    # state: tuple of generation sizes -> probability; returns dict of max-vectors
    out = {}

    def rec(z, depth, prob, maxes):
        if depth > n:
            out[maxes] = out.get(maxes, 0.0) + prob
            return
        if z == 0:
            rec(0, depth + 1, prob, maxes + (-1,))
            return
        for kids in itertools.product(range(len(p)), repeat=z):
            pr = math.prod(p[k] for k in kids)
            if pr:
                rec(sum(kids), depth + 1, prob * pr, maxes + (max(kids),))

    rec(1, 0, 1.0, ())
    return out


def test_binary_examples(laws):
    b = laws["binary"]
    assert exact.finite_dim_cdf(b, [2, 1]) == 0.625
    assert exact.generation_cdf(b, 1, 1) == 0.625
    assert exact.generation_pmf(b, 1, 2) == 0.375
    assert exact.local_pmf(b, 1, 2) == 0.5
    assert exact.joint_union_prob(b, GenerationCapVector.of([(0, 2), (1, 2)])) == 0.5


def test_generation_zero_is_offspring_law(laws):
    for d in laws.values():
        for r in range(6):
            assert exact.generation_pmf(d, 0, r) == d.pmf(r)
            assert exact.local_pmf(d, 0, r) == d.pmf(r)


def test_enumeration_oracle():
    p = [0.3, 0.2, 0.5]
    d = build(OffspringSpec.explicit(p))
    n = 2
    joint = _enumerate_generation_law(p, n)
    for r0, r1, r2 in itertools.product(range(3), repeat=3):
        want = sum(pr for m, pr in joint.items() if m[0] <= r0 and m[1] <= r1 and m[2] <= r2)
        assert exact.finite_dim_cdf(d, [r0, r1, r2]) == pytest.approx(want, abs=1e-15)
    for r in range(3):
        gen = sum(pr for m, pr in joint.items() if m[2] == r)
        loc = sum(pr for m, pr in joint.items() if max(m) == r)
        assert exact.generation_pmf(d, 2, r) == pytest.approx(gen, abs=1e-15)
        assert exact.local_pmf(d, 2, r) == pytest.approx(loc, abs=1e-15)
    # cdf below zero is extinction by generation 2
    ext = sum(pr for m, pr in joint.items() if m[2] == -1)
    assert exact.generation_extinct(d, 2) == pytest.approx(ext, abs=1e-15)


def test_equal_caps_match_local_bitwise(laws):
    for d in laws.values():
        for n in range(5):
            for r in range(6):
                assert exact.finite_dim_cdf(d, [r] * (n + 1)) == exact.local_cdf(d, n, r)


def test_local_cdf_geometric_regression(laws):
    assert exact.local_cdf(laws["geo13"], 4, 3) == pytest.approx(GEO13_LOCAL4_CDF_R3, rel=1e-15)


def test_tables(laws):
    t = exact.table(laws["geo13"], "local", 4, 50)
    assert len(t) == 51 and t.label == "local:4"
    assert np.all(np.diff(t.column("cdf")) >= 0)
    g = exact.generation_table(laws["binary"], 1, 2)
    assert g.metadata["cdf_below_zero"] == 0.5
    assert g.rows[0].pmf == 0.125  # G(p_0) - G(0)
    with pytest.raises(ValueError):
        exact.table(laws["geo13"], "nope", 1, 3)


def test_local_tails_all_n(laws):
    d = laws["pois08"]
    tails, pmfs = exact.local_tails_all_n(d, 4, 6)
    for n in range(7):
        assert tails[n] == exact.local_tail(d, n, 4)
        assert pmfs[n] == exact.local_pmf(d, n, 4)


def test_joint_union_reduces_to_generation_pmf(laws):
    for name in ("geo13", "pois15", "pow3"):
        d = laws[name]
        for n in range(4):
            for r in range(1, 6):
                j = exact.joint_union_prob(d, GenerationCapVector.of([(n, r)]))
                assert j == pytest.approx(exact.generation_pmf(d, n, r), rel=1e-13)


def test_joint_union_two_generations_oracle():
    # difference of interleaved compositions against direct near-1 arithmetic
    p = [0.3, 0.2, 0.5]
    d = build(OffspringSpec.explicit(p))
    G = lambda t: 0.3 + 0.2 * t + 0.5 * t * t
    Gr = lambda r, t: sum(p[k] * t**k for k in range(r + 1))
    want = G(Gr(2, G(Gr(2, 1.0)))) - G(Gr(1, G(Gr(1, 1.0))))
    got = exact.joint_union_prob(d, GenerationCapVector.of([(1, 2), (3, 2)]))
    assert got == pytest.approx(want, abs=1e-15)


def test_cap_vector_validation():
    with pytest.raises(ValueError):
        GenerationCapVector.of([(1, 2), (1, 3)])
    with pytest.raises(ValueError):
        GenerationCapVector.of([])
    with pytest.raises(ValueError):
        exact.joint_union_prob(law("binary"), GenerationCapVector.of([(0, 0)]))


def test_tiny_pmfs_keep_relative_accuracy(laws):
    # P[M_n = r] ~ mu^n p_r deep in the tail, far below cdf resolution
    d = laws["geo13"]
    r = 200
    assert exact.generation_pmf(d, 2, r) / (0.25 * d.pmf(r)) == pytest.approx(1.0, rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(["binary", "geo13", "geo12", "pois08", "pois15", "pow3", "super_bounded"]),
       st.integers(0, 6), st.integers(0, 30))
def test_bounds_hold(name, n, r):
    d = law(name)
    mu = d.mean
    assert exact.generation_pmf(d, n, r) <= mu**n * d.pmf(r) + 1e-12
    assert exact.local_pmf(d, n, r) <= d.pmf(r) * math.fsum(mu**i for i in range(n + 1)) + 1e-12
    assert exact.generation_tail(d, n, r) <= mu**n * d.tail(r) + 1e-12
    assert 0.0 <= exact.local_pmf(d, n, r) <= 1.0
    assert exact.local_cdf(d, n, r) <= exact.generation_cdf(d, n, r) + 1e-15


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 4), min_size=1, max_size=6))
def test_finite_dim_monotone_in_caps(caps):
    d = law("pois08")
    base = exact.finite_dim_cdf(d, caps)
    for i in range(len(caps)):
        bigger = list(caps)
        bigger[i] += 1
        assert exact.finite_dim_cdf(d, bigger) >= base - 1e-16
