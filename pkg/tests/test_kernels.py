"""Compiled and pure-Python kernels must agree."""
from __future__ import annotations

import numpy as np
import pytest

from gwmaxdeg import _kernels_py as py
from gwmaxdeg import montecarlo as mc

from conftest import law

cy = pytest.importorskip("gwmaxdeg._kernels")

P = np.array([0.2, 0.3, 0.1, 0.25, 0.15])


@pytest.mark.parametrize("s", [0.0, 1e-300, 1e-9, 0.3, 0.999, 1.0])
def test_trunc_tail(s):
    for r in range(5):
        fbar = float(P[r + 1:].sum())
        a = py.trunc_tail(P, r, fbar, s)
        b = cy.trunc_tail(P, r, fbar, s)
        assert a == pytest.approx(b, rel=1e-14, abs=1e-300)


def test_trunc_divdiff_and_orbit():
    for r in range(5):
        assert py.trunc_divdiff(P, r, 0.4, 0.1) == pytest.approx(cy.trunc_divdiff(P, r, 0.4, 0.1), rel=1e-14)
    caps = np.array([3, 1, 4, 2], dtype=np.int64)
    fb = np.array([float(P[c + 1:].sum()) for c in caps])
    assert py.tail_orbit(P, caps, fb, 0.0) == pytest.approx(cy.tail_orbit(P, caps, fb, 0.0), rel=1e-14)


def test_solve_and_local_pair():
    d = law("pois08")
    p = d.pmf_array(12)
    a = py.solve_tail(p, 12, d.tail(12), 4e-16, 500)
    b = cy.solve_tail(p, 12, d.tail(12), 4e-16, 500)
    assert a[0] == pytest.approx(b[0], rel=1e-14)
    ba, da = py.local_pair(p, 12, d.tail(12), 30)
    bb, db = cy.local_pair(p, 12, d.tail(12), 30)
    np.testing.assert_allclose(ba, bb, rtol=1e-14)
    np.testing.assert_allclose(da, db, rtol=1e-13)


def test_uniform_streams_bitwise():
    for seed, trial in [(0, 0), (42, 7), (2**64 - 1, 12345)]:
        assert np.array_equal(py.uniform_stream(seed, trial, 20), cy.uniform_stream(seed, trial, 20))


def test_uniforms_look_uniform():
    u = py.uniform_stream(1, 2, 20000)
    assert 0.0 <= u.min() and u.max() < 1.0
    assert abs(u.mean() - 0.5) < 0.01


@pytest.mark.parametrize("name", ["binary", "geo13", "pois15", "pow3"])
def test_simulate_block_bitwise(name):
    d = law(name)
    s = mc.OffspringSampler.for_distribution(d)
    args = (s.prob, s.alias, s.kmax, s.tail_kind, s.tail_params, 9, 100, 300, 200, 10**4, 3, -1, True, 0,
            mc.survival_population(d))
    a = py.simulate_block(*args)
    b = cy.simulate_block(*args)
    for x, y in zip(a, b):
        assert np.array_equal(x, y)
