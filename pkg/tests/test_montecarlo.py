from __future__ import annotations

import numpy as np
import pytest

from gwmaxdeg import exact, montecarlo as mc
from gwmaxdeg.montecarlo import OffspringSampler, SimConfig, TrialStream

from conftest import law


def _tables(d, horizon=4, r_max=30):
    tabs = [exact.table(d, t, h, r_max) for t in ("generation", "local") for h in range(horizon + 1)]
    return tabs + [exact.table(d, "global", None, r_max)]


def test_p0_one_tree_is_a_root():
    obs = mc.sample_tree(OffspringSampler.from_pmf([1.0]), TrialStream(7, 0))
    assert obs.generation_max == (0,)
    assert obs.global_max == 0 and obs.width == 1 and obs.extinct and not obs.censored


def test_sample_tree_is_reproducible(laws):
    a = mc.sample_tree(laws["geo13"], TrialStream(3, 11))
    b = mc.sample_tree(laws["geo13"], TrialStream(3, 11))
    assert a == b


def test_alias_table_reproduces_pmf():
    p = np.array([0.1, 0.0, 0.6, 0.3])
    prob, alias = mc._vose(p)
    rebuilt = prob / len(p)
    for i, a in enumerate(alias):
        rebuilt[a] += (1 - prob[i]) / len(p)
    assert np.allclose(rebuilt, p, atol=1e-15)


def test_binary_root_law(laws):
    cfg = SimConfig(trials=100_000, seed=42, targets={"generation"}, horizon=0)
    s = mc.estimate(laws["binary"], cfg, [exact.table(laws["binary"], "generation", 0, 2)])
    two = next(c for c in s.select("generation:0:pmf") if c.r == 2)
    assert abs(two.estimate - 0.5) < 4 * np.sqrt(0.25 / 1e5)
    assert abs(two.z) < 4


@pytest.mark.parametrize("name", ["binary", "geo13", "pois08"])
def test_oracle_small(name):
    d = law(name)
    cfg = SimConfig(trials=20_000, seed=42)
    s = mc.estimate(d, cfg, _tables(d), threads=2)
    assert s.censor_rate <= mc.MAX_CENSOR_RATE
    assert not s.z_failures, [(c.target, c.r, c.z) for c in s.z_failures]
    assert any(c.tested for c in s.cells)


def test_thread_independence(laws):
    cfg = SimConfig(trials=10_000, seed=5)
    a = mc.simulate(laws["geo13"], cfg, threads=1)
    b = mc.simulate(laws["geo13"], cfg, threads=4)
    for f in ("gen_max", "gmax", "width", "status", "generations"):
        assert np.array_equal(getattr(a, f), getattr(b, f))


def test_seed_changes_stream(laws):
    a = mc.simulate(laws["geo13"], SimConfig(trials=2000, seed=1), threads=1)
    b = mc.simulate(laws["geo13"], SimConfig(trials=2000, seed=2), threads=1)
    assert not np.array_equal(a.gmax, b.gmax)


def test_width_bound(laws):
    rep = mc.width_bound_check(laws["binary"], SimConfig(trials=50_000, seed=42))
    assert rep.ok
    assert [r.r for r in rep.rows] == [1, 2, 5, 10, 20, 50]
    assert rep.rows[0].estimate == 1.0
    with pytest.raises(ValueError):
        mc.width_bound_check(laws["pois15"], SimConfig(trials=10))


def test_censoring_is_reported(laws):
    cfg = SimConfig(trials=5000, seed=1, max_generations=3)
    with pytest.raises(mc.SimulationError):
        mc.estimate(laws["binary"], cfg)
    s = mc.estimate(laws["pois15"], SimConfig(trials=5000, seed=1, max_population=2000))
    assert 0.3 < s.censor_rate < 0.8
    assert s.excluded["global"] == s.status_counts["censored"]
    assert s.notes


def test_supercritical_conditional_global(laws):
    d = laws["pois15"]
    cfg = SimConfig(trials=20_000, seed=3, targets={"global"})
    s = mc.estimate(d, cfg, [exact.table(d, "global", None, 20)])
    assert not s.z_failures


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(trials=0)
    with pytest.raises(ValueError):
        SimConfig(trials=1, targets={"nope"})
    with pytest.raises(ValueError):
        SimConfig(trials=1, width_grid=(0,))
    assert SimConfig(trials=1, width_grid=(5, 1, 5)).width_grid == (1, 5)


def test_thread_count_env(monkeypatch):
    monkeypatch.setenv("GWMAXDEG_THREADS", "3")
    assert mc.thread_count() == 3
    assert mc.thread_count(1) == 1


def test_interval_z():
    c = mc._cell("x", 0, 40, 100, 0.45, extra=10)
    assert c.z == 0.0
    c = mc._cell("x", 0, 40, 100, 0.6, extra=10)
    assert c.z < 0
    c = mc._cell("x", 0, 1, 100, 0.01)
    assert c.z is None
