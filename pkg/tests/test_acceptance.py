"""Acceptance criteria, one test each.

Every test records a ``PASS``/``FAIL`` line with its runtime; the lines are
printed in the pytest terminal summary, or directly when this file is run as
a script (``python tests/test_acceptance.py``).
"""

from __future__ import annotations

import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

sys.path.insert(0, str(Path(__file__).parent))

from gwmaxdeg import asymptotics as A  # noqa: E402
from gwmaxdeg import exact, global_law, montecarlo  # noqa: E402
from gwmaxdeg.checks import BUILTIN_FAMILIES  # noqa: E402
from gwmaxdeg.cli import main  # noqa: E402
from gwmaxdeg.offspring import OffspringSpec, build  # noqa: E402

LINES: list[str] = []

BINARY = "explicit:0.5,0,0.5"
GEO13 = "geometric:0.3333333333333333"
GEO12 = "geometric:0.5"
POIS08 = "poisson:0.8"
POIS15 = "poisson:1.5"
POW3 = "power:3"


def _law(s):
    return build(OffspringSpec.parse(s))


def _record(num, title, budget, fn):
    t0 = time.perf_counter()
    ok, detail = fn()
    dt = time.perf_counter() - t0
    in_time = dt < budget
    status = "PASS" if ok and in_time else "FAIL"
    timing = f"{dt:.2f}s/{budget:g}s" + ("" if in_time else " OVER BUDGET")
    LINES.append(f"acceptance {num:>2} {status}  {title} [{timing}] {detail}")
    assert ok, detail
    assert in_time, timing


def _floor(dist, r_hi):
    """Largest r <= r_hi with a trusted pmf, scanning upward."""
    last = 0
    for r in range(1, r_hi + 1):
        q, err = global_law._pmf_and_relerr(dist, r)
        if not (q > A.TINY and err < A.TRUST_RELERR):
            break
        last = r
    return last


# ---------------------------------------------------------------------------


def c1():
    b = _law(BINARY)
    got = [global_law.global_cdf(b, r) for r in range(3)]
    q = _law("explicit:0.25,0,0.75").extinction_probability()
    ok = all(abs(g - w) < 1e-12 for g, w in zip(got, (0.5, 0.5, 1.0))) and abs(q - 1 / 3) < 1e-12
    return ok, f"binary H(0..2)={got}; q[1/4,0,3/4]={q!r}"


def c2():
    worst, where, floors = 0.0, None, {}
    for name, s in BUILTIN_FAMILIES.items():
        d = build(OffspringSpec.parse(s))
        hi = int(d.support_max) + 1 if d.bounded else 400
        floor = _floor(d, hi) if not d.bounded else hi
        floors[name] = floor
        for r in range(floor + 1):
            t = global_law.global_cdf(d, r)
            res = abs(d.pgf_truncated(r, t) - t)
            if res > worst:
                worst, where = res, (name, r)
    return worst < 1e-10, f"max residual {worst:.3g} at {where}; floors {floors}"


def c3():
    bad_eq, worst_gap = [], 0.0
    for name, s in BUILTIN_FAMILIES.items():
        d = build(OffspringSpec.parse(s))
        for n in range(5):
            for r in range(8):
                if exact.finite_dim_cdf(d, [r] * (n + 1)) != exact.local_cdf(d, n, r):
                    bad_eq.append((name, n, r))
        for r in (1, 2, 3, 5):
            n, gaps = global_law.local_limit_gap(d, r, tol=1e-8)
            vals = [g for _, g in gaps]
            if any(b > a for a, b in zip(vals, vals[1:])) or not vals[-1] < 1e-8:
                bad_eq.append((name, "gap", r))
            worst_gap = max(worst_gap, vals[-1])
    return not bad_eq, f"equal-caps mismatches/gap failures {bad_eq[:5]}; worst terminal gap {worst_gap:.2g}"


def c4():
    worst, cells = -math.inf, 0
    for name, s in BUILTIN_FAMILIES.items():
        d = build(OffspringSpec.parse(s))
        rm = int(d.support_max) + 1 if d.bounded else 60
        for n in range(7):
            mu_n = d.mean ** n
            cum = sum(d.mean ** i for i in range(n + 1))
            for r in range(rm + 1):
                p = d.pmf(r)
                worst = max(worst, exact.generation_pmf(d, n, r) - mu_n * p,
                            exact.local_pmf(d, n, r) - cum * p)
                cells += 1
    return worst < 1e-12, f"{cells} cells, max violation {worst:.3g}"


def c5():
    d = _law(GEO13)
    rep = A.subcritical_global_ratio_table(d, range(1, 400))
    a, b = rep.get("p/q").rows[-1], rep.get("Fbar/Hbar").rows[-1]
    ok = abs(a.ratio - 0.5) < 0.01 and abs(b.ratio - 0.5) < 0.01
    return ok, f"window end r={a.r}: p/q={a.ratio!r}, Fbar/Hbar={b.ratio!r}"


def c6():
    parts, ok = [], True
    for name, rng in ((POW3, range(10, 2001)), (GEO12, range(1, 400))):
        rep = A.critical_bounds_report(_law(name), rng)
        bounds = not rep.bound_violations
        grow = rep.get("q/p").rows[-1].ratio / rep.get("q/p").rows[0].ratio
        ok &= bounds and grow >= 10
        parts.append(f"{name}: window {rep.window}, bounds {'hold' if bounds else 'VIOLATED'}, q/p x{grow:.3g}")
        if name == POW3:
            for key in ("q^2/p", "Hbar^2/Fbar"):
                v = rep.get(key).ratios
                dec = v[-1] < v[0]
                ok &= dec and v[-1] < 0.01
                parts.append(f"{key} {v[0]:.3g}->{v[-1]:.3g}")
    return ok, "; ".join(parts)


def c7():
    d = _law(POW3)
    a, b = 100 * global_law.global_tail(d, 100), 400 * global_law.global_tail(d, 400)
    return b < a, f"r*Hbar(r): r=100 {a!r}, r=400 {b!r}"


def c8():
    d = _law(POIS15)
    q = d.extinction_probability()
    rep = A.supercritical_limits_report(d, range(1, 400))
    r_end = rep.window[1]
    gap = abs(global_law.global_cdf(d, r_end) - q)
    c = rep.constant_claimed
    ratio = rep.get("p q^(r-1)/q").rows[-1].ratio
    dev = abs(ratio / c - 1)
    alt = rep.get("p q^r/q").rows[-1].ratio
    ok = gap < 1e-6 and dev <= 0.02
    return ok, (f"r={r_end}: |H-q|={gap:.3g}; p q^(r-1)/q={ratio:.6g} vs 1-G'(q)={c:.6g} "
                f"(rel dev {dev:.3g}); p q^r/q={alt:.6g}")


def c9():
    worst, tested, fails = 0.0, 0, []
    for name in (BINARY, GEO13, POIS08):
        d = _law(name)
        tabs = [exact.table(d, t, h, 30) for t in ("generation", "local") for h in range(5)]
        tabs.append(exact.table(d, "global", None, 30))
        s = montecarlo.estimate(d, montecarlo.SimConfig(trials=100_000, seed=42), tabs)
        tested += sum(c.tested for c in s.cells)
        worst = max(worst, s.max_abs_z)
        fails += [(name, c.target, c.r, round(c.z, 2)) for c in s.z_failures]
    return not fails, f"{tested} tested cells, max |z| {worst:.3g}, failures {fails[:5]}"


def c10():
    parts, ok = [], True
    for name in (BINARY, GEO13):
        rep = montecarlo.width_bound_check(_law(name), montecarlo.SimConfig(trials=1_000_000, seed=42))
        ok &= rep.ok
        margin = max(r.estimate - 3 * r.stderr - r.bound for r in rep.rows)
        parts.append(f"{name}: max(est-3SE-1/r)={margin:.3g}")
    return ok, "; ".join(parts)


def c11(tmp_path):
    runner = CliRunner()
    outs = []
    for threads in (1, 4):
        d = tmp_path / f"t{threads}"
        d.mkdir()
        args = ["simulate", "--family", GEO13, "--trials", "100000", "--seed", "42",
                "--target", "generation", "--target", "local", "--target", "global", "--target", "width",
                "--threads", str(threads), "--out", str(d / "sim.csv")]
        res = runner.invoke(main, args)
        if res.exit_code != 0:
            return False, f"exit {res.exit_code}: {res.output}"
        outs.append((d / "sim.csv").read_bytes())
    return outs[0] == outs[1], f"{len(outs[0])} bytes, identical={outs[0] == outs[1]}"


# ---------------------------------------------------------------------------


def test_acceptance_01_closed_form_fixed_points():
    _record(1, "closed-form fixed points", 1, c1)


def test_acceptance_02_fixed_point_residuals():
    _record(2, "fixed-point residuals", 10, c2)


def test_acceptance_03_equal_caps_and_local_limit():
    _record(3, "equal caps and local -> global", 30, c3)


def test_acceptance_04_inequality_suite():
    _record(4, "generation/local inequalities", 30, c4)


def test_acceptance_05_subcritical_law():
    _record(5, "subcritical global law", 10, c5)


def test_acceptance_06_critical_bounds():
    _record(6, "critical bounds", 60, c6)


def test_acceptance_07_tail_trend():
    _record(7, "r*Hbar(r) trend", 60, c7)


def test_acceptance_08_supercritical_limits():
    _record(8, "supercritical limits", 10, c8)


@pytest.mark.slow
def test_acceptance_09_monte_carlo_oracle():
    _record(9, "Monte Carlo oracle", 120, c9)


@pytest.mark.slow
def test_acceptance_10_width_bound():
    _record(10, "width bound", 120, c10)


def test_acceptance_11_determinism(tmp_path):
    _record(11, "simulate determinism across threads", 60, lambda: c11(tmp_path))


if __name__ == "__main__":
    import tempfile

    failed = 0
    for name, fn in sorted(globals().items()):
        if name.startswith("test_acceptance_"):
            try:
                if "tmp_path" in fn.__code__.co_varnames[: fn.__code__.co_argcount]:
                    with tempfile.TemporaryDirectory() as tmp:
                        fn(Path(tmp))
                else:
                    fn()
            except AssertionError:
                failed += 1
            print(LINES[-1], flush=True)
    sys.exit(1 if failed else 0)
