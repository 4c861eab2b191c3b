"""Invariant suite run across a set of offspring laws.

Each check returns one :class:`CheckResult` per law.  Status is ``PASS``,
``FAIL``, ``UNDERPOWERED`` (Monte Carlo checks with too few trials to test
anything) or ``SKIP`` (hypothesis of the check not met).
"""

from __future__ import annotations

import contextlib
import math
import types
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator

import numpy as np

from . import _backend, asymptotics, exact, global_law, montecarlo
from .offspring import OffspringDistribution, OffspringSpec, build

BUILTIN_FAMILIES: dict[str, str] = {
    "binary-critical": "explicit:0.5,0,0.5",
    "geometric-1/3": "geometric:0.3333333333333333",
    "geometric-1/2": "geometric:0.5",
    "poisson-0.8": "poisson:0.8",
    "poisson-1.5": "poisson:1.5",
    "power-3": "power:3",
    "explicit-[1/4,0,3/4]": "explicit:0.25,0,0.75",
    "explicit-[0,1/2,0,1/2]": "explicit:0,0.5,0,0.5",
}

FAULTS = ("gr-sign",)
RESIDUAL_TOL = 1e-10
ABS_TOL = 1e-12


@dataclass(frozen=True)
class CheckResult:
    name: str
    family: str
    status: str
    detail: str = ""

    @property
    def failed(self) -> bool:
        return self.status == "FAIL"

    def line(self) -> str:
        return f"{self.status:<12} {self.name:<34} {self.family:<24} {self.detail}"


@dataclass
class Context:
    label: str
    dist: OffspringDistribution
    r_max: int
    trials: int
    seed: int
    threads: int | None


def default_r_max(dist: OffspringDistribution) -> int:
    if dist.bounded:
        return int(dist.support_max) + 1
    return {"geometric": 60, "poisson": 40, "power": 400}.get(dist.family, 40)


# ---------------------------------------------------------------------------
# fault injection


def _flip_linear(p):
    q = np.array(p, dtype=np.float64, copy=True)
    if len(q) > 1:
        q[1] = -q[1]
    return q


@contextlib.contextmanager
def inject_fault(kind: str) -> Iterator[None]:
    """Temporarily corrupt the kernels; ``gr-sign`` flips the sign of ``p_1``."""
    if kind not in FAULTS:
        raise ValueError(f"unknown fault {kind!r}")
    real = _backend.kernels
    proxy = types.SimpleNamespace(**{k: getattr(real, k) for k in dir(real) if not k.startswith("__")})
    proxy.trunc_tail = lambda p, r, fbar, s: real.trunc_tail(_flip_linear(p), r, fbar, s)
    proxy.trunc_divdiff = lambda p, r, a, b: real.trunc_divdiff(_flip_linear(p), r, a, b)
    proxy.tail_orbit = lambda p, caps, fbars, s0: real.tail_orbit(_flip_linear(p), caps, fbars, s0)
    proxy.solve_tail = lambda p, r, fbar, rtol, it: real.solve_tail(_flip_linear(p), r, fbar, rtol, it)
    proxy.local_pair = lambda p, r, fbar, n: real.local_pair(_flip_linear(p), r, fbar, n)
    global_law.clear_cache()
    _backend.kernels = proxy
    try:
        yield
    finally:
        _backend.kernels = real
        global_law.clear_cache()


# ---------------------------------------------------------------------------
# helpers


def _named(name: str):
    def deco(fn):
        fn.check_name = name
        return fn
    return deco


def _result(name: str, ctx: Context, ok: bool, detail: str = "") -> CheckResult:
    return CheckResult(name, ctx.label, "PASS" if ok else "FAIL", detail)


def _skip(name: str, ctx: Context, why: str) -> CheckResult:
    return CheckResult(name, ctx.label, "SKIP", why)


def _gr_direct(dist: OffspringDistribution, r: int, x: float) -> float:
    # independent of the kernels: exactly rounded sum of p_k x^k
    return dist.pgf_truncated(r, x)


ORACLE_TAIL = 1e-11


def _oracle_prefix(dist: OffspringDistribution) -> int:
    # smallest K with F̄(K) <= ORACLE_TAIL (support max when bounded)
    if dist.bounded:
        return int(dist.support_max)
    k = 1
    while dist.tail(k) > ORACLE_TAIL:
        k *= 2
    lo, hi = k // 2, k
    while lo < hi:
        mid = (lo + hi) // 2
        if dist.tail(mid) <= ORACLE_TAIL:
            hi = mid
        else:
            lo = mid + 1
    return lo


def _g_direct(dist: OffspringDistribution, x: float) -> tuple[float, float]:
    """``G(x)`` by a truncated exactly rounded sum, with its truncation error bound."""
    k = _oracle_prefix(dist)
    val = math.fsum((dist.pmf_array(k) * np.power(x, np.arange(k + 1))).tolist())
    return val, (0.0 if dist.bounded else dist.tail(k))


# ---------------------------------------------------------------------------
# offspring


@_named("offspring.normalization")
def check_normalization(ctx: Context) -> CheckResult:
    d = ctx.dist
    k = d.support_prefix()
    total = math.fsum(d.pmf_array(k).tolist()) + d.tail(k)
    return _result("offspring.normalization", ctx, abs(total - 1.0) <= ABS_TOL, f"sum-1={total - 1.0:.3e}")


@_named("offspring.pgf_consistency")
def check_pgf(ctx: Context) -> CheckResult:
    d = ctx.dist
    worst = 0.0
    for x in (0.0, 0.3, 0.7, 0.95, 1.0):
        ref, err = _g_direct(d, x)
        worst = max(worst, abs(d.pgf(x) - ref) - err)
    return _result("offspring.pgf_consistency", ctx, worst <= ABS_TOL, f"max err={worst:.3e}")


@_named("offspring.extinction_fixed_point")
def check_extinction(ctx: Context) -> CheckResult:
    d = ctx.dist
    q = d.extinction_probability()
    res = abs(d.pgf(q) - q)
    ok = 0.0 <= q <= 1.0 and res < ABS_TOL and (q < 1.0) == d.is_supercritical
    return _result("offspring.extinction_fixed_point", ctx, ok, f"q={q:.17g} residual={res:.3e}")


# ---------------------------------------------------------------------------
# exact


@_named("exact.equal_caps_bitwise")
def check_lemma_equal_caps(ctx: Context) -> CheckResult:
    d = ctx.dist
    bad = []
    for n in range(5):
        for r in range(min(ctx.r_max, 8) + 1):
            a = exact.finite_dim_cdf(d, [r] * (n + 1))
            b = exact.local_cdf(d, n, r)
            if a != b:
                bad.append((n, r, a - b))
    return _result("exact.equal_caps_bitwise", ctx, not bad, f"mismatches={bad[:3]}" if bad else "")


@_named("exact.composition_oracle")
def check_compositions(ctx: Context) -> CheckResult:
    d = ctx.dist
    rng = np.random.default_rng(7)
    worst = 0.0
    for n in range(4):
        for r in range(min(ctx.r_max, 6) + 1):
            t = d.cdf(r)
            slack = 0.0
            for _ in range(n):
                t, err = _g_direct(d, t)
                slack = float(d.mean) * slack + err
            worst = max(worst, abs(exact.generation_cdf(d, n, r) - t) - slack)
    for _ in range(20):
        caps = rng.integers(0, min(ctx.r_max, 6) + 1, size=int(rng.integers(1, 6))).tolist()
        t = 1.0
        for c in reversed(caps):
            t = _gr_direct(d, c, t)
        worst = max(worst, abs(exact.finite_dim_cdf(d, caps) - t))
    return _result("exact.composition_oracle", ctx, worst <= ABS_TOL, f"max err={worst:.3e}")


@_named("exact.table_monotone")
def check_table_shape(ctx: Context) -> CheckResult:
    d = ctx.dist
    worst = 0.0
    ok = True
    for n in (0, 1, 3):
        for tab in (exact.generation_table(d, n, ctx.r_max), exact.local_table(d, n, ctx.r_max)):
            cdf = tab.column("cdf")
            pmf = tab.column("pmf")
            ok &= bool(np.all(np.diff(cdf) >= -ABS_TOL) and np.all(pmf >= 0.0))
            worst = max(worst, float(np.max(np.abs(np.diff(cdf) - pmf[1:]))))
    return _result("exact.table_monotone", ctx, ok and worst <= ABS_TOL, f"max pmf/cdf gap={worst:.3e}")


@_named("exact.generation_bound")
def check_generation_bound(ctx: Context) -> CheckResult:
    d = ctx.dist
    mu = float(d.mean)
    worst = -math.inf
    for n in range(7):
        for r in range(ctx.r_max + 1):
            worst = max(worst, exact.generation_pmf(d, n, r) - mu**n * d.pmf(r))
    return _result("exact.generation_bound", ctx, worst < ABS_TOL, f"max excess={worst:.3e}")


@_named("exact.local_bound")
def check_local_bound(ctx: Context) -> CheckResult:
    d = ctx.dist
    mu = float(d.mean)
    worst = -math.inf
    for n in range(7):
        c = math.fsum(mu**i for i in range(n + 1))
        for r in range(ctx.r_max + 1):
            worst = max(worst, exact.local_pmf(d, n, r) - c * d.pmf(r))
    return _result("exact.local_bound", ctx, worst < ABS_TOL, f"max excess={worst:.3e}")


@_named("exact.joint_single_pair")
def check_joint(ctx: Context) -> CheckResult:
    d = ctx.dist
    worst = 0.0
    neg = False
    for n in range(4):
        for r in range(1, min(ctx.r_max, 6) + 1):
            j = exact.joint_union_prob(d, exact.GenerationCapVector.of([(n, r)]))
            g = exact.generation_pmf(d, n, r)
            worst = max(worst, abs(j - g))
    for pairs in ([(0, 1), (2, 2)], [(1, 2), (2, 1), (4, 3)], [(0, 2), (1, 2)]):
        neg |= exact.joint_union_prob(d, exact.GenerationCapVector.of(pairs)) < 0.0
    return _result("exact.joint_single_pair", ctx, worst <= ABS_TOL and not neg, f"max err={worst:.3e}")


# ---------------------------------------------------------------------------
# global


@_named("global.fixed_point_residual")
def check_fixed_point_residual(ctx: Context) -> CheckResult:
    d = ctx.dist
    worst = 0.0
    at = None
    for r in range(ctx.r_max + 1):
        try:
            t = global_law.global_cdf(d, r)
        except ArithmeticError as exc:
            return _result("global.fixed_point_residual", ctx, False, f"r={r}: {exc}")
        res = abs(_gr_direct(d, r, t) - t)
        if res > worst:
            worst, at = res, r
    return _result("global.fixed_point_residual", ctx, worst < RESIDUAL_TOL, f"max={worst:.3e} at r={at}")


@_named("global.local_limit")
def check_global_selection(ctx: Context) -> CheckResult:
    # q_[0,r] must be the fixed point reached by iterating G_r down from 1
    d = ctx.dist
    ok = True
    worst = 0.0
    for r in (0, 1, 2, 5):
        if r > ctx.r_max:
            continue
        try:
            n, gaps = global_law.local_limit_gap(d, r, tol=1e-8, max_n=200_000)
        except ArithmeticError as exc:
            return _result("global.local_limit", ctx, False, f"r={r}: {exc}")
        vals = [g for _, g in gaps]
        ok &= all(b <= a + 1e-15 for a, b in zip(vals, vals[1:])) and vals[-1] >= -1e-15
        worst = max(worst, vals[-1])
    return _result("global.local_limit", ctx, ok and worst < 1e-8, f"terminal gap={worst:.3e}")


@_named("global.cdf_monotone")
def check_global_monotone(ctx: Context) -> CheckResult:
    d = ctx.dist
    law = global_law.global_law(d, ctx.r_max)
    cdf = law.column("cdf")
    tail = law.column("tail")
    ok = bool(np.all(np.diff(cdf) >= -ABS_TOL) and np.all(law.column("pmf") >= 0.0))
    ok &= bool(np.all(np.abs(cdf + tail - 1.0) <= 4e-16 * 4))
    return _result("global.cdf_monotone", ctx, ok)


# ---------------------------------------------------------------------------
# asymptotics


@_named("asymptotics.finite_horizon_bounds")
def check_ratio_bounds(ctx: Context) -> CheckResult:
    d = ctx.dist
    reps = []
    rr = range(0, ctx.r_max + 1)
    for n in (0, 1, 2, 3):
        reps.append(asymptotics.generation_ratio_table(d, n, rr))
        reps.append(asymptotics.local_ratio_table(d, n, rr))
    bad = [(rep.regime, v) for rep in reps for v in rep.bound_violations]
    trivial = all(abs(row.ratio - 1.0) <= 1e-15 for rep in reps[:2] for s in rep.series for row in s.rows)
    return _result("asymptotics.finite_horizon_bounds", ctx, not bad and trivial,
                   f"violations={bad[:3]}" if bad else "")


@_named("asymptotics.regime_report")
def check_regime_report(ctx: Context) -> CheckResult:
    d = ctx.dist
    name = "asymptotics.regime_report"
    if d.bounded:
        return _skip(name, ctx, "bounded support")
    rr = range(1, ctx.r_max + 1)
    crit = d.criticality.value
    if crit == "subcritical":
        rep = asymptotics.subcritical_global_ratio_table(d, rr)
        same = all(row.denominator == global_law.global_pmf(d, row.r) for row in rep.get("p/q").rows)
        return _result(name, ctx, rep.ok and same, f"end dev={rep.get('p/q').verdict['end_rel_dev']:.2e}")
    if crit == "critical":
        rep = asymptotics.critical_bounds_report(d, rr)
        lim = all(rep.verdict["liminf_Hbar_over_Fbar"].values())
        ok = not rep.bound_violations and lim and rep.get("q/p").passed and rep.get("q^2/p").passed
        return _result(name, ctx, ok, f"window={rep.window} q/p growth={rep.get('q/p').verdict['growth']:.3g}")
    if d.p0 <= 0.0:
        return _skip(name, ctx, "p_0 = 0")
    rep = asymptotics.supercritical_limits_report(d, rr)
    ok = rep.get("Hbar").passed and rep.get("p q^r/q").passed
    return _result(name, ctx, ok, f"end gap={rep.verdict['end_cdf_gap']:.2e}")


# ---------------------------------------------------------------------------
# Monte Carlo


def _mc_verdict(name: str, ctx: Context, summary: montecarlo.SimSummary) -> CheckResult:
    tested = [c for c in summary.cells if c.tested]
    if not tested:
        return CheckResult(name, ctx.label, "UNDERPOWERED", f"trials={ctx.trials}: no cell with expected count >= 10")
    fails = summary.z_failures
    detail = f"cells={len(tested)} max|z|={summary.max_abs_z:.2f}"
    if fails:
        detail += f" worst={fails[0].target}@{fails[0].r}"
    return _result(name, ctx, not fails, detail)


@_named("montecarlo.oracle")
def check_mc_oracle(ctx: Context) -> CheckResult:
    d = ctx.dist
    cfg = montecarlo.SimConfig(ctx.trials, ctx.seed, horizon=3)
    rm = min(ctx.r_max, 40)
    tabs = [exact.generation_table(d, h, rm) for h in range(4)]
    tabs += [exact.local_table(d, h, rm) for h in range(4)]
    tabs.append(global_law.global_table(d, rm))
    try:
        s = montecarlo.estimate(d, cfg, tabs, threads=ctx.threads)
    except montecarlo.SimulationError as exc:
        return _result("montecarlo.oracle", ctx, False, str(exc))
    return _mc_verdict("montecarlo.oracle", ctx, s)


@_named("montecarlo.width_bound")
def check_width(ctx: Context) -> CheckResult:
    d = ctx.dist
    name = "montecarlo.width_bound"
    if d.is_supercritical:
        return _skip(name, ctx, "supercritical")
    rep = montecarlo.width_bound_check(d, montecarlo.SimConfig(ctx.trials, ctx.seed), threads=ctx.threads)
    if rep.ok and all(r.underpowered for r in rep.rows if r.r > 1):
        return CheckResult(name, ctx.label, "UNDERPOWERED", f"trials={ctx.trials}")
    flagged = [r.r for r in rep.rows if r.flagged]
    return _result(name, ctx, rep.ok, f"flagged={flagged}" if flagged else f"censor={rep.censor_rate:.2e}")


@_named("montecarlo.determinism")
def check_determinism(ctx: Context) -> CheckResult:
    d = ctx.dist
    cfg = montecarlo.SimConfig(min(ctx.trials, 3 * montecarlo.BLOCK_TRIALS), ctx.seed, horizon=2,
                               targets=frozenset({"generation", "global"}))
    a = montecarlo.simulate(d, cfg, threads=1)
    b = montecarlo.simulate(d, cfg, threads=3)
    same = all(np.array_equal(getattr(a, f), getattr(b, f)) for f in ("gen_max", "gmax", "width", "status", "generations"))
    return _result("montecarlo.determinism", ctx, same)


CHECKS: tuple[Callable[[Context], CheckResult], ...] = (
    check_normalization,
    check_pgf,
    check_extinction,
    check_lemma_equal_caps,
    check_compositions,
    check_table_shape,
    check_generation_bound,
    check_local_bound,
    check_joint,
    check_fixed_point_residual,
    check_global_selection,
    check_global_monotone,
    check_ratio_bounds,
    check_regime_report,
    check_mc_oracle,
    check_width,
    check_determinism,
)


def run_suite(
    families: Iterable[tuple[str, OffspringSpec]] | None = None,
    trials: int = 20_000,
    seed: int = 42,
    fault: str | None = None,
    threads: int | None = None,
) -> list[CheckResult]:
    """Run every check on every law; exceptions become ``FAIL`` results."""
    if families is None:
        families = [(k, OffspringSpec.parse(v)) for k, v in BUILTIN_FAMILIES.items()]
    results = []
    cm = inject_fault(fault) if fault else contextlib.nullcontext()
    with cm:
        for label, spec in families:
            dist = build(spec)
            ctx = Context(label, dist, default_r_max(dist), trials, seed, threads)
            for chk in CHECKS:
                name = chk.check_name
                try:
                    results.append(chk(ctx))
                except Exception as exc:  # a crash is a failed invariant
                    results.append(CheckResult(name, label, "FAIL", f"{type(exc).__name__}: {exc}"))
    return results
