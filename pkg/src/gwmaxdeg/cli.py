"""Command-line interface.

Exit codes: 0 success, 1 failed invariant suite or replay mismatch, 2 invalid
specification or regime mismatch, 3 numerical failure, 4 violated bound in a
ratio report, 5 Monte Carlo disagreement (``|z| >= 4`` on a tested cell).
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import __version__, asymptotics, checks, exact, global_law, montecarlo, output
from .offspring import ConvergenceError, OffspringError, OffspringSpec, SUM_TOL, build

EXIT_SPEC = 2
EXIT_NUMERIC = 3
EXIT_BOUND = 4
EXIT_Z = 5


class _Exit(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _fail(code: int, message: str):
    raise _Exit(code, message)


# ---------------------------------------------------------------------------
# spec resolution


def load_pmf_file(path: str) -> OffspringSpec:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise OffspringError(f"cannot read pmf file {path}: {exc}") from exc
    if not isinstance(doc, dict) or "p" not in doc:
        raise OffspringError('pmf file must be a JSON object {"p": [p_0, p_1, ...]}')
    p = doc["p"]
    if not isinstance(p, list) or not p or not all(isinstance(x, (int, float)) for x in p):
        raise OffspringError('"p" must be a nonempty list of numbers')
    tol = float(doc.get("tail_tolerance", 1e-14))
    return OffspringSpec.explicit(p, tol)


def resolve_spec(family: str | None, pmf_file: str | None, tail_tolerance: float | None) -> OffspringSpec:
    if (family is None) == (pmf_file is None):
        raise OffspringError("give exactly one of --family or --pmf-file")
    spec = OffspringSpec.parse(family) if family else load_pmf_file(pmf_file)
    if tail_tolerance is not None:
        spec = OffspringSpec(spec.family, spec.params, tail_tolerance)
    return spec


def _spec_options(fn):
    fn = click.option("--tail-tolerance", type=float, default=None,
                      help="Tail mass below which an infinite support is truncated.")(fn)
    fn = click.option("--pmf-file", type=click.Path(dir_okay=False), default=None,
                      help='JSON file {"p": [p_0, p_1, ...]}.')(fn)
    fn = click.option("--family", default=None, help="Family string name:param[,param], e.g. poisson:1.5.")(fn)
    return fn


def _io_options(fn):
    fn = click.option("--out", type=click.Path(dir_okay=False), default=None,
                      help="Output file (stdout when omitted).")(fn)
    fn = click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv", show_default=True)(fn)
    return fn


def _emit(text: str, out: str | None) -> None:
    if out is None:
        click.echo(text, nl=False)
    else:
        output.write_atomic(out, text)


def _run(fn):
    """Map library exceptions onto the exit-code contract."""
    try:
        return fn()
    except _Exit as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(exc.code)
    except (OffspringError, asymptotics.RegimeError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_SPEC)
    except (ConvergenceError, asymptotics.PrecisionFloorError, montecarlo.SimulationError,
            ArithmeticError) as exc:
        click.echo(f"numeric failure: {exc}", err=True)
        sys.exit(EXIT_NUMERIC)
    except ValueError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_SPEC)


# ---------------------------------------------------------------------------
# renderers shared by the commands and by replay


def render(manifest: output.RunManifest, threads: int | None = None) -> tuple[str, int]:
    """Recompute the output described by ``manifest``; returns ``(text, exit code)``."""
    spec = OffspringSpec.from_dict(manifest.spec)
    dist = build(spec)
    prm = manifest.parameters
    fmt = prm["format"]
    cmd = manifest.command
    if cmd == "dist":
        tab = exact.table(dist, prm["target"], prm["horizon"], prm["rmax"])
        r = output.dist_table_csv if fmt == "csv" else output.dist_table_json
        return r(tab, manifest), 0
    if cmd == "global":
        law = global_law.global_law(dist, prm["rmax"])
        tab = global_law.global_table(dist, prm["rmax"])
        tab.metadata = {"limit_mass_at_infinity": law.limit_mass_at_infinity}
        r = output.dist_table_csv if fmt == "csv" else output.dist_table_json
        return r(tab, manifest, law), 0
    if cmd == "ratios":
        rep = asymptotics.ratio_report(dist, prm["regime"], range(prm["rmin"], prm["rmax"] + 1), prm.get("horizon"))
        r = output.ratio_report_csv if fmt == "csv" else output.ratio_report_json
        return r(rep, manifest), (EXIT_BOUND if rep.bound_violations else 0)
    if cmd == "simulate":
        cfg = montecarlo.SimConfig(
            trials=prm["trials"], seed=manifest.seed, max_generations=prm["max_generations"],
            max_population=prm["max_population"], targets=frozenset(prm["targets"]),
            horizon=prm["horizon"], width_grid=tuple(prm["width_grid"]),
        )
        tables = None
        if prm["compare"]:
            rm = prm["rmax"]
            tables = []
            if "generation" in cfg.targets:
                tables += [exact.generation_table(dist, h, rm) for h in range(cfg.horizon + 1)]
            if "local" in cfg.targets:
                tables += [exact.local_table(dist, h, rm) for h in range(cfg.horizon + 1)]
            if "global" in cfg.targets:
                tables.append(global_law.global_table(dist, rm))
        summary = montecarlo.estimate(dist, cfg, tables, threads=threads, r_max=prm["rmax"])
        r = output.sim_summary_csv if fmt == "csv" else output.sim_summary_json
        code = EXIT_Z if summary.z_failures else 0
        return r(summary, manifest), code
    raise OffspringError(f"unknown command {cmd!r} in manifest")


def _execute(manifest: output.RunManifest, out: str | None, threads: int | None = None) -> None:
    text, code = render(manifest, threads)
    _emit(text, out)
    if code:
        msg = {EXIT_BOUND: "bound violated in ratio report",
               EXIT_Z: "Monte Carlo estimate disagrees with the exact law (|z| >= 4)"}[code]
        _fail(code, msg)


def _manifest(cmd, spec, params, out, seed=None, tolerances=None) -> output.RunManifest:
    return output.RunManifest(spec.to_dict(), cmd, params, tolerances or {}, seed,
                              __version__, [] if out is None else [Path(out).name])


# ---------------------------------------------------------------------------
# commands


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(__version__, prog_name="gwmaxdeg")
def main():
    """Maximal out-degree laws of Galton-Watson trees."""


@main.command("dist")
@_spec_options
@click.option("--target", type=click.Choice(["generation", "local"]), required=True)
@click.option("--horizon", type=click.IntRange(min=0), required=True, help="Generation n.")
@click.option("--rmax", type=click.IntRange(min=0), required=True)
@_io_options
def cmd_dist(family, pmf_file, tail_tolerance, target, horizon, rmax, fmt, out):
    """Law of M_n (generation) or M_[0,n] (local) for r = 0..rmax."""
    def go():
        spec = resolve_spec(family, pmf_file, tail_tolerance)
        build(spec)
        params = {"target": target, "horizon": horizon, "rmax": rmax, "format": fmt}
        _execute(_manifest("dist", spec, params, out), out)
    _run(go)


@main.command("global")
@_spec_options
@click.option("--rmax", type=click.IntRange(min=0), required=True)
@_io_options
def cmd_global(family, pmf_file, tail_tolerance, rmax, fmt, out):
    """Law of the global maximum M with solver diagnostics."""
    def go():
        spec = resolve_spec(family, pmf_file, tail_tolerance)
        build(spec)
        params = {"rmax": rmax, "format": fmt}
        tol = {"solver_rtol": global_law.SOLVER_RTOL, "residual": global_law.RESIDUAL_TOL}
        _execute(_manifest("global", spec, params, out, tolerances=tol), out)
    _run(go)


@main.command("ratios")
@_spec_options
@click.option("--regime", type=click.Choice(list(asymptotics.REGIMES)), required=True)
@click.option("--horizon", type=click.IntRange(min=0), default=None,
              help="Generation n for the generation/local regimes.")
@click.option("--rmin", type=click.IntRange(min=0), default=1, show_default=True)
@click.option("--rmax", type=click.IntRange(min=0), required=True)
@_io_options
def cmd_ratios(family, pmf_file, tail_tolerance, regime, horizon, rmin, rmax, fmt, out):
    """Asymptotic ratios and bounds; exit 4 if a bound is violated."""
    def go():
        spec = resolve_spec(family, pmf_file, tail_tolerance)
        build(spec)
        if rmin > rmax:
            _fail(EXIT_SPEC, "--rmin exceeds --rmax")
        if regime in ("generation", "local") and horizon is None:
            _fail(EXIT_SPEC, f"regime {regime} needs --horizon")
        params = {"regime": regime, "horizon": horizon, "rmin": rmin, "rmax": rmax, "format": fmt}
        tol = {"bound": asymptotics.BOUND_TOL, "trust_relerr": asymptotics.TRUST_RELERR}
        _execute(_manifest("ratios", spec, params, out, tolerances=tol), out)
    _run(go)


@main.command("simulate")
@_spec_options
@click.option("--trials", type=click.IntRange(min=1), default=100_000, show_default=True)
@click.option("--seed", type=click.IntRange(min=0, max=2**64 - 1), default=0, show_default=True)
@click.option("--target", "targets", type=click.Choice(list(montecarlo.TARGETS)), multiple=True,
              help="Statistics to record (repeatable); default generation, local, global.")
@click.option("--horizon", type=click.IntRange(min=0), default=4, show_default=True)
@click.option("--max-generations", type=click.IntRange(min=1), default=200, show_default=True)
@click.option("--max-population", type=click.IntRange(min=1), default=1_000_000, show_default=True)
@click.option("--width-grid", default="1,2,5,10,20,50", show_default=True)
@click.option("--rmax", type=click.IntRange(min=0), default=30, show_default=True)
@click.option("--compare", is_flag=True, help="Compute exact tables and z-scores; exit 5 on |z| >= 4.")
@click.option("--threads", type=click.IntRange(min=1), default=None,
              help="Worker threads (default: GWMAXDEG_THREADS or CPU count).")
@_io_options
def cmd_simulate(family, pmf_file, tail_tolerance, trials, seed, targets, horizon, max_generations,
                 max_population, width_grid, rmax, compare, threads, fmt, out):
    """Monte Carlo estimates of the laws of M_n, M_[0,n], M and the width."""
    def go():
        spec = resolve_spec(family, pmf_file, tail_tolerance)
        build(spec)
        try:
            grid = [int(x) for x in width_grid.split(",") if x.strip()]
        except ValueError:
            _fail(EXIT_SPEC, f"bad --width-grid {width_grid!r}")
        tg = sorted(set(targets) or {"generation", "local", "global"})
        montecarlo.SimConfig(trials, seed, max_generations, max_population, frozenset(tg), horizon, tuple(grid))
        params = {
            "trials": trials, "targets": tg, "horizon": horizon, "max_generations": max_generations,
            "max_population": max_population, "width_grid": sorted(set(grid)), "rmax": rmax,
            "compare": compare, "format": fmt,
        }
        tol = {"z_limit": montecarlo.Z_LIMIT, "min_expected": montecarlo.MIN_EXPECTED}
        _execute(_manifest("simulate", spec, params, out, seed, tol), out, threads)
    _run(go)


@main.command("check")
@click.option("--family", "families", multiple=True,
              help="Family string to check (repeatable); default is the builtin suite.")
@click.option("--trials", type=click.IntRange(min=1), default=20_000, show_default=True)
@click.option("--seed", type=click.IntRange(min=0, max=2**64 - 1), default=42, show_default=True)
@click.option("--inject-fault", type=click.Choice(list(checks.FAULTS)), default=None,
              help="Corrupt a kernel on purpose to confirm the suite catches it.")
@click.option("--threads", type=click.IntRange(min=1), default=None)
@click.option("--quiet", is_flag=True, help="Print failures only.")
def cmd_check(families, trials, seed, inject_fault, threads, quiet):
    """Run the invariant suite; exit 0 iff every check passes."""
    def go():
        fams = None
        if families:
            fams = [(f, OffspringSpec.parse(f)) for f in families]
            for _, sp in fams:
                build(sp)
        results = checks.run_suite(fams, trials, seed, inject_fault, threads)
        for r in results:
            if not quiet or r.failed:
                click.echo(r.line())
        failed = [r for r in results if r.failed]
        click.echo(f"{len(results) - len(failed)}/{len(results)} checks not failing; {len(failed)} failed")
        if failed:
            names = sorted({r.name for r in failed})
            click.echo("failed invariants: " + ", ".join(names), err=True)
            sys.exit(1)
    _run(go)


@main.command("replay")
@click.argument("path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="Write the regenerated output here instead of comparing.")
@click.option("--threads", type=click.IntRange(min=1), default=None)
def cmd_replay(path, out, threads):
    """Regenerate an output file from its embedded manifest and compare bytes."""
    def go():
        manifest = output.read_manifest(path)
        text, _ = render(manifest, threads)
        if out is not None:
            output.write_atomic(out, text)
            return
        same = Path(path).read_text(encoding="utf-8") == text
        click.echo("identical" if same else "DIFFERENT")
        if not same:
            sys.exit(1)
    _run(go)


if __name__ == "__main__":  # pragma: no cover
    main()
