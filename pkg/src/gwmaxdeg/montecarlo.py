"""Monte Carlo sampling of Galton-Watson trees.

Trees are grown generation by generation keeping only the current population
and running maxima.  Every trial owns an independent random substream keyed
by ``(seed, trial index)``, so results do not depend on how trials are split
into blocks or across threads.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np
from scipy import stats

from . import _backend
from .exact import DistTable
from .offspring import SAMPLER_PREFIX_CAP, OffspringDistribution

BLOCK_TRIALS = 4096
Z_LIMIT = 4.0
MIN_EXPECTED = 10.0
MAX_CENSOR_RATE = 0.01
SURVIVAL_CERTAINTY = 1e-15
TARGETS = ("generation", "local", "global", "width")
DEFAULT_WIDTH_GRID = (1, 2, 5, 10, 20, 50)


class SimulationError(RuntimeError):
    """Raised when a simulation cannot produce trustworthy estimates."""


# ---------------------------------------------------------------------------
# configuration and results


@dataclass(frozen=True)
class SimConfig:
    trials: int
    seed: int = 0
    max_generations: int = 200
    max_population: int = 1_000_000
    targets: frozenset = frozenset({"generation", "local", "global"})
    horizon: int = 4
    width_grid: tuple[int, ...] = DEFAULT_WIDTH_GRID

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.max_generations < 1 or self.max_population < 1:
            raise ValueError("caps must be >= 1")
        if self.horizon < 0:
            raise ValueError("horizon must be nonnegative")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "targets", frozenset(self.targets))
        bad = set(self.targets) - set(TARGETS)
        if bad:
            raise ValueError(f"unknown targets: {sorted(bad)}")
        grid = tuple(sorted({int(r) for r in self.width_grid}))
        if not grid or grid[0] < 1:
            raise ValueError("width grid must contain positive integers")
        object.__setattr__(self, "width_grid", grid)

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "seed": self.seed,
            "max_generations": self.max_generations,
            "max_population": self.max_population,
            "targets": sorted(self.targets),
            "horizon": self.horizon,
            "width_grid": list(self.width_grid),
        }


class TrialStream(NamedTuple):
    """Substream ``trial`` of the master ``seed``."""

    seed: int
    trial: int


@dataclass(frozen=True)
class TreeObservation:
    generation_max: tuple[int, ...]   # -1 for an empty generation
    global_max: int
    width: int
    extinct: bool
    censored: bool

    @property
    def generations(self) -> int:
        return len(self.generation_max)


@dataclass
class SimCell:
    target: str
    r: int
    count: int
    trials: int
    estimate: float
    stderr: float
    exact: float | None = None
    z: float | None = None
    undecided: int = 0

    @property
    def tested(self) -> bool:
        return self.z is not None


@dataclass
class SimSummary:
    config: SimConfig
    cells: list[SimCell]
    status_counts: dict
    censor_rate: float
    excluded: dict = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    @property
    def max_abs_z(self) -> float:
        zs = [abs(c.z) for c in self.cells if c.z is not None]
        return max(zs) if zs else 0.0

    @property
    def z_failures(self) -> list[SimCell]:
        return [c for c in self.cells if c.z is not None and not abs(c.z) < Z_LIMIT]

    def select(self, target: str) -> list[SimCell]:
        return [c for c in self.cells if c.target == target]


# ---------------------------------------------------------------------------
# offspring sampler: alias table over a prefix plus an exact tail bucket


def _vose(weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = len(weights)
    scaled = weights * (n / math.fsum(weights.tolist()))
    prob = np.ones(n)
    alias = np.arange(n, dtype=np.int64)
    small = [i for i in range(n) if scaled[i] < 1.0]
    large = [i for i in range(n) if scaled[i] >= 1.0]
    while small and large:
        s = small.pop()
        g = large.pop()
        prob[s] = scaled[s]
        alias[s] = g
        scaled[g] = (scaled[g] + scaled[s]) - 1.0
        (small if scaled[g] < 1.0 else large).append(g)
    # leftovers are 1 up to rounding
    for i in small + large:
        prob[i] = 1.0
        alias[i] = i
    return prob, alias


@dataclass(frozen=True)
class OffspringSampler:
    prob: np.ndarray
    alias: np.ndarray
    kmax: int
    tail_kind: int
    tail_params: np.ndarray

    @classmethod
    def from_pmf(cls, pmf: Sequence[float]) -> "OffspringSampler":
        p = np.asarray(pmf, dtype=float)
        if p.ndim != 1 or len(p) == 0 or np.any(p < 0) or not abs(p.sum() - 1.0) <= 1e-12:
            raise ValueError("pmf must be a nonnegative vector summing to 1")
        prob, alias = _vose(p)
        return cls(prob, alias, len(p) - 1, _backend.kernels.TAIL_NONE, np.zeros(1))

    @classmethod
    def for_distribution(cls, dist: OffspringDistribution) -> "OffspringSampler":
        k = _backend.kernels
        if dist.bounded:
            return cls.from_pmf(dist.pmf_array(int(dist.support_max)))
        kmax = min(dist.support_prefix(), SAMPLER_PREFIX_CAP)
        p = np.asarray(dist.pmf_array(kmax), dtype=float)
        fbar = dist.tail(kmax)
        prob, alias = _vose(np.append(p, fbar))
        fam = dist.family
        if fam == "geometric":
            kind, tp = k.TAIL_GEOMETRIC, [math.log(dist.a)]
        elif fam == "poisson":
            kind, tp = k.TAIL_POISSON, [dist.lam, fbar, dist.pmf(kmax + 1)]
        elif fam == "power":
            kind, tp = k.TAIL_POWER, [dist.alpha]
        else:  # pragma: no cover - every unbounded family is listed above
            raise SimulationError(f"no exact tail sampler for family {fam!r}")
        return cls(prob, alias, kmax, kind, np.array(tp, dtype=float))

    def run(self, seed, trial_start, n_trials, max_generations, max_population,
            horizon, global_stop=-1, need_global=False, width_stop=0, survive_at=0):
        return _backend.kernels.simulate_block(
            self.prob, self.alias, self.kmax, self.tail_kind, self.tail_params,
            int(seed), int(trial_start), int(n_trials), int(max_generations),
            int(max_population), int(horizon), int(global_stop), bool(need_global),
            int(width_stop), int(survive_at),
        )


def _as_sampler(dist) -> OffspringSampler:
    if isinstance(dist, OffspringSampler):
        return dist
    return OffspringSampler.for_distribution(dist)


# ---------------------------------------------------------------------------
# single trees


def sample_tree(dist, rng_stream: TrialStream, limits: SimConfig | None = None) -> TreeObservation:
    """Grow one tree from substream ``rng_stream`` until extinction or a cap.

    ``dist`` may be an :class:`OffspringDistribution` or an
    :class:`OffspringSampler` (e.g. built from a raw pmf).
    """
    limits = limits or SimConfig(trials=1)
    sampler = _as_sampler(dist)
    horizon = limits.max_generations
    gm, gmax, width, status, gens = sampler.run(
        rng_stream.seed, rng_stream.trial, 1, limits.max_generations,
        limits.max_population, horizon, -1, True, 0,
    )
    g = int(gens[0])
    st = int(status[0])
    return TreeObservation(
        tuple(int(x) for x in gm[0, :g]),
        int(gmax[0]),
        int(width[0]),
        st == _backend.kernels.STATUS_EXTINCT,
        st == _backend.kernels.STATUS_CENSORED,
    )


# ---------------------------------------------------------------------------
# many trees


def thread_count(threads: int | None = None) -> int:
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get("GWMAXDEG_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return max(1, min(8, os.cpu_count() or 1))


@dataclass
class _Raw:
    gen_max: np.ndarray
    gmax: np.ndarray
    width: np.ndarray
    status: np.ndarray
    generations: np.ndarray


def simulate(dist, config: SimConfig, threads: int | None = None) -> _Raw:
    """Run ``config.trials`` trees in deterministic blocks."""
    sampler = _as_sampler(dist)
    need_global = "global" in config.targets
    global_stop = -1
    if isinstance(dist, OffspringDistribution) and dist.bounded:
        global_stop = int(dist.support_max)
    elif isinstance(dist, OffspringSampler) and dist.tail_kind == _backend.kernels.TAIL_NONE:
        global_stop = int(dist.kmax)
    width_stop = max(config.width_grid) if "width" in config.targets else 0
    horizon = config.horizon if config.targets & {"generation", "local"} else 0
    survive_at = survival_population(dist) if isinstance(dist, OffspringDistribution) else 0
    starts = list(range(0, config.trials, BLOCK_TRIALS))

    def work(start):
        n = min(BLOCK_TRIALS, config.trials - start)
        return sampler.run(config.seed, start, n, config.max_generations,
                           config.max_population, horizon, global_stop,
                           need_global, width_stop, survive_at)

    nt = thread_count(threads)
    if nt == 1 or len(starts) == 1:
        parts = [work(s) for s in starts]
    else:
        with ThreadPoolExecutor(max_workers=nt) as ex:
            parts = list(ex.map(work, starts))
    return _Raw(*(np.concatenate([p[i] for p in parts]) for i in range(5)))


def survival_population(dist: OffspringDistribution) -> int:
    """Population beyond which a supercritical tree dies with prob. < ``SURVIVAL_CERTAINTY``."""
    if not dist.is_supercritical:
        return 0
    q = dist.extinction_probability()
    if q <= 0.0:
        return 1
    return max(1, math.ceil(math.log(SURVIVAL_CERTAINTY) / math.log(q)))


def _cell(target, r, count, n, exact_p=None, extra=0) -> SimCell:
    """Cell with ``count`` sure hits and ``extra`` undecided (censored) trials.

    The z-score measures the distance from ``exact_p`` to the interval
    ``[count, count + extra] / n``; it is the usual binomial z when nothing
    is censored.
    """
    est = count / n if n else math.nan
    se = math.sqrt(est * (1.0 - est) / n) if n else math.nan
    cell = SimCell(target, int(r), int(count), int(n), est, se, undecided=int(extra))
    if exact_p is not None and n:
        cell.exact = float(exact_p)
        if min(n * exact_p, n * (1.0 - exact_p)) >= MIN_EXPECTED:
            sd = math.sqrt(exact_p * (1.0 - exact_p) / n)
            hi = (count + extra) / n
            if exact_p < est:
                cell.z = (est - exact_p) / sd
            elif exact_p > hi:
                cell.z = (hi - exact_p) / sd
            else:
                cell.z = 0.0 if extra else (est - exact_p) / sd
    return cell


def _table_key(t: DistTable) -> tuple:
    return (t.target, t.horizon)


def _hist_cells(target: str, values: np.ndarray, r_max: int, exact: DistTable | None,
                scale: float = 1.0, undecided: np.ndarray | None = None) -> list[SimCell]:
    """pmf and cdf cells for ``values`` (``-1`` marks an empty generation).

    ``undecided`` holds observed lower bounds of censored trials: such a trial
    is undecided for every cell at or above its observed value.
    """
    n = len(values) + (0 if undecided is None else len(undecided))
    cells = []
    counts = np.bincount(values + 1, minlength=r_max + 2)
    cum = np.cumsum(counts)
    if undecided is not None and len(undecided):
        und = np.cumsum(np.bincount(undecided + 1, minlength=r_max + 2))
    else:
        und = np.zeros(r_max + 2, dtype=np.int64)
    for r in range(r_max + 1):
        e_cdf = e_pmf = None
        if exact is not None and r < len(exact.rows):
            e_cdf = min(max(exact.rows[r].cdf / scale, 0.0), 1.0)
            e_pmf = min(max(exact.rows[r].pmf / scale, 0.0), 1.0)
        u = int(und[min(r + 1, len(und) - 1)])
        cells.append(_cell(f"{target}:cdf", r, cum[r + 1], n, e_cdf, u))
        cells.append(_cell(f"{target}:pmf", r, counts[r + 1], n, e_pmf, u))
    return cells


def estimate(dist, config: SimConfig, exact_tables: Iterable[DistTable] | None = None,
             threads: int | None = None, r_max: int | None = None) -> SimSummary:
    """Aggregate ``config.trials`` trees into empirical laws with z-scores.

    ``exact_tables`` are matched by ``(target, horizon)``; the global law is
    compared conditionally on extinction when the law is supercritical.
    """
    raw = simulate(dist, config, threads)
    k = _backend.kernels
    n = config.trials
    status = raw.status
    n_cens = int(np.sum(status == k.STATUS_CENSORED))
    counts = {
        "extinct": int(np.sum(status == k.STATUS_EXTINCT)),
        "censored": n_cens,
        "resolved": int(np.sum(status == k.STATUS_RESOLVED)),
    }
    censor_rate = n_cens / n
    supercritical = isinstance(dist, OffspringDistribution) and dist.is_supercritical
    if not supercritical and censor_rate > MAX_CENSOR_RATE:
        raise SimulationError(
            f"censoring rate {censor_rate:.4f} exceeds {MAX_CENSOR_RATE} for a non-supercritical law;"
            " raise max_population or max_generations"
        )
    tables: Mapping[tuple, DistTable] = {_table_key(t): t for t in (exact_tables or [])}
    cells: list[SimCell] = []
    excluded: dict = {}
    notes: list[str] = []

    obs_max = int(max(raw.gen_max.max(initial=0), raw.gmax.max(initial=0)))

    def rmax_for(target_tab):
        if r_max is not None:
            return r_max
        if target_tab is not None:
            return len(target_tab.rows) - 1
        return min(obs_max, 200)

    # ``generations`` counts fully drawn generations, so a censored row is
    # usable through generation h when more than h were completed
    censored = status == k.STATUS_CENSORED
    if config.targets & {"generation", "local"}:
        for h in range(config.horizon + 1):
            valid = ~censored | (raw.generations > h)
            excluded[f"horizon:{h}"] = int(np.sum(~valid))
            gm = raw.gen_max[valid, : h + 1]
            if "generation" in config.targets:
                tab = tables.get(("generation", h))
                cells += _hist_cells(f"generation:{h}", gm[:, h], rmax_for(tab), tab)
            if "local" in config.targets:
                tab = tables.get(("local", h))
                loc = gm.max(axis=1)
                cells += _hist_cells(f"local:{h}", loc, rmax_for(tab), tab)
    if "global" in config.targets:
        keep = ~censored
        excluded["global"] = n_cens
        tab = tables.get(("global", None))
        if supercritical and not dist.bounded:
            q = dist.extinction_probability()
            if q > 0.0:
                notes.append("global law compared conditionally on extinction")
                cells += _hist_cells("global", raw.gmax[keep], rmax_for(tab), tab, q)
            else:
                notes.append("no extinct trials possible: global law not estimated")
        else:
            cells += _hist_cells("global", raw.gmax[keep], rmax_for(tab), tab,
                                 undecided=raw.gmax[censored])
    if "width" in config.targets:
        for r in config.width_grid:
            cnt = int(np.sum(raw.width >= r))
            cells.append(_cell("width:tail", r, cnt, n))
    return SimSummary(config, cells, counts, censor_rate, excluded, notes)


# ---------------------------------------------------------------------------
# width bound


@dataclass
class WidthRow:
    r: int
    count: int
    trials: int
    estimate: float
    stderr: float
    bound: float
    cp_lower: float
    flagged: bool
    underpowered: bool


@dataclass
class WidthReport:
    rows: list[WidthRow]
    censor_rate: float

    @property
    def ok(self) -> bool:
        return not any(r.flagged for r in self.rows)

    @property
    def underpowered(self) -> bool:
        return any(r.underpowered for r in self.rows)


def width_bound_check(dist: OffspringDistribution, config: SimConfig,
                      grid: Sequence[int] | None = None, threads: int | None = None) -> WidthReport:
    """Empirical ``P[W >= r]`` against ``1/r`` on a grid of ``r``.

    A grid point is flagged when the estimate minus three standard errors
    exceeds ``1/r``.  The standard error is evaluated at the bound itself,
    so that tiny counts cannot produce spurious flags; points where the bound
    predicts fewer than ``MIN_EXPECTED`` exceedances are marked underpowered.
    """
    if dist.is_supercritical:
        raise ValueError("width bound requires a (sub)critical law")
    grid = tuple(grid or config.width_grid)
    cfg = SimConfig(config.trials, config.seed, config.max_generations, config.max_population,
                    frozenset({"width"}), 0, grid)
    raw = simulate(dist, cfg, threads)
    n = cfg.trials
    rows = []
    for r in cfg.width_grid:
        cnt = int(np.sum(raw.width >= r))
        est = cnt / n
        bound = 1.0 / r
        se = math.sqrt(bound * (1.0 - bound) / n)
        lower = 0.0 if cnt == 0 else float(stats.beta.ppf(0.00135, cnt, n - cnt + 1))
        rows.append(WidthRow(r, cnt, n, est, se, bound, lower,
                             est - 3.0 * se > bound, n * bound < MIN_EXPECTED))
    cens = float(np.mean(raw.status == _backend.kernels.STATUS_CENSORED))
    return WidthReport(rows, cens)
