"""Offspring distributions and their generating functions.

Every family exposes the same surface: pmf, cdf ``F``, tail ``F̄``, moments,
the PGF ``G`` and truncated PGFs ``G_r``.  Values near ``t = 1`` are carried
in the tail variable ``s = 1 - t`` (``tail_pgf(s) = 1 - G(1 - s)``) so that
quantities of order ``F̄(r)`` keep full relative precision.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import mpmath
import numpy as np
from scipy import special

from . import _backend

EPS = np.finfo(float).eps
CRITICAL_TOL = 1e-12
SUM_TOL = 1e-12
#: prefix length cap for the sampler's alias table
SAMPLER_PREFIX_CAP = 4096


class OffspringError(ValueError):
    """Invalid offspring specification."""


class Criticality(str, Enum):
    SUBCRITICAL = "subcritical"
    CRITICAL = "critical"
    SUPERCRITICAL = "supercritical"


@dataclass(frozen=True)
class OffspringSpec:
    """Parametric or explicit offspring law.

    ``family`` is one of ``explicit``, ``geometric``, ``poisson``,
    ``power`` (critical power law); ``params`` holds the pmf for ``explicit``
    and the single parameter otherwise.
    """

    family: str
    params: tuple[float, ...]
    tail_tolerance: float = 1e-14

    @classmethod
    def explicit(cls, pmf, tail_tolerance: float = 1e-14) -> "OffspringSpec":
        return cls("explicit", tuple(float(x) for x in pmf), tail_tolerance)

    @classmethod
    def geometric(cls, a: float, tail_tolerance: float = 1e-14) -> "OffspringSpec":
        return cls("geometric", (float(a),), tail_tolerance)

    @classmethod
    def poisson(cls, lam: float, tail_tolerance: float = 1e-14) -> "OffspringSpec":
        return cls("poisson", (float(lam),), tail_tolerance)

    @classmethod
    def power_law(cls, alpha: float, tail_tolerance: float = 1e-14) -> "OffspringSpec":
        return cls("power", (float(alpha),), tail_tolerance)

    @classmethod
    def parse(cls, text: str) -> "OffspringSpec":
        """Parse ``name:param[,param...]``, e.g. ``geometric:0.5``."""
        name, _, rest = text.strip().partition(":")
        name = name.strip().lower()
        try:
            values = tuple(float(v) for v in rest.split(",") if v.strip())
        except ValueError as exc:
            raise OffspringError(f"bad parameters in {text!r}") from exc
        aliases = {
            "geometric": "geometric",
            "geom": "geometric",
            "poisson": "poisson",
            "power": "power",
            "powerlaw": "power",
            "power-law": "power",
            "critical-power-law": "power",
            "explicit": "explicit",
            "pmf": "explicit",
        }
        if name not in aliases:
            raise OffspringError(f"unknown family {name!r}")
        family = aliases[name]
        if family != "explicit" and len(values) != 1:
            raise OffspringError(f"family {family} takes exactly one parameter")
        if family == "explicit" and not values:
            raise OffspringError("explicit family needs a pmf")
        return cls(family, values)

    def label(self) -> str:
        if self.family == "explicit":
            return "explicit:" + ",".join(repr(v) for v in self.params)
        return f"{self.family}:{self.params[0]!r}"

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "params": list(self.params),
            "tail_tolerance": self.tail_tolerance,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OffspringSpec":
        return cls(d["family"], tuple(float(x) for x in d["params"]), float(d.get("tail_tolerance", 1e-14)))


class OffspringDistribution:
    """Immutable offspring law ``p`` with PGF machinery.

    Subclasses provide ``_pmf_block``, ``tail`` and the untruncated PGF in the
    tail variable.  The materialized pmf prefix grows on demand under a lock;
    the values themselves never change.
    """

    family = "abstract"
    analytic_tail_moment = False

    def __init__(self, spec: OffspringSpec):
        self.spec = spec
        self.tail_tolerance = spec.tail_tolerance
        self._lock = threading.Lock()
        self._prefix = self._pmf_block(0, 64)

    # -- pmf / cdf --------------------------------------------------------

    def _pmf_block(self, start: int, stop: int) -> np.ndarray:
        raise NotImplementedError

    def pmf_array(self, kmax: int) -> np.ndarray:
        """Return ``[p_0, ..., p_kmax]`` (a read-only view)."""
        if kmax < 0:
            raise ValueError("kmax must be nonnegative")
        pre = self._prefix
        if len(pre) <= kmax:
            with self._lock:
                pre = self._prefix
                if len(pre) <= kmax:
                    new_len = max(kmax + 1, 2 * len(pre))
                    ext = self._pmf_block(len(pre), new_len)
                    pre = np.concatenate([pre, ext])
                    pre.flags.writeable = False
                    self._prefix = pre
        return pre[: kmax + 1]

    def pmf(self, k: int) -> float:
        if k < 0:
            return 0.0
        return float(self.pmf_array(k)[k])

    def tail(self, r: int) -> float:
        """``F̄(r) = P[X > r]``; ``F̄(-1) = 1``."""
        raise NotImplementedError

    def cdf(self, r: int) -> float:
        if r < 0:
            return 0.0
        return 1.0 - self.tail(r)

    def tail_first_moment(self, r: int) -> float:
        """``sum_{i > r} i p_i``."""
        raise NotImplementedError

    @property
    def p0(self) -> float:
        return self.pmf(0)

    # -- summary ----------------------------------------------------------

    mean: float
    variance: float
    bounded: bool = False
    support_max: int | None = None

    @property
    def criticality(self) -> Criticality:
        return classify(self.mean)

    @property
    def is_critical(self) -> bool:
        return self.criticality is Criticality.CRITICAL

    @property
    def is_supercritical(self) -> bool:
        return self.criticality is Criticality.SUPERCRITICAL

    def support_prefix(self) -> int:
        """Smallest ``K`` with ``F̄(K) < tail_tolerance`` (support max if bounded)."""
        if self.bounded:
            return int(self.support_max)
        k = 0
        while self.tail(k) >= self.tail_tolerance:
            k = 2 * k + 1
        lo, hi = k // 2, k
        while lo < hi:
            mid = (lo + hi) // 2
            if self.tail(mid) < self.tail_tolerance:
                hi = mid
            else:
                lo = mid + 1
        return lo

    # -- generating functions ---------------------------------------------

    def pgf(self, x: float) -> float:
        """``G(x)``."""
        _check_unit(x)
        return 1.0 - self.tail_pgf(1.0 - x) if x > 0.5 else self._pgf_direct(x)

    def _pgf_direct(self, x: float) -> float:
        k = self.support_prefix()
        pk = self.pmf_array(k)
        return math.fsum((pk * x ** np.arange(k + 1)).tolist())

    def tail_pgf(self, s: float) -> float:
        """``1 - G(1 - s)`` with relative accuracy for small ``s``."""
        raise NotImplementedError

    def tail_pgf_divdiff(self, a: float, b: float) -> float:
        """``(tail_pgf(a) - tail_pgf(b)) / (a - b)`` computed without cancellation.

        For ``a == b`` this is the derivative ``G'(1 - a)``.
        """
        raise NotImplementedError

    def tail_pgf_truncated(self, r: int, s: float) -> float:
        """``1 - G_r(1 - s)``."""
        return _backend.kernels.trunc_tail(self.pmf_array(r), r, self.tail(r), s)[0]

    def pgf_truncated(self, r: int, x: float) -> float:
        """``G_r(x) = p_0 + ... + p_r x^r`` by exactly rounded summation."""
        if r < 0:
            raise ValueError("truncation level must be nonnegative")
        _check_unit(x)
        pk = self.pmf_array(r)
        return math.fsum((pk * np.power(x, np.arange(r + 1))).tolist())

    def pgf_derivative(self, x: float, order: int = 1, truncation: int | None = None) -> float:
        """Derivative of ``G`` (or ``G_r`` when ``truncation`` is given) at ``x``.

        The untruncated second derivative at ``x = 1`` is ``+inf`` for laws with
        infinite variance.
        """
        if order not in (1, 2):
            raise ValueError("order must be 1 or 2")
        _check_unit(x)
        if truncation is None and not self.bounded:
            return self._pgf_derivative_full(x, order)
        r = self.support_max if truncation is None else truncation
        if self.bounded:
            r = min(r, int(self.support_max))
        if r < order:
            return 0.0
        k = np.arange(r + 1, dtype=float)
        pk = self.pmf_array(r)
        if order == 1:
            terms = k[1:] * pk[1:] * np.power(x, k[1:] - 1)
        else:
            terms = k[2:] * (k[2:] - 1) * pk[2:] * np.power(x, k[2:] - 2)
        return math.fsum(terms.tolist())

    def _pgf_derivative_full(self, x: float, order: int) -> float:
        raise NotImplementedError

    def extinction_probability(self) -> float:
        return _extinction_probability(self)

    # -- misc -------------------------------------------------------------

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.spec.label()})"


def classify(mean: float) -> Criticality:
    if abs(mean - 1.0) <= CRITICAL_TOL:
        return Criticality.CRITICAL
    return Criticality.SUBCRITICAL if mean < 1.0 else Criticality.SUPERCRITICAL


def _check_unit(x: float) -> None:
    if not (0.0 <= x <= 1.0):
        raise ValueError(f"argument {x!r} outside [0, 1]")


def _series_divdiff(p: np.ndarray, a: float, b: float) -> float:
    return _backend.kernels.trunc_divdiff(p, len(p) - 1, a, b)


# ---------------------------------------------------------------------------
# families


class ExplicitOffspring(OffspringDistribution):
    family = "explicit"
    analytic_tail_moment = False

    def __init__(self, spec: OffspringSpec):
        p = np.array(spec.params, dtype=float)
        if p.ndim != 1 or len(p) == 0:
            raise OffspringError("explicit pmf must be a nonempty list")
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise OffspringError("pmf entries must be finite and nonnegative")
        total = math.fsum(p.tolist())
        if abs(total - 1.0) > SUM_TOL:
            raise OffspringError(f"pmf sums to {total!r}, not 1")
        nz = np.nonzero(p)[0]
        self._p = p[: nz[-1] + 1].copy()
        self._p.flags.writeable = False
        k = np.arange(len(self._p), dtype=float)
        # suffix sums: _tails[r] = sum_{k > r} p_k
        self._tails = np.array(
            [math.fsum(self._p[r + 1:].tolist()) for r in range(len(self._p))]
        )
        self.mean = math.fsum((k * self._p).tolist())
        second = math.fsum((k * (k - 1) * self._p).tolist())
        self.variance = max(second + self.mean - self.mean**2, 0.0)
        self.bounded = True
        self.support_max = len(self._p) - 1
        super().__init__(spec)

    def _pmf_block(self, start, stop):
        out = np.zeros(stop - start)
        hi = min(stop, len(self._p))
        if hi > start:
            out[: hi - start] = self._p[start:hi]
        return out

    def tail(self, r):
        if r < 0:
            return 1.0
        if r >= len(self._p):
            return 0.0
        return float(self._tails[r])

    def tail_first_moment(self, r):
        if r < 0:
            r = -1
        if r + 1 >= len(self._p):
            return 0.0
        k = np.arange(r + 1, len(self._p), dtype=float)
        return math.fsum((k * self._p[r + 1:]).tolist())

    def tail_pgf(self, s):
        _check_unit(s)
        return _backend.kernels.trunc_tail(self._p, self.support_max, 0.0, s)[0]

    def tail_pgf_divdiff(self, a, b):
        return _series_divdiff(self._p, a, b)

    def pgf(self, x):
        _check_unit(x)
        return self.pgf_truncated(self.support_max, x)


class GeometricOffspring(OffspringDistribution):
    """``p_k = (1 - a) a^k`` on k >= 0."""

    family = "geometric"
    analytic_tail_moment = True

    def __init__(self, spec):
        (a,) = spec.params
        if not (0.0 < a < 1.0):
            raise OffspringError("geometric ratio must lie strictly inside (0, 1)")
        self.a = a
        self.mean = a / (1.0 - a)
        self.variance = a / (1.0 - a) ** 2
        super().__init__(spec)

    def _pmf_block(self, start, stop):
        k = np.arange(start, stop, dtype=float)
        return (1.0 - self.a) * np.power(self.a, k)

    def tail(self, r):
        if r < 0:
            return 1.0
        return self.a ** (r + 1)

    def tail_first_moment(self, r):
        m = max(r, -1) + 1
        return self.a**m * (m + self.a / (1.0 - self.a))

    def tail_pgf(self, s):
        _check_unit(s)
        a = self.a
        return a * s / (1.0 - a + a * s)

    def tail_pgf_divdiff(self, a_, b_):
        a = self.a
        return a * (1.0 - a) / ((1.0 - a + a * a_) * (1.0 - a + a * b_))

    def pgf(self, x):
        _check_unit(x)
        return (1.0 - self.a) / (1.0 - self.a * x)

    def _pgf_derivative_full(self, x, order):
        a = self.a
        if order == 1:
            return (1.0 - a) * a / (1.0 - a * x) ** 2
        return 2.0 * (1.0 - a) * a * a / (1.0 - a * x) ** 3


class PoissonOffspring(OffspringDistribution):
    family = "poisson"
    analytic_tail_moment = True

    def __init__(self, spec):
        (lam,) = spec.params
        if not (lam > 0.0 and math.isfinite(lam)):
            raise OffspringError("poisson rate must be strictly positive")
        self.lam = lam
        self.mean = lam
        self.variance = lam
        super().__init__(spec)

    def _pmf_block(self, start, stop):
        k = np.arange(start, stop, dtype=float)
        with np.errstate(divide="ignore"):
            logp = k * math.log(self.lam) - self.lam - special.gammaln(k + 1.0)
        return np.exp(logp)

    def tail(self, r):
        if r < 0:
            return 1.0
        return float(special.gammainc(r + 1.0, self.lam))

    def tail_first_moment(self, r):
        return self.lam * self.tail(r - 1) if r >= 0 else self.lam

    def tail_pgf(self, s):
        _check_unit(s)
        return -math.expm1(-self.lam * s)

    def tail_pgf_divdiff(self, a, b):
        lam = self.lam
        d = a - b
        if d == 0.0:
            return lam * math.exp(-lam * b)
        return math.exp(-lam * b) * (-math.expm1(-lam * d)) / d

    def pgf(self, x):
        _check_unit(x)
        return math.exp(self.lam * (x - 1.0))

    def _pgf_derivative_full(self, x, order):
        return self.lam**order * math.exp(self.lam * (x - 1.0))


_MP_DPS = 50


@lru_cache(maxsize=200_000)
def _polylog(alpha: float, x: float):
    with mpmath.workdps(_MP_DPS):
        return mpmath.polylog(mpmath.mpf(alpha), mpmath.mpf(x))


@lru_cache(maxsize=200_000)
def _polylog_tail(alpha: float, s: float):
    # Li_alpha(1 - s) with 1 - s formed exactly
    with mpmath.workdps(_MP_DPS):
        return mpmath.polylog(mpmath.mpf(alpha), 1 - mpmath.mpf(s))


@lru_cache(maxsize=64)
def _zeta_mp(alpha: float):
    with mpmath.workdps(_MP_DPS):
        return mpmath.zeta(mpmath.mpf(alpha))


class PowerLawOffspring(OffspringDistribution):
    """Critical power law: ``p_k = c k^-alpha`` for k >= 1, ``c = 1/zeta(alpha-1)``.

    ``p_0`` absorbs the remaining mass, which forces mean exactly 1.
    """

    family = "power"
    analytic_tail_moment = True

    def __init__(self, spec):
        (alpha,) = spec.params
        if not (alpha > 2.0 and math.isfinite(alpha)):
            raise OffspringError("power-law exponent must exceed 2")
        self.alpha = alpha
        with mpmath.workdps(_MP_DPS):
            c = 1 / mpmath.zeta(alpha - 1)
            self._c_mp = c
            self._p0_mp = 1 - c * mpmath.zeta(alpha)
            self.c = float(c)
            self._p0 = float(self._p0_mp)
            self.mean = float(c * mpmath.zeta(alpha - 1))
            if alpha > 3.0:
                self.variance = float(c * mpmath.zeta(alpha - 2) - 1)
            else:
                self.variance = math.inf
        super().__init__(spec)

    def _pmf_block(self, start, stop):
        k = np.arange(start, stop, dtype=float)
        with np.errstate(divide="ignore"):
            out = self.c * np.power(k, -self.alpha)
        if start == 0:
            out[0] = self._p0
        return out

    def tail(self, r):
        if r < 0:
            return 1.0
        return float(self.c * special.zeta(self.alpha, r + 1.0))

    def tail_first_moment(self, r):
        r = max(r, 0)
        return float(self.c * special.zeta(self.alpha - 1.0, r + 1.0))

    def _one_minus_g(self, s: float):
        # c (zeta(alpha) - Li_alpha(1 - s)) in multiprecision
        with mpmath.workdps(_MP_DPS):
            if s == 0.0:
                return mpmath.mpf(0)
            return self._c_mp * (_zeta_mp(self.alpha) - _polylog_tail(self.alpha, s))

    def tail_pgf(self, s):
        _check_unit(s)
        return float(self._one_minus_g(s))

    def tail_pgf_divdiff(self, a, b):
        if a == b:
            return self._pgf_derivative_full(1.0 - a, 1)
        with mpmath.workdps(_MP_DPS):
            diff = self._one_minus_g(a) - self._one_minus_g(b)
            return float(diff / (mpmath.mpf(a) - mpmath.mpf(b)))

    def pgf(self, x):
        _check_unit(x)
        if x > 0.5:
            return 1.0 - self.tail_pgf(1.0 - x)
        with mpmath.workdps(_MP_DPS):
            return float(self._p0_mp + self._c_mp * _polylog(self.alpha, x))

    def _pgf_derivative_full(self, x, order):
        alpha = self.alpha
        if x == 0.0:
            return self.c if order == 1 else 2.0 * self.c * 2.0 ** (-alpha)
        if x == 1.0:
            if order == 1:
                return self.mean
            return self.variance + self.mean**2 - self.mean
        with mpmath.workdps(_MP_DPS):
            xm = mpmath.mpf(x)
            if order == 1:
                return float(self._c_mp * mpmath.polylog(alpha - 1, xm) / xm)
            return float(
                self._c_mp * (mpmath.polylog(alpha - 2, xm) - mpmath.polylog(alpha - 1, xm)) / xm**2
            )


_FAMILIES = {
    "explicit": ExplicitOffspring,
    "geometric": GeometricOffspring,
    "poisson": PoissonOffspring,
    "power": PowerLawOffspring,
}


# ---------------------------------------------------------------------------
# module-level operations


def build(spec: OffspringSpec) -> OffspringDistribution:
    """Validate ``spec`` and return the corresponding distribution."""
    if spec.family not in _FAMILIES:
        raise OffspringError(f"unknown family {spec.family!r}")
    if not (spec.tail_tolerance > 0.0 and spec.tail_tolerance < 1e-3):
        raise OffspringError("tail_tolerance must lie in (0, 1e-3)")
    dist = _FAMILIES[spec.family](spec)
    if not (dist.mean > 0.0):
        raise OffspringError("mean offspring number must be positive (p_0 < 1)")
    if not math.isfinite(dist.mean):
        raise OffspringError("mean offspring number must be finite")
    if dist.pmf(1) == 1.0:
        raise OffspringError("degenerate law p_1 = 1: every t is a fixed point")
    return dist


def pgf(dist: OffspringDistribution, x: float) -> float:
    return dist.pgf(x)


def pgf_truncated(dist: OffspringDistribution, r: int, x: float) -> float:
    return dist.pgf_truncated(r, x)


def pgf_derivative(dist: OffspringDistribution, truncation: int | None, x: float, order: int = 1) -> float:
    """``truncation=None`` means the untruncated ``G``."""
    return dist.pgf_derivative(x, order=order, truncation=truncation)


def extinction_probability(dist: OffspringDistribution) -> float:
    return dist.extinction_probability()


class ConvergenceError(ArithmeticError):
    """A numerical iteration failed to converge."""

    def __init__(self, message: str, best: float | None = None, residual: float | None = None):
        super().__init__(message)
        self.best = best
        self.residual = residual


def _extinction_probability(dist: OffspringDistribution) -> float:
    # Newton on f(t) = G(t) - t from t = 0: f is convex and decreasing on [0, q],
    # so the iterates increase monotonically to the smallest root.
    if dist.criticality is not Criticality.SUPERCRITICAL:
        return 1.0
    if dist.p0 == 0.0:
        return 0.0
    if isinstance(dist, GeometricOffspring):
        return (1.0 - dist.a) / dist.a
    t = 0.0
    for _ in range(200):
        f = dist.pgf(t) - t
        df = dist.pgf_derivative(t, 1) - 1.0
        if df >= 0.0:
            # cannot happen left of q; fall back to a plain iteration step
            t_new = dist.pgf(t)
        else:
            t_new = t - f / df
        if t_new <= t:
            break
        if t_new - t <= 2 * EPS * t_new:
            t = t_new
            break
        t = t_new
    residual = abs(dist.pgf(t) - t)
    if residual >= 1e-12:
        raise ConvergenceError("extinction probability iteration stalled", t, residual)
    return t


def family_param_string(dist: OffspringDistribution) -> str:
    return dist.spec.label()
