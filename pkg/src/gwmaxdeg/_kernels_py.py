"""Pure-Python kernels.

Reference implementation of the hot loops; `_kernels.pyx` mirrors every
function here operation for operation so both backends agree bitwise on the
sampler and to rounding on the floating-point kernels.

All PGF kernels work in the tail variable ``s = 1 - t``.  For a pmf prefix
``p`` and cap ``r`` they evaluate ``1 - G_r(1 - s)`` where
``G_r(t) = p_0 + ... + p_r t^r``.
"""

from __future__ import annotations

import math

import numpy as np

MASK64 = 0xFFFFFFFFFFFFFFFF
_GOLDEN = 0x9E3779B97F4A7C15
_TWO_M53 = 1.0 / 9007199254740992.0

STATUS_EXTINCT = 0
STATUS_CENSORED = 1
STATUS_RESOLVED = 2

TAIL_NONE = 0
TAIL_GEOMETRIC = 1
TAIL_POISSON = 2
TAIL_POWER = 3


# ---------------------------------------------------------------------------
# truncated PGF in the tail variable


def _tail_sum(p, r, fbar, s):
    # returns (1 - G_r(1 - s), G_r'(1 - s)); Neumaier-compensated sums
    x = 1.0 - s
    xpow = 1.0          # x^(k-1)
    u = 0.0             # 1 - x^k, accumulated as s * sum_{j<k} x^j
    uc = 0.0
    tot = fbar
    tc = 0.0
    der = 0.0
    dc = 0.0
    for k in range(1, r + 1):
        inc = s * xpow
        t = u + inc
        if abs(u) >= abs(inc):
            uc += (u - t) + inc
        else:
            uc += (inc - t) + u
        u = t
        pk = p[k]
        if pk != 0.0:
            term = pk * (u + uc)
            t = tot + term
            if abs(tot) >= abs(term):
                tc += (tot - t) + term
            else:
                tc += (term - t) + tot
            tot = t
            dterm = k * pk * xpow
            t = der + dterm
            if abs(der) >= abs(dterm):
                dc += (der - t) + dterm
            else:
                dc += (dterm - t) + der
            der = t
        xpow *= x
    return tot + tc, der + dc


def trunc_tail(p, r, fbar, s):
    """Return ``(1 - G_r(1 - s), G_r'(1 - s))``.

    ``fbar`` must be the tail mass ``F̄(r)``; it enters as the constant term.
    """
    return _tail_sum(_as_list(p, r), r, fbar, s)


def trunc_divdiff(p, r, a, b):
    """Divided difference of ``s -> 1 - G_r(1 - s)`` on ``[b, a]``.

    Uses ``w_k = (y^k - z^k)/(y - z)`` with ``y = 1 - b``, ``z = 1 - a`` and the
    positive recurrence ``w_k = y w_{k-1} + z^{k-1}``; when ``a == b`` the
    result is the derivative ``G_r'(1 - a)``.
    """
    pl = _as_list(p, r)
    y = 1.0 - b
    z = 1.0 - a
    w = 0.0
    zpow = 1.0
    tot = 0.0
    tc = 0.0
    for k in range(1, r + 1):
        w = y * w + zpow
        zpow *= z
        pk = pl[k]
        if pk != 0.0:
            term = pk * w
            t = tot + term
            if abs(tot) >= abs(term):
                tc += (tot - t) + term
            else:
                tc += (term - t) + tot
            tot = t
    return tot + tc


def tail_orbit(p, caps, fbars, s0):
    """Apply ``s <- 1 - G_{caps[i]}(1 - s)`` for i = 0, 1, ... in order."""
    rmax = int(max(caps)) if len(caps) else 0
    pl = _as_list(p, rmax)
    s = s0
    for r, fb in zip(caps, fbars):
        s = _tail_sum(pl, int(r), float(fb), s)[0]
    return s


def solve_tail(p, r, fbar, rtol, max_iter):
    """Solve ``s = 1 - G_r(1 - s)`` on [0, 1].

    Returns ``(s, iterations, residual, slope)`` where ``slope = G_r'(1 - s)``.
    The root is bracketed by ``h(s) = Ĝ_r(s) - s`` (positive at 0, nonpositive
    at 1); Newton steps leaving the bracket are replaced by bisection.
    """
    pl = _as_list(p, r)
    if fbar <= 0.0:
        g, d = _tail_sum(pl, r, 0.0, 0.0)
        return 0.0, 0, g, d
    lo = 0.0
    hi = 1.0
    s = fbar
    it = 0
    while it < max_iter:
        it += 1
        g, d = _tail_sum(pl, r, fbar, s)
        h = g - s
        if h == 0.0:
            return s, it, 0.0, d
        if h > 0.0:
            lo = s
        else:
            hi = s
        dh = d - 1.0
        if dh < 0.0:
            s_new = s - h / dh
        else:
            s_new = -1.0
        if not (lo < s_new < hi):
            s_new = 0.5 * (lo + hi)
        if abs(s_new - s) <= rtol * s_new or hi - lo <= rtol * hi:
            s = s_new
            break
        s = s_new
    g, d = _tail_sum(pl, r, fbar, s)
    return s, it, g - s, d


def local_pair(p, r, fbar, n_steps):
    """Iterate cap ``r`` and cap ``r - 1`` orbits from s = 0 in lockstep.

    Returns arrays ``(b, delta)`` of length ``n_steps + 1``: ``b[k]`` is the
    cap-``r`` tail after k steps and ``delta[k]`` the (cap ``r-1``) minus
    (cap ``r``) gap, propagated without cancellation as
    ``delta' = D_{r-1}(a, b) delta + p_r (1 - b)^r``.  Requires ``r >= 1``.
    """
    pl = _as_list(p, r)
    pr = pl[r]
    b = [0.0] * (n_steps + 1)
    delta = [0.0] * (n_steps + 1)
    bk = 0.0
    dk = 0.0
    for k in range(1, n_steps + 1):
        a = bk + dk
        dd = trunc_divdiff(pl, r - 1, a, bk)
        dk = dd * dk + pr * (1.0 - bk) ** r
        bk = _tail_sum(pl, r, fbar, bk)[0]
        b[k] = bk
        delta[k] = dk
    return np.array(b), np.array(delta)


def _as_list(p, r):
    if isinstance(p, list):
        return p
    return np.asarray(p, dtype=np.float64)[: r + 1].tolist()


# ---------------------------------------------------------------------------
# counter-based random streams


def _splitmix(x):
    x = (x + _GOLDEN) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return x, z ^ (z >> 31)


def _rotl(x, k):
    return ((x << k) | (x >> (64 - k))) & MASK64


class _Stream:
    """xoshiro256** seeded by SplitMix64 from ``(seed, trial)``."""

    __slots__ = ("s0", "s1", "s2", "s3")

    def __init__(self, seed, trial):
        _, key = _splitmix((seed & MASK64) ^ ((trial * _GOLDEN) & MASK64))
        x = key
        x, self.s0 = _splitmix(x)
        x, self.s1 = _splitmix(x)
        x, self.s2 = _splitmix(x)
        x, self.s3 = _splitmix(x)

    def next64(self):
        s0, s1, s2, s3 = self.s0, self.s1, self.s2, self.s3
        result = (_rotl((s1 * 5) & MASK64, 7) * 9) & MASK64
        t = (s1 << 17) & MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self.s0, self.s1, self.s2, self.s3 = s0, s1, s2, s3
        return result

    def uniform(self):
        return (self.next64() >> 11) * _TWO_M53


def uniform_stream(seed, trial, n):
    """First ``n`` uniforms of the substream for ``trial`` (testing aid)."""
    st = _Stream(seed, trial)
    return np.array([st.uniform() for _ in range(n)])


# ---------------------------------------------------------------------------
# offspring sampling and tree simulation


def _draw(st, prob, alias, nbins, kmax, tail_kind, tp):
    u = st.uniform()
    i = int(u * nbins)
    if i >= nbins:
        i = nbins - 1
    v = st.uniform()
    if v >= prob[i]:
        i = alias[i]
    if i <= kmax:
        return i
    # tail bucket: offspring count > kmax
    if tail_kind == TAIL_GEOMETRIC:
        w = 1.0 - st.uniform()
        return kmax + 1 + int(math.floor(math.log(w) / tp[0]))
    if tail_kind == TAIL_POISSON:
        target = st.uniform() * tp[1]
        pk = tp[2]
        k = kmax + 1
        while target >= pk and k < kmax + 4000:
            target -= pk
            k += 1
            pk = pk * tp[0] / k
        return k
    if tail_kind == TAIL_POWER:
        alpha = tp[0]
        x0 = kmax + 0.5
        while True:
            w = 1.0 - st.uniform()
            x = x0 * w ** (-1.0 / (alpha - 1.0))
            if x > 9.0e18:
                continue
            k = int(math.floor(x + 0.5))
            acc = (alpha - 1.0) * k ** (-alpha) / (
                (k - 0.5) ** (1.0 - alpha) - (k + 0.5) ** (1.0 - alpha)
            )
            if st.uniform() < acc:
                return k
    return kmax


def simulate_block(
    prob,
    alias,
    kmax,
    tail_kind,
    tail_params,
    seed,
    trial_start,
    n_trials,
    max_generations,
    max_population,
    horizon,
    global_stop,
    need_global,
    width_stop,
    survive_at=0,
):
    """Simulate ``n_trials`` trees with substreams ``trial_start + i``.

    Returns ``(gen_max, global_max, width, status, generations)`` where
    ``generations`` counts the fully drawn generations.
    ``gen_max[i, g]`` is the max out-degree at generation g (``-1`` when the
    generation is empty or was not reached) for ``g <= horizon``.
    A trial stops at extinction, at a cap (censored) or, once generations
    ``0..horizon`` are recorded, as soon as every requested statistic is
    determined (resolved): the global max has reached ``global_stop``
    (``< 0`` = never) and the width has reached ``width_stop`` (``<= 0`` = not
    requested).  With ``survive_at > 0`` a trial past the horizon whose
    population reaches ``survive_at`` is censored as certainly surviving.
    """
    prob_l = np.asarray(prob, dtype=np.float64).tolist()
    alias_l = np.asarray(alias, dtype=np.int64).tolist()
    tp = np.asarray(tail_params, dtype=np.float64).tolist()
    nbins = len(prob_l)
    gen_max = np.full((n_trials, horizon + 1), -1, dtype=np.int64)
    gmax_out = np.zeros(n_trials, dtype=np.int64)
    width_out = np.zeros(n_trials, dtype=np.int64)
    status_out = np.zeros(n_trials, dtype=np.int8)
    gens_out = np.zeros(n_trials, dtype=np.int64)
    for i in range(n_trials):
        st = _Stream(seed, trial_start + i)
        z = 1
        width = 1
        gmax = -1
        g = 0
        status = STATUS_EXTINCT
        while True:
            if z == 0:
                status = STATUS_EXTINCT
                break
            if g >= max_generations:
                status = STATUS_CENSORED
                break
            m = -1
            nxt = 0
            for _ in range(z):
                k = _draw(st, prob_l, alias_l, nbins, kmax, tail_kind, tp)
                nxt += k
                if k > m:
                    m = k
                if nxt > max_population:
                    break
            if g <= horizon:
                gen_max[i, g] = m
            if m > gmax:
                gmax = m
            if nxt > width:
                width = nxt
            if nxt > max_population:
                # generation g was only partly drawn
                z = nxt
                status = STATUS_CENSORED
                break
            g += 1
            z = nxt
            if z > 0 and g > horizon:
                if survive_at > 0 and z >= survive_at:
                    status = STATUS_CENSORED
                    break
                done = True
                if need_global and not (global_stop >= 0 and gmax >= global_stop):
                    done = False
                if width_stop > 0 and width < width_stop:
                    done = False
                if done:
                    status = STATUS_RESOLVED
                    break
        gmax_out[i] = gmax
        width_out[i] = width
        status_out[i] = status
        gens_out[i] = g
    return gen_max, gmax_out, width_out, status_out, gens_out
