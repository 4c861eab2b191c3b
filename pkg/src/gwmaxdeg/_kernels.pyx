# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels; see ``_kernels_py`` for the reference semantics."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, floor, log, pow
from libc.stdint cimport uint64_t, int64_t, int8_t

cnp.import_array()

cdef enum:
    C_EXTINCT = 0
    C_CENSORED = 1
    C_RESOLVED = 2
    C_TAIL_NONE = 0
    C_TAIL_GEOMETRIC = 1
    C_TAIL_POISSON = 2
    C_TAIL_POWER = 3

STATUS_EXTINCT = C_EXTINCT
STATUS_CENSORED = C_CENSORED
STATUS_RESOLVED = C_RESOLVED

TAIL_NONE = C_TAIL_NONE
TAIL_GEOMETRIC = C_TAIL_GEOMETRIC
TAIL_POISSON = C_TAIL_POISSON
TAIL_POWER = C_TAIL_POWER

cdef uint64_t _GOLDEN = 0x9E3779B97F4A7C15ULL
cdef double _TWO_M53 = 1.0 / 9007199254740992.0


# ---------------------------------------------------------------------------
# truncated PGF in the tail variable

cdef inline void _tail_sum(const double[::1] p, Py_ssize_t r, double fbar, double s,
                           double* val, double* der_out) noexcept nogil:
    cdef double x = 1.0 - s
    cdef double xpow = 1.0
    cdef double u = 0.0, uc = 0.0
    cdef double tot = fbar, tc = 0.0
    cdef double der = 0.0, dc = 0.0
    cdef double inc, t, pk, term, dterm
    cdef Py_ssize_t k
    for k in range(1, r + 1):
        inc = s * xpow
        t = u + inc
        if fabs(u) >= fabs(inc):
            uc += (u - t) + inc
        else:
            uc += (inc - t) + u
        u = t
        pk = p[k]
        if pk != 0.0:
            term = pk * (u + uc)
            t = tot + term
            if fabs(tot) >= fabs(term):
                tc += (tot - t) + term
            else:
                tc += (term - t) + tot
            tot = t
            dterm = k * pk * xpow
            t = der + dterm
            if fabs(der) >= fabs(dterm):
                dc += (der - t) + dterm
            else:
                dc += (dterm - t) + der
            der = t
        xpow *= x
    val[0] = tot + tc
    der_out[0] = der + dc


cdef inline double _divdiff(const double[::1] p, Py_ssize_t r, double a, double b) noexcept nogil:
    cdef double y = 1.0 - b
    cdef double z = 1.0 - a
    cdef double w = 0.0, zpow = 1.0
    cdef double tot = 0.0, tc = 0.0, term, t, pk
    cdef Py_ssize_t k
    for k in range(1, r + 1):
        w = y * w + zpow
        zpow *= z
        pk = p[k]
        if pk != 0.0:
            term = pk * w
            t = tot + term
            if fabs(tot) >= fabs(term):
                tc += (tot - t) + term
            else:
                tc += (term - t) + tot
            tot = t
    return tot + tc


def trunc_tail(p, Py_ssize_t r, double fbar, double s):
    cdef const double[::1] pv = np.ascontiguousarray(p, dtype=np.float64)
    cdef double v, d
    _tail_sum(pv, r, fbar, s, &v, &d)
    return v, d


def trunc_divdiff(p, Py_ssize_t r, double a, double b):
    cdef const double[::1] pv = np.ascontiguousarray(p, dtype=np.float64)
    return _divdiff(pv, r, a, b)


def tail_orbit(p, caps, fbars, double s0):
    cdef const double[::1] pv = np.ascontiguousarray(p, dtype=np.float64)
    cdef const int64_t[::1] cv = np.ascontiguousarray(caps, dtype=np.int64)
    cdef const double[::1] fv = np.ascontiguousarray(fbars, dtype=np.float64)
    cdef double s = s0, d
    cdef Py_ssize_t i
    for i in range(cv.shape[0]):
        _tail_sum(pv, cv[i], fv[i], s, &s, &d)
    return s


def solve_tail(p, Py_ssize_t r, double fbar, double rtol, int max_iter):
    cdef const double[::1] pv = np.ascontiguousarray(p, dtype=np.float64)
    cdef double g, d, h, dh, s, s_new, lo, hi
    cdef int it = 0
    if fbar <= 0.0:
        _tail_sum(pv, r, 0.0, 0.0, &g, &d)
        return 0.0, 0, g, d
    lo = 0.0
    hi = 1.0
    s = fbar
    with nogil:
        while it < max_iter:
            it += 1
            _tail_sum(pv, r, fbar, s, &g, &d)
            h = g - s
            if h == 0.0:
                break
            if h > 0.0:
                lo = s
            else:
                hi = s
            dh = d - 1.0
            if dh < 0.0:
                s_new = s - h / dh
            else:
                s_new = -1.0
            if not (lo < s_new and s_new < hi):
                s_new = 0.5 * (lo + hi)
            if fabs(s_new - s) <= rtol * s_new or hi - lo <= rtol * hi:
                s = s_new
                break
            s = s_new
        _tail_sum(pv, r, fbar, s, &g, &d)
    return s, it, g - s, d


def local_pair(p, Py_ssize_t r, double fbar, Py_ssize_t n_steps):
    cdef const double[::1] pv = np.ascontiguousarray(p, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] b = np.zeros(n_steps + 1)
    cdef cnp.ndarray[double, ndim=1] delta = np.zeros(n_steps + 1)
    cdef double[::1] bv = b
    cdef double[::1] dv = delta
    cdef double pr = pv[r]
    cdef double bk = 0.0, dk = 0.0, a, dd, g, der
    cdef Py_ssize_t k
    with nogil:
        for k in range(1, n_steps + 1):
            a = bk + dk
            dd = _divdiff(pv, r - 1, a, bk)
            dk = dd * dk + pr * pow(1.0 - bk, <double>r)
            _tail_sum(pv, r, fbar, bk, &g, &der)
            bk = g
            bv[k] = bk
            dv[k] = dk
    return b, delta


# ---------------------------------------------------------------------------
# counter-based random streams

cdef struct Stream:
    uint64_t s0
    uint64_t s1
    uint64_t s2
    uint64_t s3


cdef inline uint64_t _splitmix(uint64_t* x) noexcept nogil:
    x[0] = x[0] + _GOLDEN
    cdef uint64_t z = x[0]
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline uint64_t _rotl(uint64_t x, int k) noexcept nogil:
    return (x << k) | (x >> (64 - k))


cdef inline void _seed(Stream* st, uint64_t seed, uint64_t trial) noexcept nogil:
    cdef uint64_t x = seed ^ (trial * _GOLDEN)
    cdef uint64_t key = _splitmix(&x)
    x = key
    st.s0 = _splitmix(&x)
    st.s1 = _splitmix(&x)
    st.s2 = _splitmix(&x)
    st.s3 = _splitmix(&x)


cdef inline uint64_t _next64(Stream* st) noexcept nogil:
    cdef uint64_t result = _rotl(st.s1 * 5, 7) * 9
    cdef uint64_t t = st.s1 << 17
    st.s2 ^= st.s0
    st.s3 ^= st.s1
    st.s1 ^= st.s2
    st.s0 ^= st.s3
    st.s2 ^= t
    st.s3 = _rotl(st.s3, 45)
    return result


cdef inline double _uniform(Stream* st) noexcept nogil:
    return (_next64(st) >> 11) * _TWO_M53


def uniform_stream(seed, trial, Py_ssize_t n):
    cdef Stream st
    _seed(&st, <uint64_t>(seed & 0xFFFFFFFFFFFFFFFF), <uint64_t>(trial & 0xFFFFFFFFFFFFFFFF))
    out = np.empty(n)
    cdef double[::1] ov = out
    cdef Py_ssize_t i
    for i in range(n):
        ov[i] = _uniform(&st)
    return out


# ---------------------------------------------------------------------------
# offspring sampling and tree simulation

cdef inline int64_t _draw(Stream* st, const double[::1] prob, const int64_t[::1] alias,
                          Py_ssize_t nbins, int64_t kmax, int tail_kind,
                          const double[::1] tp) noexcept nogil:
    cdef double u = _uniform(st)
    cdef Py_ssize_t i = <Py_ssize_t>(u * nbins)
    cdef double v, w, target, pk, x, alpha, x0, acc
    cdef int64_t k
    if i >= nbins:
        i = nbins - 1
    v = _uniform(st)
    if v >= prob[i]:
        i = alias[i]
    if i <= kmax:
        return i
    if tail_kind == C_TAIL_GEOMETRIC:
        w = 1.0 - _uniform(st)
        return kmax + 1 + <int64_t>floor(log(w) / tp[0])
    if tail_kind == C_TAIL_POISSON:
        target = _uniform(st) * tp[1]
        pk = tp[2]
        k = kmax + 1
        while target >= pk and k < kmax + 4000:
            target -= pk
            k += 1
            pk = pk * tp[0] / k
        return k
    if tail_kind == C_TAIL_POWER:
        alpha = tp[0]
        x0 = kmax + 0.5
        while True:
            w = 1.0 - _uniform(st)
            x = x0 * pow(w, -1.0 / (alpha - 1.0))
            if x > 9.0e18:
                continue
            k = <int64_t>floor(x + 0.5)
            acc = (alpha - 1.0) * pow(<double>k, -alpha) / (
                pow(k - 0.5, 1.0 - alpha) - pow(k + 0.5, 1.0 - alpha))
            if _uniform(st) < acc:
                return k
    return kmax


def simulate_block(prob, alias, int64_t kmax, int tail_kind, tail_params,
                   seed, int64_t trial_start, Py_ssize_t n_trials,
                   int64_t max_generations, int64_t max_population,
                   Py_ssize_t horizon, int64_t global_stop, bint need_global,
                   int64_t width_stop, int64_t survive_at=0):
    cdef const double[::1] pv = np.ascontiguousarray(prob, dtype=np.float64)
    cdef const int64_t[::1] av = np.ascontiguousarray(alias, dtype=np.int64)
    cdef const double[::1] tp = np.ascontiguousarray(tail_params, dtype=np.float64)
    cdef Py_ssize_t nbins = pv.shape[0]
    gen_max = np.full((n_trials, horizon + 1), -1, dtype=np.int64)
    gmax_out = np.zeros(n_trials, dtype=np.int64)
    width_out = np.zeros(n_trials, dtype=np.int64)
    status_out = np.zeros(n_trials, dtype=np.int8)
    gens_out = np.zeros(n_trials, dtype=np.int64)
    cdef int64_t[:, ::1] gm = gen_max
    cdef int64_t[::1] gmo = gmax_out
    cdef int64_t[::1] wo = width_out
    cdef int8_t[::1] so = status_out
    cdef int64_t[::1] go = gens_out
    cdef uint64_t useed = <uint64_t>(seed & 0xFFFFFFFFFFFFFFFF)
    cdef Stream st
    cdef Py_ssize_t i
    cdef int64_t z, width, gmax, g, m, nxt, k, j
    cdef int status
    cdef bint done
    with nogil:
        for i in range(n_trials):
            _seed(&st, useed, <uint64_t>(trial_start + i))
            z = 1
            width = 1
            gmax = -1
            g = 0
            status = C_EXTINCT
            while True:
                if z == 0:
                    status = C_EXTINCT
                    break
                if g >= max_generations:
                    status = C_CENSORED
                    break
                m = -1
                nxt = 0
                for j in range(z):
                    k = _draw(&st, pv, av, nbins, kmax, tail_kind, tp)
                    nxt += k
                    if k > m:
                        m = k
                    if nxt > max_population:
                        break
                if g <= horizon:
                    gm[i, g] = m
                if m > gmax:
                    gmax = m
                if nxt > width:
                    width = nxt
                if nxt > max_population:
                    # generation g was only partly drawn
                    z = nxt
                    status = C_CENSORED
                    break
                g += 1
                z = nxt
                if z > 0 and g > horizon:
                    if survive_at > 0 and z >= survive_at:
                        status = C_CENSORED
                        break
                    done = True
                    if need_global and not (global_stop >= 0 and gmax >= global_stop):
                        done = False
                    if width_stop > 0 and width < width_stop:
                        done = False
                    if done:
                        status = C_RESOLVED
                        break
            gmo[i] = gmax
            wo[i] = width
            so[i] = status
            go[i] = g
    return gen_max, gmax_out, width_out, status_out, gens_out
