"""Compiled vs pure-Python kernels.

    python benchmarks/bench_kernels.py [--repeat 5] [--trials 20000]

Prints one line per kernel with the best wall time of each backend and the
speedup, after checking that both backends return the same values.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from gwmaxdeg import _kernels_py
from gwmaxdeg.montecarlo import OffspringSampler
from gwmaxdeg.offspring import OffspringSpec, build

try:
    from gwmaxdeg import _kernels as _kernels_c
except ImportError:  # pragma: no cover
    _kernels_c = None


def cases(trials: int):
    geo = build(OffspringSpec.geometric(0.5))
    pow3 = build(OffspringSpec.parse("power:3"))
    r = 400
    p = np.asarray(pow3.pmf_array(r), dtype=float)
    fb = pow3.tail(r)
    pg = np.asarray(geo.pmf_array(60), dtype=float)
    sg = OffspringSampler.for_distribution(build(OffspringSpec.geometric(1 / 3)))
    caps = np.arange(50, 0, -1, dtype=np.int64)
    fbars = np.array([pow3.tail(int(c)) for c in caps])

    return [
        ("trunc_tail r=400", lambda k: k.trunc_tail(p, r, fb, 1e-3)),
        ("trunc_divdiff r=400", lambda k: k.trunc_divdiff(p, r, 2e-3, 1e-3)),
        ("tail_orbit 50 caps", lambda k: k.tail_orbit(p, caps, fbars, 0.0)),
        ("solve_tail r=400", lambda k: k.solve_tail(p, r, fb, 4 * np.finfo(float).eps, 6000)),
        ("local_pair r=60 n=200", lambda k: k.local_pair(pg, 60, geo.tail(60), 200)),
        (f"simulate_block {trials} trees", lambda k: k.simulate_block(
            sg.prob, sg.alias, sg.kmax, sg.tail_kind, sg.tail_params,
            42, 0, trials, 200, 1_000_000, 4, -1, True, 50, 0)),
    ]


def _same(a, b) -> bool:
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    a, b = np.asarray(a), np.asarray(b)
    if a.dtype.kind == "f":
        return np.allclose(a, b, rtol=1e-13, atol=0)
    return np.array_equal(a, b)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--trials", type=int, default=20_000)
    args = ap.parse_args()
    if _kernels_c is None:
        raise SystemExit("compiled extension not built; run pip install --no-build-isolation -e .")
    print(f"{'kernel':<28}{'cython [s]':>12}{'python [s]':>12}{'speedup':>10}  agree")
    for name, fn in cases(args.trials):
        agree = _same(fn(_kernels_c), fn(_kernels_py))
        tc = min(timeit.repeat(lambda: fn(_kernels_c), number=1, repeat=args.repeat))
        tp = min(timeit.repeat(lambda: fn(_kernels_py), number=1, repeat=max(1, args.repeat // 2)))
        print(f"{name:<28}{tc:>12.3g}{tp:>12.3g}{tp / tc:>10.0f}  {agree}")


if __name__ == "__main__":
    main()
