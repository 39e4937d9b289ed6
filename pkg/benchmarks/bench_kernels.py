"""Compare the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]

Prints per-call times for the raycast traversal (on the four-rooms map,
random segments) and the GML objective (full walkable grid, 4 beacons).
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from fpbp import _kernels_py, buildings

try:
    from fpbp import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def raycast_case(n_segments: int, rng: np.random.Generator):
    fmap = buildings.four_rooms_corridor().maps[0]
    mask = np.ascontiguousarray(fmap.blocked_all)
    h, w = mask.shape
    segs = np.column_stack([rng.uniform(0, w, n_segments), rng.uniform(0, h, n_segments),
                            rng.uniform(0, w, n_segments), rng.uniform(0, h, n_segments)])

    def run(mod):
        for u0, v0, u1, v1 in segs:
            mod.raycast_grid(mask, u0, v0, u1, v1)
    return run, n_segments


def gml_case(rng: np.random.Generator):
    b = buildings.four_rooms_corridor()
    cand = np.ascontiguousarray(b.maps[0].grid.points, dtype=float)
    beac = np.ascontiguousarray([bc.position for bc in list(b.registry)[:4]], dtype=float)
    logd = rng.uniform(0.0, 1.2, 4)
    rho = np.full(4, 0.25)

    def run(mod):
        mod.gml_objective(cand, beac, logd, rho, 0.01, 1e-3)
    return run, 1, len(cand)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--segments", type=int, default=2000)
    args = ap.parse_args()
    rng = np.random.Generator(np.random.Philox(0))
    backends = [("python", _kernels_py)] + ([("cython", _ckernels)] if _ckernels else [])

    ray, n_ray = raycast_case(args.segments, rng)
    gml, n_gml, n_cand = gml_case(rng)
    print(f"{'kernel':<30}{'backend':<10}{'per call':>14}")
    results = {}
    for label, fn, n in ((f"raycast ({args.segments} segments)", ray, n_ray),
                         (f"gml_objective ({n_cand} points)", gml, n_gml)):
        for name, mod in backends:
            best = min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat)) / n
            results[(label, name)] = best
            print(f"{label:<30}{name:<10}{best * 1e6:12.2f} us")
        if _ckernels:
            print(f"{'':<30}{'speedup':<10}{results[(label, 'python')] / results[(label, 'cython')]:12.1f} x")
    if _ckernels is None:
        print("compiled extension not available; only the fallback was timed")


if __name__ == "__main__":
    main()
