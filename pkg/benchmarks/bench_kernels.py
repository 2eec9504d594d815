"""Time the compiled kernels against their pure-Python twins.

    python3 benchmarks/bench_kernels.py [--repeat 3] [--hulls 4]

Each kernel runs on inputs taken from real feasible hulls.  The table lists
the best wall time per backend, the speed-up, and the largest difference
between the two outputs (zero for the geometric kernels, rounding level for
the Michell transforms).
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from shipgen import _accel
from shipgen.dataset import generate
from shipgen.geometry.maxbox import maxbox
from shipgen.geometry.mesh import candidate_pairs, gen_mesh, triangle_areas
from shipgen.hydro import drag_grid


def best_of(fn, repeat):
    best, out = np.inf, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def cases(designs):
    meshes = [gen_mesh(v, check=False) for v in designs]
    tri = []
    for m in meshes:
        v = np.ascontiguousarray(m.vertices, dtype=np.float64)
        p = candidate_pairs(v, m.faces)
        ok = triangle_areas(v, m.faces) > 0.0
        tri.append((v, np.ascontiguousarray(m.faces, dtype=np.int64), p[ok[p[:, 0]] & ok[p[:, 1]]]))
    pool = np.random.default_rng(0).standard_normal((4000, 44))

    def tri_tri(b):
        return np.concatenate([_accel.tri_tri_intersect(*t, backend=b) for t in tri])

    def box(b):
        return np.array([maxbox(v, seed=1, backend=b).volume for v in designs])

    def drag(b):
        return np.concatenate([drag_grid(v, backend=b).cw.ravel() for v in designs])

    def nearest(b):
        return _accel.nearest_indices(pool[:1000], pool, exclude=np.arange(1000), backend=b)[1]

    return {"mesh self-intersection": tri_tri, "maxbox search": box,
            "michell drag grid": drag, "nearest neighbour": nearest}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--hulls", type=int, default=4)
    a = ap.parse_args(argv)
    if not _accel.COMPILED:
        raise SystemExit("compiled kernels not built; run `python3 setup.py build_ext --inplace`")
    designs = generate(a.hulls, 1, seed=11).feasible_designs
    print(f"{'kernel':<24}{'compiled s':>12}{'python s':>12}{'speed-up':>10}{'max |diff|':>12}")
    for name, fn in cases(designs).items():
        tc, oc = best_of(lambda: fn("compiled"), a.repeat)
        tp, op = best_of(lambda: fn("python"), a.repeat)
        diff = float(np.max(np.abs(np.asarray(oc, dtype=float) - np.asarray(op, dtype=float))))
        print(f"{name:<24}{tc:>12.4f}{tp:>12.4f}{tp / tc:>9.1f}x{diff:>12.2e}")


if __name__ == "__main__":
    main()
