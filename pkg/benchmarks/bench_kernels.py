"""Compare the compiled and pure-Python path-tracking kernels.

Usage: python benchmarks/bench_kernels.py [--k3-paths N] [--repeat R]

The k=2 case runs the complete solver on both backends. For k=3 the pure
Python kernel is slow, so both backends track the same N start paths of
the 4096-path homotopy (sampled with a stride) and the timings are extrapolated per path.
"""

import argparse
import time

import numpy as np

from orthorot import OrthomaxSpec, build_stationarity_system
from orthorot.homotopy import BACKENDS, SolverOptions, get_kernels, kernel_spec, solve_all, start_points
from orthorot.simulation import paper_matrices


ORDER = [b for b in ("compiled", "python") if b in BACKENDS]


def _best(fn, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def bench_k2(repeat):
    rng = np.random.default_rng(0)
    a = rng.uniform(-1, 1, (8, 2))
    spec = OrthomaxSpec.named("varimax", 8, 2)
    system = build_stationarity_system(a, spec)
    rows = []
    for b in ORDER:
        dt, s = _best(lambda: solve_all(system, 1, SolverOptions(backend=b), spec=spec), repeat)
        rows.append((b, dt, len(s.points)))
    return rows


def bench_k3(n_paths, repeat):
    a = np.array(paper_matrices().A_orthogonal)
    spec = OrthomaxSpec.named("varimax", 9, 3)
    system = build_stationarity_system(a, spec)
    opts = SolverOptions()
    n = system.nvars
    rng = np.random.default_rng(3)
    gamma = np.exp(2j * np.pi * rng.random())
    patch = rng.normal(size=n + 1) + 1j * rng.normal(size=n + 1)
    patch /= np.linalg.norm(patch)
    x = start_points(system.start_degrees)
    x = x[:: max(1, len(x) // n_paths)][:n_paths]
    z = np.concatenate([np.ones((len(x), 1), dtype=complex), x], axis=1)
    z /= (z @ patch)[:, None]
    kspec = kernel_spec(system)
    args = dict(tau_end=opts.tau_end, h_init=opts.h_init, h_max=opts.h_max, h_min=opts.h_min,
                max_steps=opts.max_steps, corr_iters=opts.corr_iters, corr_tol=opts.corr_tol,
                jump_tol=opts.jump_tol, end_iters=opts.end_iters, grow_after=opts.grow_after)
    rows = []
    ends = {}
    for b in ORDER:
        kern = get_kernels(b)
        dt, out = _best(lambda: kern.track_paths(kspec, z, gamma, patch, **args), repeat)
        ends[b] = out[0]
        rows.append((b, dt, dt / len(x) * system.bezout_number))
    # compare finite endpoints only; divergent paths end at rounding-sensitive points
    za, zb = ends[ORDER[0]], ends[ORDER[-1]]
    fin = (np.abs(za[:, 0]) > 1e-2 * np.abs(za).max(axis=1)) & (np.abs(zb[:, 0]) > 1e-2 * np.abs(zb).max(axis=1))
    xa = za[fin, 1:] / za[fin, :1]
    xb = zb[fin, 1:] / zb[fin, :1]
    diff = float(np.max(np.abs(xa - xb), initial=0.0))
    return rows, diff, int(fin.sum())


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--k3-paths", type=int, default=128)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    print(f"backends available: {', '.join(ORDER)}; times relative to {ORDER[0]}")
    print("k=2 full solve (32 paths)")
    base = None
    for b, dt, npts in bench_k2(args.repeat):
        base = base or dt
        print(f"  {b:9s} {dt * 1e3:9.2f} ms  real points {npts:3d}  relative {dt / base:6.2f}x")
    rows, diff, nfin = bench_k3(args.k3_paths, args.repeat)
    print(f"k=3 tracking of {args.k3_paths} of 4096 paths ({nfin} finite, max endpoint difference {diff:.2e})")
    base = None
    for b, dt, full in rows:
        base = base or dt
        print(f"  {b:9s} {dt:9.3f} s   est. full system {full:8.1f} s  relative {dt / base:6.2f}x")


if __name__ == "__main__":
    main()
