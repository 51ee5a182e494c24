"""Landscape kernel timing: numba vs the pure-numpy fallback.

    python benchmarks/bench_landscape.py --cameras 4 --repeat 3

Both backends are called in-process through ``evaluate_landscape(backend=...)``,
so the env flag is not needed here. The first numba call (compile or cache
load) is timed separately.
"""

import argparse
import time

import numpy as np

from episync.pairwise import default_grid, evaluate_landscape
from episync.synth import ScenarioSpec, generate


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--cameras", type=int, default=4)
    ap.add_argument("--points", type=int, default=15)
    ap.add_argument("--fps", type=float, default=30.0)
    ap.add_argument("--duration", type=float, default=10.0)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    b = generate(ScenarioSpec(seed=args.seed, n_cameras=args.cameras, n_points=args.points,
                              fps=args.fps, duration=args.duration))
    groups = list(b.correspondences.groups.items())
    grids = {k: default_grid(b.cameras[k[0]], b.cameras[k[1]]).points() for k, _ in groups}
    n_cells = sum(len(g) for g in grids.values())
    print(f"{len(groups)} video pairs, {len(b.correspondences)} tracklet pairs, "
          f"{n_cells} grid cells")

    def run(backend):
        return [evaluate_landscape(g, b.cameras, b.tracklets, grids[k], backend=backend)
                for k, g in groups]

    t0 = time.perf_counter()
    run("numba")
    first = time.perf_counter() - t0

    rows = []
    for backend in ("numba", "numpy"):
        t, out = best_of(lambda: run(backend), args.repeat)
        rows.append((backend, t, out))

    (_, t_nb, out_nb), (_, t_np, out_np) = rows
    same_counts = all(np.array_equal(a[1], c[1]) for a, c in zip(out_nb, out_np))
    rel = max(float(np.max(np.abs(a[0] - c[0]) / np.maximum(np.abs(c[0]), 1e-300)))
              for a, c in zip(out_nb, out_np))

    print(f"{'backend':<8}{'best s':>10}{'cells/s':>14}")
    for name, t, _ in rows:
        print(f"{name:<8}{t:>10.3f}{n_cells / t:>14.0f}")
    print(f"numba first call (compile or cache load): {first:.2f} s")
    print(f"speedup {t_np / t_nb:.1f}x; counts equal: {same_counts}; max rel diff of sums {rel:.1e}")


if __name__ == "__main__":
    main()
