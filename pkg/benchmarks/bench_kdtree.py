"""Compare k-th neighbor backends: compiled kd-tree, pure-Python kd-tree, brute force.

Times the all-points leave-one-out query used by the estimator (build + query),
checks that every backend returns identical distances, and prints a table.

    python3 benchmarks/bench_kdtree.py [--sizes 316,1000,3162] [--dims 1,2,3] [--k 3]
"""

import argparse
import time

import numpy as np

from knnkl.spatial import BACKENDS, brute_force_kth_distances, build_index


def best_of(fn, repeat):
    times, out = [], None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="316,1000,3162")
    ap.add_argument("--dims", default="1,2,3")
    ap.add_argument("--k", type=int, default=3)
    ap.add_argument("--norm", choices=["l2", "linf"], default="l2")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--brute-max", type=int, default=4000,
                    help="skip brute force above this size")
    args = ap.parse_args(argv)

    backends = sorted(BACKENDS)
    cols = backends + ["brute"]
    print(f"k={args.k} norm={args.norm}; seconds for build + leave-one-out query of all points")
    print(f"{'d':>3}{'n':>8}" + "".join(f"{c:>12}" for c in cols) + f"{'speedup':>10}")
    rng = np.random.default_rng(0)
    for d in (int(v) for v in args.dims.split(",")):
        for n in (int(v) for v in args.sizes.split(",")):
            pts = rng.normal(size=(n, d))
            row, ref = {}, None
            for b in backends:
                row[b], got = best_of(
                    lambda: build_index(pts, args.norm, backend=b).self_kth_distances(args.k),
                    args.repeat)
                assert ref is None or np.array_equal(got, ref), f"{b} disagrees"
                ref = got
            if n <= args.brute_max:
                row["brute"], got = best_of(
                    lambda: brute_force_kth_distances(pts, pts, args.k, args.norm, True), 1)
                assert np.array_equal(got, ref), "brute force disagrees"
            cells = "".join(f"{row[c]:>12.4f}" if c in row else f"{'-':>12}" for c in cols)
            speed = (f"{row['python'] / row['compiled']:>9.1f}x" if "compiled" in row
                     else f"{'-':>10}")
            print(f"{d:>3}{n:>8}{cells}{speed}")


if __name__ == "__main__":
    main()
