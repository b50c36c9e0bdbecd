"""Direct summation (compiled and NumPy) against FFT convolution for the Riesz potential.

    python benchmarks/bench_riesz.py --dim 3 --sizes 8,16,32 --repeats 3

Prints a table and the FFT speedup over each direct backend; ``--csv`` also
writes the rows.  The NumPy direct path is skipped above ``--numpy-max``
nodes per axis because it is quadratic in memory traffic.
"""

from __future__ import annotations

import argparse
import sys

from choquard.bench import BENCH_COLUMNS, available_backends, riesz_bench
from choquard.cli import csv_text


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dim", type=int, default=3)
    ap.add_argument("--mu", type=float, default=1.0)
    ap.add_argument("--sizes", default="8,16,32")
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--numpy-max", type=int, default=16)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--csv", default="")
    args = ap.parse_args(argv)

    sizes = [int(s) for s in args.sizes.split(",")]
    backends = available_backends()
    rows = []
    for size in sizes:
        use = [b for b in backends if b != "python" or size <= args.numpy_max]
        rows += riesz_bench(args.dim, [size], args.mu, args.repeats, args.seed, backends=use)

    print(f"{'size':>5} {'path':>15} {'median ms':>12} {'rel err':>10}")
    for r in rows:
        print(f"{r['size']:>5} {r['path']:>15} {r['wall_ns_median'] / 1e6:>12.3f} {r['max_rel_err_vs_direct']:>10.2e}")
    print()
    for size in sizes:
        at = {r["path"]: r["wall_ns_median"] for r in rows if r["size"] == size}
        for path, ns in sorted(at.items()):
            if path != "fft":
                print(f"{args.dim}D n={size}: fft is {ns / at['fft']:.1f}x faster than {path}")
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write(csv_text(BENCH_COLUMNS, rows))
    return 0


if __name__ == "__main__":
    sys.exit(main())
