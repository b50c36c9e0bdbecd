"""Timing harness: direct summation against FFT convolution for the Riesz potential."""

from __future__ import annotations

import statistics
import time

import numpy as np

from . import _core, riesz
from .field import ScalarField, make_box_domain

BENCH_COLUMNS = ("size", "path", "wall_ns_median", "max_rel_err_vs_direct")


def median_ns(fn, repeats: int) -> int:
    fn()  # warm caches and plans
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter_ns()
        fn()
        samples.append(time.perf_counter_ns() - t0)
    return int(statistics.median(samples))


def _paths(domain, mu, f, backends):
    out = {}
    for name in backends:
        label = "direct" if name is None else f"direct-{name}"
        out[label] = lambda b=name: riesz.apply_direct(domain, mu, f, backend=b)
    p = riesz.plan(domain, mu)
    out["fft"] = lambda: riesz.apply(p, f)
    return out


def riesz_bench(dim: int, sizes, mu: float, repeats: int = 5, seed: int = 0, backends=(None,)) -> list[dict]:
    """One row per (size, path); errors are relative to the default direct backend.

    ``backends`` lists direct-summation backends to time (``None`` is the
    default one, other names index ``_core.BACKENDS``).
    """
    rows = []
    for size in sizes:
        size = int(size)
        d = make_box_domain(dim, 1.0, size)
        f = ScalarField.random(d, np.random.default_rng(seed + size))
        ref = riesz.apply_direct(d, mu, f).values
        scale = float(np.abs(ref).max())
        for label, fn in _paths(d, mu, f, backends).items():
            wall = median_ns(fn, repeats)
            err = float(np.abs(fn().values - ref).max()) / scale if scale > 0 else 0.0
            rows.append({"size": size, "path": label, "wall_ns_median": wall, "max_rel_err_vs_direct": err})
    return rows


def available_backends() -> tuple:
    return tuple(sorted(_core.BACKENDS))
