"""Benchmark the compiled kernel backend against the numpy reference.

Times each pixel-grid kernel on phantom-sized inputs (128x128 grid), checks
that both backends return identical results, and optionally times one
end-to-end proxy evaluation per backend in a subprocess (backend choice is
fixed at import time, so the end-to-end comparison cannot run in-process).

Usage: python benchmarks/bench_backends.py [--repeats N] [--skip-e2e]
"""
from __future__ import annotations

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from stylesplit.backends import _core, pure
from stylesplit.masks import border_arrays
from stylesplit.simulate import generate_phantom

E2E_SNIPPET = """
import time
from stylesplit.backends import backend_name
from stylesplit.learners import LearnerSpec, fit, pretrain
from stylesplit.metrics import MetricConfig
from stylesplit.objective import BaselineScores, Evaluator
from stylesplit.simulate import StyleSpec, build_cohort

specs = [StyleSpec("erosion", 10, 4), StyleSpec("dilation", 10, 4)]
cohort = build_cohort(0, specs, n_scans=10, pretrain_count=4, slices_per_scan=4)
spec = pretrain(LearnerSpec(), cohort.pretrain_scans(),
                MetricConfig(tolerance_mm=3.6))
scans = cohort.optimize_scans()
ev = Evaluator(spec, scans, BaselineScores({s.id: 1.0 for s in scans}),
               metric_cfg=MetricConfig(tolerance_mm=3.6))
start = time.perf_counter()
ev.proxy(ev.partition((0, 0, 0, 1, 1, 1)))
print(f"{backend_name()}: proxy evaluation {time.perf_counter() - start:.3f}s")
"""


def _inputs():
    scan = generate_phantom(0, 1, 1)[0]
    mask = scan.slices[0].mask.pixels.view(np.uint8)
    rows, cols = border_arrays(mask)
    shifted = np.roll(mask, 3, axis=0)
    rows_b, cols_b = border_arrays(shifted)
    return mask, (rows, cols), (rows_b, cols_b)


def _check_equal(name: str, a, b) -> None:
    a = a if isinstance(a, tuple) else (a,)
    b = b if isinstance(b, tuple) else (b,)
    for x, y in zip(a, b):
        if not np.array_equal(np.asarray(x), np.asarray(y)):
            raise SystemExit(f"backend mismatch in {name}")


def bench_kernels(repeats: int) -> None:
    mask, (rows, cols), (rows_b, cols_b) = _inputs()
    cases = {
        "disk_erode(r=5)": lambda m: m.disk_erode(mask, 5),
        "disk_dilate(r=5)": lambda m: m.disk_dilate(mask, 5),
        "border_points": lambda m: m.border_points(mask),
        "count_within(3.6mm)": lambda m: m.count_within(
            rows, cols, rows_b, cols_b, 0.6, 0.6, 3.6),
        "distance_field": lambda m: m.distance_field(
            rows, cols, mask.shape[0], mask.shape[1], 0.6, 0.6),
    }
    print(f"{'kernel':<22}{'pure':>12}{'compiled':>12}{'speedup':>10}")
    for name, call in cases.items():
        _check_equal(name, call(pure), call(_core))
        t_pure = min(timeit.repeat(lambda: call(pure), number=1, repeat=repeats))
        t_core = min(timeit.repeat(lambda: call(_core), number=1, repeat=repeats))
        print(f"{name:<22}{t_pure * 1e3:>10.2f}ms{t_core * 1e3:>10.2f}ms"
              f"{t_pure / t_core:>9.1f}x")


def bench_end_to_end() -> None:
    print("\nend-to-end proxy evaluation (subprocess per backend):")
    for backend in ("pure", "compiled"):
        env = dict(os.environ, STYLESPLIT_BACKEND=backend)
        out = subprocess.run([sys.executable, "-c", E2E_SNIPPET], env=env,
                             capture_output=True, text=True)
        if out.returncode:
            raise SystemExit(f"{backend} run failed:\n{out.stderr}")
        print("  " + out.stdout.strip())


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5,
                        help="timing repeats per kernel (min is reported)")
    parser.add_argument("--skip-e2e", action="store_true",
                        help="skip the subprocess end-to-end comparison")
    args = parser.parse_args()
    bench_kernels(args.repeats)
    if not args.skip_e2e:
        bench_end_to_end()


if __name__ == "__main__":
    main()
