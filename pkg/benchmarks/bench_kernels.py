"""Timing comparison of the compiled hot kernels against the numpy
fallback.

Two questions are answered here:

1. Where is the crossover between the direct spatial correlation kernel and
   the FFT path? The dispatch constant DIRECT_MAC_LIMIT in splt.kernels is
   the measured answer (placements x template pixels), with margin.
2. How much does the compiled crop+resize kernel buy over the vectorized
   numpy twin, and do the two backends really agree bit for bit?

Run:  python3 benchmarks/bench_kernels.py [--repeats N] [--region SIDE]
"""

import argparse
import time

import numpy as np

from splt import kernels
from splt import _kernels_np


def best_of(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def fmt_us(seconds: float) -> str:
    return "%10.1f" % (seconds * 1e6)


def bench_ncc(region_side: int, repeats: int) -> None:
    rng = np.random.default_rng(0)
    region = rng.standard_normal((region_side, region_side))
    print(f"\ncorrelation on a {region_side}x{region_side} region "
          f"(best of {repeats}, microseconds)")
    header = f"{'template':>9} {'MACs':>12} {'dispatch':>9}"
    if kernels.HAVE_EXT:
        header += f" {'direct':>10}"
    header += f" {'fft':>10} {'max|diff|':>10}"
    print(header)
    for t_side in (8, 16, 24, 32, 48, 64, 96, 127):
        if t_side > region_side:
            continue
        template = rng.standard_normal((t_side, t_side))
        macs = kernels._direct_cost(region.shape, template.shape)
        chosen = ("direct" if kernels.USE_EXT and macs <= kernels.DIRECT_MAC_LIMIT
                  else "fft")
        fft_time = best_of(lambda: _kernels_np.ncc_fft(region, template),
                           repeats)
        row = f"{t_side:>9} {macs:>12} {chosen:>9}"
        fft_map = _kernels_np.ncc_fft(region, template)
        if kernels.HAVE_EXT:
            from splt import _kernels as _ext
            direct_time = best_of(
                lambda: _ext.ncc_direct(region, template), repeats)
            direct_map = _ext.ncc_direct(region, template)
            diff = float(np.max(np.abs(direct_map - fft_map)))
            row += f" {fmt_us(direct_time)}"
        else:
            diff = 0.0
        row += f" {fmt_us(fft_time)} {diff:>10.2e}"
        print(row)
    print(f"dispatch threshold DIRECT_MAC_LIMIT = {kernels.DIRECT_MAC_LIMIT}")


def bench_resize(repeats: int) -> None:
    rng = np.random.default_rng(1)
    cases = [
        # (source side, crop box, output side)
        (64, (3.5, 2.25, 40.0, 40.0), 127),
        (240, (10.0, 20.0, 128.0, 128.0), 300),
        (480, (0.0, 0.0, 480.0, 480.0), 300),
    ]
    print(f"\ncrop+resize (best of {repeats}, microseconds)")
    header = f"{'case':>24}"
    if kernels.HAVE_EXT:
        header += f" {'cython':>10}"
    header += f" {'numpy':>10} {'identical':>10}"
    print(header)
    for src_side, (x0, y0, bw, bh), out_side in cases:
        src = rng.standard_normal((src_side, src_side))
        np_time = best_of(
            lambda: _kernels_np.bilinear_resize(src, x0, y0, bw, bh,
                                                out_side, out_side), repeats)
        label = f"{src_side}px crop->{out_side}px"
        row = f"{label:>24}"
        np_out = _kernels_np.bilinear_resize(src, x0, y0, bw, bh,
                                             out_side, out_side)
        if kernels.HAVE_EXT:
            from splt import _kernels as _ext
            ext_time = best_of(
                lambda: _ext.bilinear_resize(src, x0, y0, bw, bh,
                                             out_side, out_side), repeats)
            ext_out = _ext.bilinear_resize(src, x0, y0, bw, bh,
                                           out_side, out_side)
            same = bool(np.array_equal(ext_out, np_out))
            row += f" {fmt_us(ext_time)}"
        else:
            same = True
        row += f" {fmt_us(np_time)} {str(same):>10}"
        print(row)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=7)
    ap.add_argument("--region", type=int, default=300)
    args = ap.parse_args()
    print(f"active backend: {kernels.BACKEND} (extension "
          f"{'available' if kernels.HAVE_EXT else 'NOT built'})")
    # The small region shows the regime where the direct kernel wins (the
    # coarse skim correlations live here); the large one is the local-search
    # regime where the FFT path takes over.
    bench_ncc(96, args.repeats)
    bench_ncc(args.region, args.repeats)
    bench_resize(args.repeats)


if __name__ == "__main__":
    main()
