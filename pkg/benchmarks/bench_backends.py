"""Time the numba kernels against their pure-numpy fallbacks.

    python benchmarks/bench_backends.py [--items 40] [--n 8] [--repeat 3]

Each case is run once untimed (JIT compilation and cache load) and then
``--repeat`` times; the best wall time is reported. Results are checked for
agreement before timing.
"""

import argparse
import time

import numpy as np

from mkpls import _accel
from mkpls.features import LbpConfig, extract_frame_features
from mkpls.kernels import KernelSpec, gram_matrix


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def gram_case(kind, params, threads):
    def run(flag):
        _accel.USE_NUMBA = flag
        return gram_matrix(params, KernelSpec(kind), threads=threads).K

    return run


def lbp_case(frames, config):
    def run(flag):
        return [extract_frame_features(f, config, use_numba=flag) for f in frames]

    return run


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--items", type=int, default=40, help="parameterizations per Gram matrix")
    ap.add_argument("--dim", type=int, default=59, help="feature dimension D")
    ap.add_argument("--n", type=int, default=8, help="basis count (curve length)")
    ap.add_argument("--frames", type=int, default=20, help="frames for the LBP case")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if not _accel.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")

    rng = np.random.default_rng(0)
    params = list(rng.normal(size=(args.items, args.dim, args.n)))
    frames = list(rng.integers(0, 256, size=(args.frames, 60, 80)).astype(float))
    cases = {
        f"Frechet Gram N={args.items}": gram_case("Frechet", params, args.threads),
        f"EditDist Gram N={args.items}": gram_case("EditDist", params, args.threads),
        f"LBP r=1..4 2x5 grid x{args.frames}": lbp_case(frames, LbpConfig(radii=(1, 2, 3, 4), grid_rows=2, grid_cols=5)),
    }
    saved = _accel.USE_NUMBA
    print(f"{'case':34s} {'numpy [s]':>10s} {'numba [s]':>10s} {'speedup':>8s}")
    try:
        for name, run in cases.items():
            np.testing.assert_allclose(np.asarray(run(False)), np.asarray(run(True)), rtol=1e-12)
            t_np = best_of(lambda: run(False), args.repeat)
            t_nb = best_of(lambda: run(True), args.repeat)
            print(f"{name:34s} {t_np:10.4f} {t_nb:10.4f} {t_np / t_nb:7.1f}x")
    finally:
        _accel.USE_NUMBA = saved


if __name__ == "__main__":
    main()
