"""Compare the numba and numpy kernel implementations.

Run with ``python benchmarks/bench_kernels.py``. Timings are the best of
``--repeat`` runs after one warm-up call (which triggers numba compilation).
"""

import argparse
import timeit

import numpy as np

from aftmc import _kernels
from aftmc.estimator import angle_grid


def cases(M: int):
    rng = np.random.default_rng(0)
    x = rng.standard_normal(M) + 1j * rng.standard_normal(M)
    v = rng.standard_normal(M) + 1j * rng.standard_normal(M)
    t = np.linspace(-0.25, 1.0, 4 * M)
    U, _ = np.linalg.qr(rng.standard_normal((13, 11)) + 1j * rng.standard_normal((13, 11)))
    U = np.ascontiguousarray(U)
    angles = angle_grid(0.1)
    return {
        "chirp_sum": (lambda f: f(x, t, float(M), 0.03, 0.2), _kernels.chirp_sum_numpy, _kernels.chirp_sum_numba),
        "aml_point": (lambda f: f(x, v, 0.013, 0.21), _kernels.aml_point_numpy, _kernels.aml_point_numba),
        "music_scan": (lambda f: f(angles, U, np.pi), _kernels.music_scan_numpy, _kernels.music_scan_numba),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--M", type=int, default=64)
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--number", type=int, default=200)
    args = parser.parse_args()

    print(f"numba available: {_kernels.NUMBA_AVAILABLE}, active backend: {_kernels.backend()}")
    print(f"{'kernel':<12}{'numpy us':>12}{'numba us':>12}{'speedup':>10}")
    for name, (call, f_np, f_nb) in cases(args.M).items():
        call(f_nb)
        assert np.allclose(call(f_np), call(f_nb), rtol=1e-8, atol=1e-10)
        t_np = min(timeit.repeat(lambda: call(f_np), number=args.number, repeat=args.repeat)) / args.number
        t_nb = min(timeit.repeat(lambda: call(f_nb), number=args.number, repeat=args.repeat)) / args.number
        print(f"{name:<12}{t_np * 1e6:>12.1f}{t_nb * 1e6:>12.1f}{t_np / t_nb:>10.2f}")


if __name__ == "__main__":
    main()
