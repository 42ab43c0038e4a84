"""Timing comparison of the numba kernels against their numpy fallbacks.

Run as a script; prints one line per kernel and grid size with the speedup.
The numba path is exercised only when the package was imported with numba
available (MLHS_NUMBA unset or truthy).
"""

import time

import numpy as np

from mlhs import _accel


def bench(fn, args, repeat=20):
    fn(*args)  # warm up (and trigger JIT compilation)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def row(name, np_fn, nb_fn, args):
    t_np = bench(np_fn, args)
    if _accel.NUMBA_ENABLED:
        t_nb = bench(nb_fn, args)
        print(f"{name:<28} numpy {t_np * 1e3:8.3f} ms   numba {t_nb * 1e3:8.3f} ms"
              f"   speedup {t_np / t_nb:5.2f}x")
    else:
        print(f"{name:<28} numpy {t_np * 1e3:8.3f} ms   (numba disabled)")


def main():
    rng = np.random.default_rng(0)
    print(f"numba enabled: {_accel.NUMBA_ENABLED}")
    for n in (64, 128, 256):
        a = rng.standard_normal((n, n))
        row(f"lap_periodic {n}x{n}", _accel.lap_periodic_np,
            _accel.lap_periodic_nb, (a, 0.1))
    for ny in (16, 32, 64):
        nx = 4 * ny
        u = rng.standard_normal((nx + 1, ny))
        v = rng.standard_normal((nx, ny + 1))
        u_in = rng.standard_normal(ny)
        v_in = rng.standard_normal(ny + 1)
        row(f"ns_tentative {nx}x{ny}", _accel.ns_tentative_np,
            _accel.ns_tentative_nb, (u, v, 0.01, 1.0 / ny, 0.01, u_in, v_in))
        p = rng.standard_normal((nx, ny))
        row(f"poisson_apply {nx}x{ny}", _accel.poisson_apply_np,
            _accel.poisson_apply_nb, (p, 1.0 / ny))
    for n in (32, 64):
        f = rng.standard_normal((2, n, n))
        row(f"extract_patches {n}x{n} r=2", _accel.extract_patches_np,
            _accel.extract_patches_nb, (f, 2))


if __name__ == "__main__":
    main()
