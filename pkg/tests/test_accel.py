"""The numba kernels and their numpy fallbacks must agree bit-for-bit in
structure (same stencils), so they are compared on random inputs."""

import numpy as np
import pytest

from mlhs import _accel


def test_lap_periodic_paths_agree():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((16, 16))
    assert np.allclose(_accel.lap_periodic_np(a, 0.1),
                       _accel.lap_periodic_nb(a, 0.1), atol=1e-12)


def test_ns_tentative_paths_agree():
    rng = np.random.default_rng(1)
    nx, ny = 16, 4
    u = rng.standard_normal((nx + 1, ny))
    v = rng.standard_normal((nx, ny + 1))
    u_in = rng.standard_normal(ny)
    v_in = rng.standard_normal(ny + 1)
    a = _accel.ns_tentative_np(u, v, 0.01, 0.25, 0.01, u_in, v_in)
    b = _accel.ns_tentative_nb(u, v, 0.01, 0.25, 0.01, u_in, v_in)
    assert np.allclose(a[0], b[0], atol=1e-12)
    assert np.allclose(a[1], b[1], atol=1e-12)


def test_poisson_apply_paths_agree():
    rng = np.random.default_rng(2)
    p = rng.standard_normal((12, 6))
    assert np.allclose(_accel.poisson_apply_np(p, 0.2),
                       _accel.poisson_apply_nb(p, 0.2), atol=1e-12)


def test_poisson_operator_symmetric_negative():
    """The (negated) Poisson operator used by CG must be SPD."""
    rng = np.random.default_rng(3)
    nx, ny = 6, 3
    n = nx * ny
    A = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        A[:, j] = -_accel.poisson_apply_np(e.reshape(nx, ny), 0.5).ravel()
    assert np.allclose(A, A.T, atol=1e-12)
    w = np.linalg.eigvalsh(A)
    assert w.min() > 0.0


@pytest.mark.parametrize("radius", [1, 2])
def test_extract_patches_paths_agree(radius):
    rng = np.random.default_rng(4)
    f = rng.standard_normal((2, 8, 8))
    a = _accel.extract_patches_np(f, radius)
    b = _accel.extract_patches_nb(f, radius)
    assert np.array_equal(a, b)
    k = 2 * radius + 1
    assert a.shape == (64, 2 * k * k)
    # center column of the first channel is the pixel itself
    center = radius * k + radius
    assert np.array_equal(a[:, center], f[0].ravel())


def test_env_flag_selects_path():
    import importlib
    import os
    import subprocess
    import sys

    code = ("import mlhs._accel as a; "
            "print(a.NUMBA_ENABLED, a.lap_periodic is a.lap_periodic_np)")
    env = dict(os.environ, MLHS_NUMBA="0")
    out = subprocess.run([sys.executable, "-c", code], env=env,
                         capture_output=True, text=True).stdout.split()
    assert out == ["False", "True"]
