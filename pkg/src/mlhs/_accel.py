"""Hot stencil kernels with numba-compiled and pure-numpy implementations.

The active path is chosen at import time from the ``MLHS_NUMBA`` environment
variable: "0"/"false"/"off" forces the numpy fallback, anything else uses
numba when it is importable. Both implementations stay importable under
``*_np`` / ``*_nb`` names so the benchmark and the equivalence tests can
compare them directly.
"""

import os

import numpy as np

_flag = os.environ.get("MLHS_NUMBA", "auto").lower()
if _flag in ("0", "false", "off", "no"):
    NUMBA_ENABLED = False
else:
    try:
        from numba import njit

        NUMBA_ENABLED = True
    except ImportError:
        NUMBA_ENABLED = False

if not NUMBA_ENABLED:
    def njit(*args, **kwargs):  # noqa: F811 - identity decorator fallback
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


# ---------------------------------------------------------------------------
# periodic 5-point Laplacian (reaction-diffusion grid)

def lap_periodic_np(a, h):
    return (
        np.roll(a, 1, 0) + np.roll(a, -1, 0) + np.roll(a, 1, 1) + np.roll(a, -1, 1)
        - 4.0 * a
    ) / (h * h)


@njit(cache=True)
def lap_periodic_nb(a, h):
    n0, n1 = a.shape
    out = np.empty_like(a)
    inv_h2 = 1.0 / (h * h)
    for i in range(n0):
        im = i - 1 if i > 0 else n0 - 1
        ip = i + 1 if i < n0 - 1 else 0
        for j in range(n1):
            jm = j - 1 if j > 0 else n1 - 1
            jp = j + 1 if j < n1 - 1 else 0
            out[i, j] = (a[im, j] + a[ip, j] + a[i, jm] + a[i, jp] - 4.0 * a[i, j]) * inv_h2
    return out


# ---------------------------------------------------------------------------
# tentative (advection-diffusion) velocity on the staggered channel grid.
# u: (nx+1, ny) on vertical faces, v: (nx, ny+1) on horizontal faces.
# Boundary conventions: prescribed inflow at x=0, no-slip walls, zero-gradient
# outflow for u and v.

def ns_tentative_np(u, v, nu, h, dt, u_in, v_in):
    nx = v.shape[0]
    ny = u.shape[1]
    inv_h = 1.0 / h
    inv_h2 = inv_h * inv_h

    u_star = np.empty_like(u)
    uc = u[1:nx, :]
    uw = u[0 : nx - 1, :]
    ue = u[2 : nx + 1, :]
    u_pad = np.empty((nx + 1, ny + 2))
    u_pad[:, 1:-1] = u
    u_pad[:, 0] = -u[:, 0]      # wall ghost, no-slip
    u_pad[:, -1] = -u[:, -1]
    us = u_pad[1:nx, 0:ny]
    un = u_pad[1:nx, 2 : ny + 2]
    vbar = 0.25 * (
        v[0 : nx - 1, 0:ny] + v[1:nx, 0:ny] + v[0 : nx - 1, 1 : ny + 1] + v[1:nx, 1 : ny + 1]
    )
    lap_u = (ue + uw + un + us - 4.0 * uc) * inv_h2
    dudx = np.where(uc > 0.0, (uc - uw) * inv_h, (ue - uc) * inv_h)
    dudy = np.where(vbar > 0.0, (uc - us) * inv_h, (un - uc) * inv_h)
    u_star[1:nx, :] = uc + dt * (nu * lap_u - uc * dudx - vbar * dudy)
    u_star[0, :] = u_in
    u_star[nx, :] = u_star[nx - 1, :]

    v_star = np.empty_like(v)
    v_pad = np.empty((nx + 2, ny + 1))
    v_pad[1:-1, :] = v
    v_pad[0, :] = 2.0 * v_in - v[0, :]   # inlet ghost
    v_pad[-1, :] = v[nx - 1, :]          # outlet zero-gradient ghost
    vc = v[:, 1:ny]
    vw = v_pad[0:nx, 1:ny]
    ve = v_pad[2 : nx + 2, 1:ny]
    vs = v[:, 0 : ny - 1]
    vn = v[:, 2 : ny + 1]
    ubar = 0.25 * (
        u[0:nx, 0 : ny - 1] + u[0:nx, 1:ny] + u[1 : nx + 1, 0 : ny - 1] + u[1 : nx + 1, 1:ny]
    )
    lap_v = (ve + vw + vn + vs - 4.0 * vc) * inv_h2
    dvdx = np.where(ubar > 0.0, (vc - vw) * inv_h, (ve - vc) * inv_h)
    dvdy = np.where(vc > 0.0, (vc - vs) * inv_h, (vn - vc) * inv_h)
    v_star[:, 1:ny] = vc + dt * (nu * lap_v - ubar * dvdx - vc * dvdy)
    v_star[:, 0] = 0.0
    v_star[:, ny] = 0.0
    return u_star, v_star


@njit(cache=True)
def ns_tentative_nb(u, v, nu, h, dt, u_in, v_in):
    nx = v.shape[0]
    ny = u.shape[1]
    inv_h = 1.0 / h
    inv_h2 = inv_h * inv_h
    u_star = np.empty_like(u)
    v_star = np.empty_like(v)

    for i in range(1, nx):
        for j in range(ny):
            uc = u[i, j]
            uw = u[i - 1, j]
            ue = u[i + 1, j]
            us = u[i, j - 1] if j > 0 else -u[i, 0]
            un = u[i, j + 1] if j < ny - 1 else -u[i, ny - 1]
            vb = 0.25 * (v[i - 1, j] + v[i, j] + v[i - 1, j + 1] + v[i, j + 1])
            lap = (ue + uw + un + us - 4.0 * uc) * inv_h2
            dudx = (uc - uw) * inv_h if uc > 0.0 else (ue - uc) * inv_h
            dudy = (uc - us) * inv_h if vb > 0.0 else (un - uc) * inv_h
            u_star[i, j] = uc + dt * (nu * lap - uc * dudx - vb * dudy)
    for j in range(ny):
        u_star[0, j] = u_in[j]
        u_star[nx, j] = u_star[nx - 1, j]

    for i in range(nx):
        for j in range(1, ny):
            vc = v[i, j]
            vw = v[i - 1, j] if i > 0 else 2.0 * v_in[j] - v[0, j]
            ve = v[i + 1, j] if i < nx - 1 else v[nx - 1, j]
            vs = v[i, j - 1]
            vn = v[i, j + 1]
            ub = 0.25 * (u[i, j - 1] + u[i, j] + u[i + 1, j - 1] + u[i + 1, j])
            lap = (ve + vw + vn + vs - 4.0 * vc) * inv_h2
            dvdx = (vc - vw) * inv_h if ub > 0.0 else (ve - vc) * inv_h
            dvdy = (vc - vs) * inv_h if vc > 0.0 else (vn - vc) * inv_h
            v_star[i, j] = vc + dt * (nu * lap - ub * dvdx - vc * dvdy)
        v_star[i, 0] = 0.0
        v_star[i, ny] = 0.0
    return u_star, v_star


# ---------------------------------------------------------------------------
# pressure-Poisson operator on cell centers: Neumann ghosts at inlet and
# walls, antisymmetric ghost at the outlet so the face value p = 0 is exact.

def poisson_apply_np(p, h):
    nx, ny = p.shape
    pad = np.empty((nx + 2, ny + 2))
    pad[1:-1, 1:-1] = p
    pad[0, 1:-1] = p[0, :]
    pad[-1, 1:-1] = -p[-1, :]
    pad[1:-1, 0] = p[:, 0]
    pad[1:-1, -1] = p[:, -1]
    return (
        pad[:-2, 1:-1] + pad[2:, 1:-1] + pad[1:-1, :-2] + pad[1:-1, 2:] - 4.0 * p
    ) / (h * h)


@njit(cache=True)
def poisson_apply_nb(p, h):
    nx, ny = p.shape
    out = np.empty_like(p)
    inv_h2 = 1.0 / (h * h)
    for i in range(nx):
        for j in range(ny):
            pc = p[i, j]
            pw = p[i - 1, j] if i > 0 else pc
            pe = p[i + 1, j] if i < nx - 1 else -p[nx - 1, j]
            ps = p[i, j - 1] if j > 0 else pc
            pn = p[i, j + 1] if j < ny - 1 else pc
            out[i, j] = (pw + pe + ps + pn - 4.0 * pc) * inv_h2
    return out


# ---------------------------------------------------------------------------
# periodic patch extraction for the pointwise surrogate: stacks the
# (2r+1)x(2r+1) neighbourhood of every pixel across channels.

def extract_patches_np(fields, radius):
    c, n0, n1 = fields.shape
    k = 2 * radius + 1
    cols = []
    for ch in range(c):
        for di in range(-radius, radius + 1):
            for dj in range(-radius, radius + 1):
                cols.append(np.roll(fields[ch], (-di, -dj), axis=(0, 1)).ravel())
    return np.stack(cols, axis=1)


@njit(cache=True)
def extract_patches_nb(fields, radius):
    c, n0, n1 = fields.shape
    k = 2 * radius + 1
    out = np.empty((n0 * n1, c * k * k))
    for i in range(n0):
        for j in range(n1):
            row = i * n1 + j
            col = 0
            for ch in range(c):
                for di in range(-radius, radius + 1):
                    ii = (i + di) % n0
                    for dj in range(-radius, radius + 1):
                        jj = (j + dj) % n1
                        out[row, col] = fields[ch, ii, jj]
                        col += 1
    return out


if NUMBA_ENABLED:
    lap_periodic = lap_periodic_nb
    ns_tentative = ns_tentative_nb
    poisson_apply = poisson_apply_nb
    extract_patches = extract_patches_nb
else:
    lap_periodic = lap_periodic_np
    ns_tentative = ns_tentative_np
    poisson_apply = poisson_apply_np
    extract_patches = extract_patches_np
