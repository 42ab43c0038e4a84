"""Incompressible channel flow by the projection method on a staggered grid.

Domain [0, 4] x [0, 1] with square cells h = 1/ny (nx = 4 ny). Layout:
u (nx+1, ny) on vertical faces, v (nx, ny+1) on horizontal faces, p (nx, ny)
at cell centers. Boundaries: prescribed jet inflow at x = 0
(u = exp(-50 (y-y0)^2), v = sin(t) exp(-50 (y-y0)^2)), no-slip walls,
zero-gradient outflow for u and v with p = 0 on the outlet face.

Each step computes a tentative advection-diffusion velocity (first-order
upwind advection), solves the pressure Poisson equation lap p = div(u*)/dt
by matrix-free conjugate gradient, and corrects the velocity; the corrected
field is discretely divergence free up to the solver residual.
"""

from dataclasses import dataclass, replace

import numpy as np

from ._accel import ns_tentative, poisson_apply
from .datasets import TrajectoryDataset
from .errors import BlowUpError
from .linalg import cg_solve
from .seeding import rng_from

POISSON_TOL = 1e-8


@dataclass
class NSParams:
    nu: float = 0.01     # 1/Re
    ny: int = 16
    dt: float = 0.01
    jet_y0: float = 0.5

    def __post_init__(self):
        if self.nu <= 0 or self.ny < 2 or self.dt <= 0:
            raise ValueError("invalid channel-flow parameters")
        if not 0.0 <= self.jet_y0 <= 1.0:
            raise ValueError("jet_y0 must lie in [0, 1]")

    @property
    def nx(self):
        return 4 * self.ny

    @property
    def h(self):
        return 1.0 / self.ny


def inflow_profiles(p, t):
    """(u, v) inflow values at x = 0: u at face-row centers, v at face corners."""
    y_u = (np.arange(p.ny) + 0.5) * p.h
    y_v = np.arange(p.ny + 1) * p.h
    shape = np.exp(-50.0 * (y_u - p.jet_y0) ** 2)
    shape_v = np.exp(-50.0 * (y_v - p.jet_y0) ** 2)
    return shape, np.sin(t) * shape_v


def divergence(u, v, h):
    return (u[1:, :] - u[:-1, :]) / h + (v[:, 1:] - v[:, :-1]) / h


def face_gradient(q, h):
    """Pressure-type gradient from centers to faces, with the boundary
    conventions of the projection step: zero at the inlet and walls,
    antisymmetric ghost (face value 0) at the outlet."""
    nx, ny = q.shape
    gu = np.zeros((nx + 1, ny))
    gu[1:nx, :] = (q[1:, :] - q[:-1, :]) / h
    gu[nx, :] = -2.0 * q[nx - 1, :] / h
    gv = np.zeros((nx, ny + 1))
    gv[:, 1:ny] = (q[:, 1:] - q[:, :-1]) / h
    return gu, gv


def ns_step_projection(u, v, p_prev, params, t=0.0):
    """One projection step at time t; returns (u, v, p) at t + dt."""
    h = params.h
    u_in, v_in = inflow_profiles(params, t)
    u_star, v_star = ns_tentative(u, v, params.nu, h, params.dt, u_in, v_in)
    if not (np.all(np.isfinite(u_star)) and np.all(np.isfinite(v_star))):
        raise BlowUpError(0)
    div = divergence(u_star, v_star, h)
    # solve for phi = dt*p from -lap phi = -div with an absolute residual
    # tolerance, so the post-correction divergence equals the residual.
    phi0 = None if p_prev is None else params.dt * p_prev
    phi, _ = cg_solve(lambda q: -poisson_apply(q, h), -div, POISSON_TOL,
                      maxiter=200 * div.size, x0=phi0)
    gu, gv = face_gradient(phi, h)
    u_new = u_star - gu
    v_new = v_star - gv
    if not (np.all(np.isfinite(u_new)) and np.all(np.isfinite(v_new))):
        raise BlowUpError(0)
    return u_new, v_new, phi / params.dt


def center_velocities(u, v):
    """Linear interpolation of face velocities to cell centers, (2, nx, ny)."""
    return np.stack([0.5 * (u[:-1, :] + u[1:, :]), 0.5 * (v[:, :-1] + v[:, 1:])])


def press_to_center_tendency(q, h):
    """Linear map from a pressure field to its centered velocity tendency,
    -center(face_gradient(q)). This is the label-dependent part of the
    resolved tendency in the centered formulation."""
    gu, gv = face_gradient(q, h)
    return -center_velocities(gu, gv)


def press_to_center_tendency_adjoint(g, h):
    """Adjoint of press_to_center_tendency for a centered field pair (2, nx, ny)."""
    a, b = g[0], g[1]
    nx, ny = a.shape
    # adjoint of centering: each face gets half of its adjacent centers
    fu = np.zeros((nx + 1, ny))
    fu[0, :] = 0.5 * a[0, :]
    fu[1:nx, :] = 0.5 * (a[: nx - 1, :] + a[1:, :])
    fu[nx, :] = 0.5 * a[nx - 1, :]
    fv = np.zeros((nx, ny + 1))
    fv[:, 0] = 0.5 * b[:, 0]
    fv[:, 1:ny] = 0.5 * (b[:, : ny - 1] + b[:, 1:])
    fv[:, ny] = 0.5 * b[:, ny - 1]
    # adjoint of the face gradient
    q = np.zeros((nx, ny))
    q[1:, :] += fu[1:nx, :] / h
    q[: nx - 1, :] -= fu[1:nx, :] / h
    q[nx - 1, :] -= 2.0 * fu[nx, :] / h
    q[:, 1:] += fv[:, 1:ny] / h
    q[:, : ny - 1] -= fv[:, 1:ny] / h
    return -q


def stable_dt(params, u=None, v=None):
    """0.25 * min(h / |u|_max, h^2 / (4 nu)); |u|_max defaults to the unit jet peak."""
    umax = 1.0
    if u is not None:
        umax = max(umax, float(np.max(np.abs(u))), float(np.max(np.abs(v))))
    return 0.25 * min(params.h / umax, params.h**2 / (4.0 * params.nu))


def make_ns_dataset(params, n_traj, n_steps, n_discard=100, seed=0, jet_lo=0.3,
                    jet_hi=0.7, dt_scale=1.0):
    """Channel-flow dataset of (centered velocities, pressure, resolved drift).

    The jet location is drawn uniformly in [jet_lo, jet_hi] per trajectory and
    dt is recomputed as dt_scale times the stability estimate at each
    trajectory start, then frozen. The drift stored with each tuple is the centered tendency of the
    tentative step, so the full centered tendency is drift plus the pressure
    term press_to_center_tendency(p).
    """
    if not 0 <= n_discard < n_steps:
        raise ValueError("need 0 <= n_discard < n_steps")
    per_traj = n_steps - n_discard
    nx, ny = params.nx, params.ny
    d = nx * ny
    states = np.empty((n_traj * per_traj, 2 * d))
    labels = np.empty((n_traj * per_traj, d))
    drifts = np.empty((n_traj * per_traj, 2 * d))
    dt_used = None
    row = 0
    for i in range(n_traj):
        rng = rng_from(seed, i)
        y0 = jet_lo + (jet_hi - jet_lo) * rng.random()
        tp = replace(params, jet_y0=y0)
        tp = replace(tp, dt=dt_scale * stable_dt(tp))
        if dt_used is None:
            dt_used = tp.dt
        u = np.zeros((nx + 1, ny))
        v = np.zeros((nx, ny + 1))
        p = None
        for k in range(n_steps):
            t = k * tp.dt
            try:
                if k >= n_discard:
                    u_in, v_in = inflow_profiles(tp, t)
                    u_star, v_star = ns_tentative(u, v, tp.nu, tp.h, tp.dt, u_in, v_in)
                    cen = center_velocities(u, v)
                    cen_star = center_velocities(u_star, v_star)
                    u, v, p = ns_step_projection(u, v, p, tp, t)
                    states[row] = cen.ravel()
                    labels[row] = p.ravel()
                    drifts[row] = ((cen_star - cen) / tp.dt).ravel()
                    row += 1
                else:
                    u, v, p = ns_step_projection(u, v, p, tp, t)
            except BlowUpError as exc:
                exc.last_finite_step = k
                raise BlowUpError(k) from exc
    return TrajectoryDataset(
        kind="ns", states=states, labels=labels, dt=dt_used,
        nx=nx, ny=ny, traj_len=per_traj, start_step=n_discard, drifts=drifts,
    )
