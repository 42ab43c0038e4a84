"""FitzHugh-Nagumo reaction-diffusion solver on a periodic square grid.

Semi-implicit Crank-Nicolson: the diffusion term is treated with the
trapezoidal rule and the nonlinear reaction fully explicitly,

    (I - (dt/2) D_i lap) w^{k+1} = (I + (dt/2) D_i lap) w^k + dt phi_i(u^k, v^k)

per component with diffusion coefficients gamma and 2*gamma. The implicit
operator I - coef*lap is diagonal in the discrete Fourier basis on the
periodic grid, so the solve is done exactly by FFT. Also provides the 2x2
block-average restriction / piecewise-constant interpolation pair and
correction-label dataset generation.
"""

from dataclasses import dataclass

import numpy as np

from ._accel import lap_periodic
from .datasets import TrajectoryDataset
from .seeding import rng_from


@dataclass
class RDParams:
    n: int = 64           # grid points per side
    alpha: float = 0.01
    beta: float = 1.0
    gamma: float = 0.05   # D = diag(gamma, 2*gamma)
    dt: float = 0.01
    domain: float = 6.4

    def __post_init__(self):
        if self.n < 2 or self.dt <= 0 or self.gamma <= 0 or self.domain <= 0:
            raise ValueError("invalid reaction-diffusion parameters")

    @property
    def h(self):
        return self.domain / self.n


def rd_reaction(u, v, p):
    """phi(u, v) = (u - u^3 - v + alpha, beta (u - v))."""
    return u - u**3 - v + p.alpha, p.beta * (u - v)


def _cn_solve(rhs, coef, h):
    # (I - coef*lap) x = rhs. The periodic 5-point Laplacian has Fourier
    # eigenvalues (2 cos(2 pi j / n) + 2 cos(2 pi k / n) - 4) / h^2, so the
    # operator is diagonalized by the DFT and the solve is a pointwise
    # division in frequency space. The zero mode has symbol 1, which keeps
    # the field mean exact.
    n0, n1 = rhs.shape
    lx = (2.0 * np.cos(2.0 * np.pi * np.arange(n0) / n0) - 2.0) / (h * h)
    ly = (2.0 * np.cos(2.0 * np.pi * np.arange(n1 // 2 + 1) / n1) - 2.0) / (h * h)
    sym = 1.0 - coef * (lx[:, None] + ly[None, :])
    return np.fft.irfft2(np.fft.rfft2(rhs) / sym, s=rhs.shape)


def rd_step_cn(u, v, p, reaction=rd_reaction):
    """One semi-implicit Crank-Nicolson step; ``reaction`` is swappable for tests."""
    h = p.h
    ru, rv = reaction(u, v, p)
    cu = 0.5 * p.dt * p.gamma
    cv = 0.5 * p.dt * (2.0 * p.gamma)
    rhs_u = u + cu * lap_periodic(u, h) + p.dt * ru
    rhs_v = v + cv * lap_periodic(v, h) + p.dt * rv
    return _cn_solve(rhs_u, cu, h), _cn_solve(rhs_v, cv, h)


def restrict(fine):
    """Coarse cell = mean of its 2x2 fine block."""
    fine = np.asarray(fine)
    if fine.shape[-1] % 2 or fine.shape[-2] % 2:
        raise ValueError("restrict requires even grid dimensions")
    return 0.25 * (fine[..., 0::2, 0::2] + fine[..., 1::2, 0::2]
                   + fine[..., 0::2, 1::2] + fine[..., 1::2, 1::2])


def interpolate(coarse):
    """Piecewise-constant replication into 2x2 fine blocks."""
    coarse = np.asarray(coarse)
    return np.repeat(np.repeat(coarse, 2, axis=-2), 2, axis=-1)


def rd_resolved_step(state, p_coarse):
    """Resolved one-step map on the fine grid: interpolate(f_n(restrict(u))).

    ``state`` is (2, 2n, 2n); the coarse solver runs at n and the result is
    replicated back to the fine grid.
    """
    uc, vc = restrict(state[0]), restrict(state[1])
    un, vn = rd_step_cn(uc, vc, p_coarse)
    return np.stack([interpolate(un), interpolate(vn)])


def make_rd_dataset(p_coarse, p_fine, n_traj, n_steps, n_discard=200, seed=0):
    """Fine-grid trajectories with coarse-solver correction labels.

    Each trajectory starts from i.i.d. N(0,1) fields on the fine grid and
    runs the fine solver for n_steps steps; tuples are collected for
    k = n_discard .. n_steps-1 with label
    y_k = u_{k+1} - interpolate(f_n(restrict(u_k))), so the fine next state
    is reconstructed exactly as resolved step + label.
    """
    if p_fine.n != 2 * p_coarse.n:
        raise ValueError("fine grid must be exactly double the coarse grid")
    if p_fine.dt != p_coarse.dt:
        raise ValueError("coarse and fine solvers must share dt")
    if not 0 <= n_discard < n_steps:
        raise ValueError("need 0 <= n_discard < n_steps")
    nf = p_fine.n
    per_traj = n_steps - n_discard
    states = np.empty((n_traj * per_traj, 2 * nf * nf))
    labels = np.empty_like(states)
    row = 0
    for i in range(n_traj):
        rng = rng_from(seed, i)
        u = rng.standard_normal((nf, nf))
        v = rng.standard_normal((nf, nf))
        for k in range(n_steps):
            if k >= n_discard:
                state = np.stack([u, v])
                un, vn = rd_step_cn(u, v, p_fine)
                resolved = rd_resolved_step(state, p_coarse)
                label = np.stack([un, vn]) - resolved
                states[row] = state.ravel()
                labels[row] = label.ravel()
                row += 1
                # continue from resolved + label (one ulp from the fine next
                # state) so resolved step + label rebuilds the stored
                # trajectory bitwise
                nxt = resolved + label
                u, v = nxt[0], nxt[1]
            else:
                u, v = rd_step_cn(u, v, p_fine)
    return TrajectoryDataset(
        kind="rd", states=states, labels=labels, dt=p_fine.dt,
        nx=nf, ny=nf, traj_len=per_traj, start_step=n_discard,
    )
