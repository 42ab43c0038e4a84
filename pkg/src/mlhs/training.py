"""Surrogate training: the OLS / mOLS / aOLS objectives and the
tangent-space regularized loss

    l(theta) = mean_k ||y_k - phi(u_k)||^2
               + lambda * (grad F(u_k) . L(u_k, phi(u_k), t_k))^2

with a frozen distribution-shift indicator F. The resolved tendency L is
affine in the label for every supported kind, so the penalty and its exact
gradient reduce to per-sample algebra once the label-independent drift part
is precomputed.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from ._accel import extract_patches
from .errors import ConfigError
from .manifold import ds_gradient
from .nn import (AdamState, Mlp, PlateauSchedule, adam_step, backward,
                 forward, forward_cached, init_mlp, weight_decay_grads)
from .ns import (center_velocities, face_gradient, inflow_profiles,
                 ns_step_projection, press_to_center_tendency,
                 press_to_center_tendency_adjoint)
from .rd import rd_resolved_step
from .seeding import rng_from

OBJECTIVES = ("OLS", "mOLS", "aOLS", "TR")
DEFAULT_LAMBDA = 10.0


@dataclass
class ResolvedModel:
    """The known resolved dynamics L(u, y, t) for one of three kinds.

    kind "linear": du/dt = A u + B y on a flat state.
    kind "rd_coarse_fine": the discrete update u -> interpolate(f_n(restrict(u))) + y
        on a fine periodic grid; its tendency is the one-step displacement / dt.
    kind "ns_projection": staggered channel flow where the label is the
        pressure; the full state is the packed face velocities and the
        observed state is the centered velocity pair.
    """

    kind: str
    A: np.ndarray = None
    B: np.ndarray = None
    dt: float = None
    p_coarse: object = None   # RDParams of the coarse solver
    fine_n: int = None
    ns_params: object = None  # NSParams with dt frozen

    @classmethod
    def linear(cls, A, B, dt=1.0):
        return cls(kind="linear", A=np.asarray(A, float), B=np.asarray(B, float), dt=dt)

    @classmethod
    def rd(cls, p_coarse, fine_n):
        return cls(kind="rd_coarse_fine", p_coarse=p_coarse, fine_n=fine_n,
                   dt=p_coarse.dt)

    @classmethod
    def ns(cls, params):
        return cls(kind="ns_projection", ns_params=params, dt=params.dt)

    # -- state packing ------------------------------------------------------
    def ns_shapes(self):
        nx, ny = self.ns_params.nx, self.ns_params.ny
        return (nx + 1, ny), (nx, ny + 1)

    def ns_unpack(self, state):
        (su, sv) = self.ns_shapes()
        nu = su[0] * su[1]
        return state[:nu].reshape(su), state[nu:].reshape(sv)

    def ns_pack(self, u, v):
        return np.concatenate([u.ravel(), v.ravel()])

    # -- core maps ----------------------------------------------------------
    def observe(self, u):
        """Map a full state to the surrogate/indicator input space."""
        if self.kind == "ns_projection":
            uf, vf = self.ns_unpack(np.asarray(u, float))
            return center_velocities(uf, vf).ravel()
        return np.asarray(u, float).ravel()

    def drift(self, u, t=0.0):
        """Label-independent part of the tendency, in the observed space."""
        if self.kind == "linear":
            return self.A @ np.asarray(u, float)
        if self.kind == "rd_coarse_fine":
            s = np.asarray(u, float).reshape(2, self.fine_n, self.fine_n)
            return ((rd_resolved_step(s, self.p_coarse) - s) / self.dt).ravel()
        uf, vf = self.ns_unpack(np.asarray(u, float))
        p = self.ns_params
        u_in, v_in = inflow_profiles(p, t)
        from ._accel import ns_tentative

        us, vs = ns_tentative(uf, vf, p.nu, p.h, p.dt, u_in, v_in)
        cen = center_velocities(uf, vf)
        cen_s = center_velocities(us, vs)
        return ((cen_s - cen) / self.dt).ravel()

    def apply_jy(self, Y):
        """Tendency contribution of labels, batched over rows of Y."""
        Y = np.atleast_2d(np.asarray(Y, float))
        if self.kind == "linear":
            return Y @ self.B.T
        if self.kind == "rd_coarse_fine":
            return Y / self.dt
        p = self.ns_params
        out = np.empty((Y.shape[0], 2 * p.nx * p.ny))
        for i in range(Y.shape[0]):
            out[i] = press_to_center_tendency(Y[i].reshape(p.nx, p.ny), p.h).ravel()
        return out

    def apply_jy_T(self, G):
        """Adjoint of apply_jy, batched over rows of G."""
        G = np.atleast_2d(np.asarray(G, float))
        if self.kind == "linear":
            return G @ self.B
        if self.kind == "rd_coarse_fine":
            return G / self.dt
        p = self.ns_params
        out = np.empty((G.shape[0], p.nx * p.ny))
        for i in range(G.shape[0]):
            out[i] = press_to_center_tendency_adjoint(
                G[i].reshape(2, p.nx, p.ny), p.h).ravel()
        return out

    def tendency(self, u, y, t=0.0):
        return self.drift(u, t) + self.apply_jy(np.asarray(y, float))[0]


def resolved_step(rm, u, y, t=0.0):
    """One forward step of the resolved dynamics with the supplied label."""
    if rm.kind == "linear":
        u = np.asarray(u, float)
        return u + rm.dt * (rm.A @ u + rm.B @ np.asarray(y, float))
    if rm.kind == "rd_coarse_fine":
        s = np.asarray(u, float).reshape(2, rm.fine_n, rm.fine_n)
        out = rd_resolved_step(s, rm.p_coarse) + np.asarray(y, float).reshape(s.shape)
        return out.ravel() if np.ndim(u) == 1 else out
    uf, vf = rm.ns_unpack(np.asarray(u, float))
    p = rm.ns_params
    u_in, v_in = inflow_profiles(p, t)
    from ._accel import ns_tentative

    us, vs = ns_tentative(uf, vf, p.nu, p.h, p.dt, u_in, v_in)
    gu, gv = face_gradient(np.asarray(y, float).reshape(p.nx, p.ny), p.h)
    return rm.ns_pack(us - p.dt * gu, vs - p.dt * gv)


@dataclass
class SurrogateModel:
    net: Mlp
    objective: str = "OLS"
    lambda_: float = 0.0
    noise_sigma: float = 0.0
    arch: str = "dense"       # "dense" | "patch"
    grid: tuple = None        # (n, n) for patch arch
    radius: int = 2
    channels: int = 2
    train_bias: bool = True

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise ConfigError(f"unknown objective {self.objective!r}")
        if self.arch not in ("dense", "patch"):
            raise ConfigError(f"unknown surrogate arch {self.arch!r}")


def make_dense_surrogate(d_in, d_out, hidden=(256, 256), objective="OLS",
                         lambda_=0.0, seed=0, activation="tanh", train_bias=True):
    net = init_mlp([d_in, *hidden, d_out], activation, seed=seed)
    if not train_bias:
        for b in net.biases:
            b[:] = 0.0
    return SurrogateModel(net=net, objective=objective, lambda_=lambda_,
                          train_bias=train_bias)


def make_patch_surrogate(n, hidden=(64,), objective="OLS", lambda_=0.0,
                         seed=0, radius=2, channels=2):
    k = 2 * radius + 1
    d_in = channels * k * k + 2   # patch values plus the 2x2 phase features
    net = init_mlp([d_in, *hidden, channels], "tanh", seed=seed)
    return SurrogateModel(net=net, objective=objective, lambda_=lambda_,
                          arch="patch", grid=(n, n), radius=radius,
                          channels=channels)


def _phase_features(n):
    i, j = np.meshgrid(np.arange(n) % 2, np.arange(n) % 2, indexing="ij")
    return np.stack([i.ravel(), j.ravel()], axis=1).astype(float)


def _patch_inputs(model, X):
    n = model.grid[0]
    npix = n * n
    phase = _phase_features(n)
    rows = np.empty((X.shape[0] * npix, model.net.layer_dims[0]))
    for s in range(X.shape[0]):
        f = X[s].reshape(model.channels, n, n)
        rows[s * npix : (s + 1) * npix, :-2] = extract_patches(f, model.radius)
        rows[s * npix : (s + 1) * npix, -2:] = phase
    return rows


def surrogate_predict(model, X):
    """Batched label prediction for states in rows of X."""
    X = np.atleast_2d(np.asarray(X, float))
    if model.arch == "dense":
        return forward(model.net, X)
    n = model.grid[0]
    npix = n * n
    rows = _patch_inputs(model, X)
    out = forward(model.net, rows)  # (N*npix, channels)
    out = out.reshape(X.shape[0], npix, model.channels)
    return np.swapaxes(out, 1, 2).reshape(X.shape[0], model.channels * npix)


def tr_penalty(rm, ind, u, y_pred, t=0.0):
    """Squared normal component of the resolved tendency at (u, y_pred).

    For a single-gradient (MLP) indicator this is (grad F(u) . L)^2 per the
    regularized objective; for a PCA indicator the full orthonormal normal
    set is summed, giving ||P_perp L||^2, which coincides with the single
    direction whenever the normal space is one dimensional.
    """
    u_obs = rm.observe(u)
    L = rm.tendency(u, y_pred, t)
    if ind.model.kind == "pca":
        perp = L - (L @ ind.model.basis.T) @ ind.model.basis
        return float(perp @ perp)
    g = ds_gradient(ind, u_obs)
    return float((g @ L) ** 2)


def _penalty_context(rm, ind, states_obs, drifts, times):
    """Precompute everything the penalty needs per sample (indicator frozen)."""
    if ind is None:
        return None
    if ind.model.kind == "pca":
        return {"kind": "pca", "basis": ind.model.basis, "drifts": drifts}
    g = ds_gradient(ind, states_obs)                     # (N, d_obs)
    r = rm.apply_jy_T(g)                                 # (N, d_y)
    s = np.sum(g * drifts, axis=1)                       # (N,)
    return {"kind": "mlp", "r": r, "s": s}


def _penalty_and_grad(rm, ctx, idx, Y_hat):
    """Returns (sum of penalties over the batch, d penalty / d Y_hat)."""
    if ctx["kind"] == "pca":
        basis = ctx["basis"]
        L = ctx["drifts"][idx] + rm.apply_jy(Y_hat)
        perp = L - (L @ basis.T) @ basis
        pen = float(np.sum(perp * perp))
        grad = 2.0 * rm.apply_jy_T(perp)
        return pen, grad
    r = ctx["r"][idx]
    s = ctx["s"][idx]
    inner = s + np.sum(r * Y_hat, axis=1)
    pen = float(np.sum(inner**2))
    grad = 2.0 * inner[:, None] * r
    return pen, grad


def resolved_drifts(rm, data):
    """Per-sample drift rows for a dataset (stored drifts for the ns kind)."""
    if rm.kind == "ns_projection":
        return data.drifts
    times = data.times()
    out = np.empty_like(data.states)
    for i in range(data.n_tuples):
        out[i] = rm.drift(data.states[i], times[i])
    return out


def _trainable_params(model):
    if model.train_bias:
        return model.net.params()
    return list(model.net.weights)


def _predict_cached(model, X):
    """Prediction plus the network inputs and forward cache for backward."""
    if model.arch == "dense":
        out, cache = forward_cached(model.net, X)
        return out, X, cache
    n = model.grid[0]
    npix = n * n
    rows = _patch_inputs(model, X)
    out, cache = forward_cached(model.net, rows)
    out = out.reshape(X.shape[0], npix, model.channels)
    out = np.swapaxes(out, 1, 2).reshape(X.shape[0], model.channels * npix)
    return out, rows, cache


def _net_backward(model, X, upstream, rows=None, cache=None):
    """Parameter gradients of sum upstream . prediction for either arch."""
    if model.arch == "dense":
        grads, _ = backward(model.net, X, upstream, cache=cache,
                            need_input_grad=False)
    else:
        n = model.grid[0]
        npix = n * n
        if rows is None:
            rows = _patch_inputs(model, X)
        up = upstream.reshape(X.shape[0], model.channels, npix)
        up = np.swapaxes(up, 1, 2).reshape(-1, model.channels)
        grads, _ = backward(model.net, rows, up, cache=cache,
                            need_input_grad=False)
    if model.train_bias:
        return grads
    return grads[0::2]


def loss_and_grads(model, rm, ind, states, labels, drifts=None, times=None,
                   pen_ctx=None, lambda_=None, states_full=None):
    """Full-objective value and parameter gradients on one batch.

    Returns (loss_data, loss_penalty, grads). ``drifts`` may be omitted for
    non-TR objectives. Mean-over-batch convention throughout.
    """
    states = np.atleast_2d(states)
    labels = np.atleast_2d(labels)
    nb = states.shape[0]
    lam = model.lambda_ if lambda_ is None else lambda_
    Y_hat, net_in, fwd_cache = _predict_cached(model, states)
    resid = Y_hat - labels
    loss_data = float(np.sum(resid**2)) / nb
    upstream = 2.0 * resid / nb
    loss_pen = 0.0
    if model.objective == "TR" and lam > 0.0:
        if pen_ctx is None:
            if ind is None:
                raise ConfigError("TR objective requires a DS indicator")
            obs = states if states_full is None else np.array(
                [rm.observe(s) for s in states_full])
            pen_ctx = _penalty_context(rm, ind, obs, drifts, times)
        pen, dpen = _penalty_and_grad(rm, pen_ctx, slice(None), Y_hat)
        loss_pen = lam * pen / nb
        upstream = upstream + (lam / nb) * dpen
    grads = _net_backward(model, states, upstream, rows=net_in, cache=fwd_cache)
    if model.objective == "mOLS" and lam > 0.0:
        ps = _trainable_params(model)
        wd = weight_decay_grads(ps, lam)
        grads = [g + w for g, w in zip(grads, wd)]
        loss_pen = lam * sum(float(np.sum(p * p)) for p in ps)
    return loss_data, loss_pen, grads


def train_surrogate(model, rm, ind, data, epochs=2000, seed=0, lr=1e-4,
                    batch_size=None, log_path=None, train_frac=1.0):
    """Train a surrogate on a trajectory dataset with Adam.

    The TR objective requires a frozen indicator; aOLS redraws Gaussian input
    noise every epoch; mOLS applies weight decay of strength lambda. Returns
    the model (mutated in place) and writes an optional per-epoch CSV log.
    """
    if model.objective == "TR" and ind is None:
        raise ConfigError("TR objective requires a DS indicator")
    states = data.states
    labels = data.labels
    times = data.times()
    n = states.shape[0]
    if batch_size is None:
        batch_size = _default_batch(data.traj_len)
    drifts = resolved_drifts(rm, data) if model.objective == "TR" else None
    pen_ctx_full = None
    if model.objective == "TR" and model.lambda_ > 0.0:
        obs = states  # stored states are already in the observed space
        pen_ctx_full = _penalty_context(rm, ind, obs, drifts, times)
    if model.objective == "aOLS" and model.noise_sigma == 0.0:
        model.noise_sigma = 0.01 * float(states.std())
    params = _trainable_params(model)
    state = AdamState(lr=lr)
    sched = PlateauSchedule(state)
    rng = rng_from(seed)
    log_rows = []
    for epoch in range(epochs):
        epoch_states = states
        if model.objective == "aOLS" and model.noise_sigma > 0.0:
            epoch_states = states + model.noise_sigma * rng.standard_normal(states.shape)
        ep_data = 0.0
        ep_pen = 0.0
        for start in range(0, n, batch_size):
            sl = slice(start, min(start + batch_size, n))
            ctx = None
            if pen_ctx_full is not None:
                ctx = _slice_ctx(pen_ctx_full, sl)
            ld, lp, grads = loss_and_grads(
                model, rm, ind, epoch_states[sl], labels[sl],
                drifts=None if drifts is None else drifts[sl],
                pen_ctx=ctx)
            adam_step(state, params, grads)
            w = (sl.stop - sl.start) / n
            ep_data += ld * w
            ep_pen += lp * w
        sched.update(ep_data + ep_pen)
        log_rows.append((epoch, model.objective, ep_data, ep_pen, state.lr))
    if log_path is not None:
        write_training_log(log_path, log_rows)
    return model


def _slice_ctx(ctx, sl):
    if ctx["kind"] == "pca":
        return {"kind": "pca", "basis": ctx["basis"],
                "drifts": ctx["drifts"][sl]}
    return {"kind": "mlp", "r": ctx["r"][sl], "s": ctx["s"][sl]}


def _default_batch(traj_len, cap=1000):
    """Full trajectory length when it fits, else its largest divisor <= cap."""
    if traj_len <= cap:
        return traj_len
    for b in range(cap, 0, -1):
        if traj_len % b == 0:
            return b
    return cap


def write_training_log(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "objective", "loss_data", "loss_penalty", "lr"])
        for epoch, obj, ld, lp, lr in rows:
            w.writerow([epoch, obj, format(ld, ".17g"), format(lp, ".17g"),
                        format(lr, ".17g")])


KIND_SURROGATE = 0
_ARCH_CODES = {"dense": 0, "patch": 1}
_OBJ_CODES = {o: i for i, o in enumerate(OBJECTIVES)}


def save_surrogate(path, model):
    """Surrogate checkpoint in the shared network format; metadata in extra."""
    from .nn import save_checkpoint

    extra = np.array([
        _ARCH_CODES[model.arch], _OBJ_CODES[model.objective], model.lambda_,
        model.noise_sigma, float(model.radius), float(model.channels),
        0.0 if model.grid is None else float(model.grid[0]),
        1.0 if model.train_bias else 0.0,
    ])
    save_checkpoint(path, model.net, kind=KIND_SURROGATE, extra=extra)


def load_surrogate(path):
    from .nn import load_checkpoint

    net, kind, extra = load_checkpoint(path)
    if kind != KIND_SURROGATE:
        raise ValueError(f"{path}: not a surrogate checkpoint")
    arch = [k for k, v in _ARCH_CODES.items() if v == int(extra[0])][0]
    grid_n = int(extra[6])
    return SurrogateModel(
        net=net, objective=OBJECTIVES[int(extra[1])], lambda_=float(extra[2]),
        noise_sigma=float(extra[3]), arch=arch, radius=int(extra[4]),
        channels=int(extra[5]), grid=None if grid_n == 0 else (grid_n, grid_n),
        train_bias=bool(extra[7]))


def loss_gradient_check(model, rm, ind, states, labels, drifts=None,
                        h=1e-6):
    """Max relative error of the analytic full-loss gradient vs central FD."""
    states = np.atleast_2d(np.asarray(states, float))
    labels = np.atleast_2d(np.asarray(labels, float))
    if model.objective == "TR" and drifts is None:
        drifts = np.array([rm.drift(s) for s in states])
    pen_ctx = None
    if model.objective == "TR" and model.lambda_ > 0.0:
        pen_ctx = _penalty_context(rm, ind, states, drifts, None)

    def total_loss():
        ld, lp, _ = loss_and_grads(model, rm, ind, states, labels,
                                   drifts=drifts, pen_ctx=pen_ctx)
        return ld + lp

    _, _, grads = loss_and_grads(model, rm, ind, states, labels,
                                 drifts=drifts, pen_ctx=pen_ctx)
    params = _trainable_params(model)
    worst = 0.0
    for p, g in zip(params, grads):
        flat = p.reshape(-1)
        gflat = np.asarray(g).reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + h
            fp = total_loss()
            flat[idx] = orig - h
            fm = total_loss()
            flat[idx] = orig
            fd = (fp - fm) / (2.0 * h)
            denom = max(abs(fd), abs(gflat[idx]), 1e-8)
            worst = max(worst, abs(fd - gflat[idx]) / denom)
    return worst
