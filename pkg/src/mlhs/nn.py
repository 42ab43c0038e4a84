"""Fully-connected networks, reverse-mode gradients, Adam, checkpoints.

Small by design: dense layers with tanh/relu hidden activations and an
identity last layer are enough for the desk-scale surrogates and
autoencoders. All arrays are float64; forward/backward operate on batches
with samples in rows.
"""

import struct
from dataclasses import dataclass, field

import numpy as np
from .seeding import rng_from

CHECKPOINT_MAGIC = b"MLHSNN1"
ACTIVATIONS = ("tanh", "relu", "identity")


@dataclass
class Mlp:
    layer_dims: list
    weights: list        # W_l of shape (d_in, d_out)
    biases: list
    activation: str = "tanh"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape != (self.layer_dims[l], self.layer_dims[l + 1]):
                raise ValueError("weight shape inconsistent with layer_dims")
            if b.shape != (self.layer_dims[l + 1],):
                raise ValueError("bias shape inconsistent with layer_dims")

    def params(self):
        out = []
        for W, b in zip(self.weights, self.biases):
            out.append(W)
            out.append(b)
        return out

    def param_hash(self):
        import hashlib

        digest = hashlib.sha256()
        for p in self.params():
            digest.update(np.ascontiguousarray(p).tobytes())
        return digest.hexdigest()


def init_mlp(layer_dims, activation="tanh", seed=0):
    """Uniform init scaled by 1/sqrt(fan_in) for weights and biases."""
    rng = rng_from(seed)
    weights, biases = [], []
    for d_in, d_out in zip(layer_dims[:-1], layer_dims[1:]):
        bound = 1.0 / np.sqrt(d_in)
        weights.append(rng.uniform(-bound, bound, size=(d_in, d_out)))
        biases.append(rng.uniform(-bound, bound, size=d_out))
    return Mlp(list(layer_dims), weights, biases, activation)


def _act(z, kind):
    if kind == "tanh":
        return np.tanh(z)
    if kind == "relu":
        return np.maximum(z, 0.0)
    return z


def _act_grad(z, kind):
    if kind == "tanh":
        t = np.tanh(z)
        return 1.0 - t * t
    if kind == "relu":
        return (z > 0.0).astype(float)
    return np.ones_like(z)


def forward(model, x):
    """Batched forward pass; x is (N, d_in) or (d_in,)."""
    single = np.ndim(x) == 1
    a = np.atleast_2d(np.asarray(x, dtype=float))
    last = len(model.weights) - 1
    for l, (W, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ W + b
        a = z if l == last else _act(z, model.activation)
    return a[0] if single else a


def forward_cached(model, x):
    """Forward pass keeping pre-activations for backward. Returns (out, cache)."""
    a = np.atleast_2d(np.asarray(x, dtype=float))
    acts = [a]
    zs = []
    last = len(model.weights) - 1
    for l, (W, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ W + b
        zs.append(z)
        a = z if l == last else _act(z, model.activation)
        acts.append(a)
    return a, (acts, zs)


def _act_grad_from_output(a, kind):
    """Activation derivative recovered from the post-activation value."""
    if kind == "tanh":
        return 1.0 - a * a
    if kind == "relu":
        return (a > 0.0).astype(float)
    return np.ones_like(a)


def backward(model, x, upstream, cache=None, need_input_grad=True):
    """Gradients of sum_i upstream_i . f(x_i) w.r.t. parameters and inputs.

    Returns (param_grads, input_grad): param_grads is a flat list matching
    model.params() order with gradients summed over the batch; input_grad
    matches the shape of x (None when ``need_input_grad`` is false).
    """
    single = np.ndim(x) == 1
    x2 = np.atleast_2d(np.asarray(x, dtype=float))
    up = np.atleast_2d(np.asarray(upstream, dtype=float))
    if cache is None:
        _, cache = forward_cached(model, x2)
    acts, _ = cache
    last = len(model.weights) - 1
    delta = up
    grads = [None] * (2 * len(model.weights))
    for l in range(last, -1, -1):
        if l != last:
            delta = delta * _act_grad_from_output(acts[l + 1], model.activation)
        grads[2 * l] = acts[l].T @ delta
        grads[2 * l + 1] = delta.sum(axis=0)
        if l > 0 or need_input_grad:
            delta = delta @ model.weights[l].T
    if not need_input_grad:
        return grads, None
    return grads, (delta[0] if single else delta)


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    step_count: int = 0

    def __post_init__(self):
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ValueError("betas must lie in (0, 1)")


def adam_step(state, params, grads):
    """Bias-corrected Adam update, in place on ``params``. Returns params."""
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.step_count += 1
    t = state.step_count
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params


def weight_decay_grads(params, lambda_):
    """Gradient addend of lambda * sum ||p||^2: 2*lambda*p per parameter."""
    if lambda_ < 0:
        raise ValueError("lambda must be >= 0")
    return [2.0 * lambda_ * p for p in params]


class PlateauSchedule:
    """Halve the learning rate after ``patience`` evaluations without improvement."""

    def __init__(self, state, patience=100, factor=0.5, min_lr=1e-8):
        self.state = state
        self.patience = patience
        self.factor = factor
        self.min_lr = min_lr
        self.best = np.inf
        self.stale = 0

    def update(self, loss):
        if loss < self.best:
            self.best = loss
            self.stale = 0
        else:
            self.stale += 1
            if self.stale > self.patience:
                self.state.lr = max(self.min_lr, self.state.lr * self.factor)
                self.stale = 0
        return self.state.lr


def save_checkpoint(path, model, kind=0, extra=None):
    """MLHSNN1 checkpoint: magic, kind, activation, layer dims, raw params.

    ``extra`` is an optional flat float64 array appended after the parameters
    (used by linear-autoencoder models for the data mean).
    """
    act = ACTIVATIONS.index(model.activation)
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<III", kind, act, len(model.layer_dims)))
        fh.write(struct.pack(f"<{len(model.layer_dims)}I", *model.layer_dims))
        n_extra = 0 if extra is None else np.asarray(extra).size
        fh.write(struct.pack("<Q", n_extra))
        for W, b in zip(model.weights, model.biases):
            fh.write(W.astype("<f8").tobytes())
            fh.write(b.astype("<f8").tobytes())
        if extra is not None:
            fh.write(np.asarray(extra, dtype="<f8").ravel().tobytes())


def load_checkpoint(path):
    """Returns (model, kind, extra)."""
    with open(path, "rb") as fh:
        magic = fh.read(7)
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        kind, act, n_dims = struct.unpack("<III", fh.read(12))
        dims = list(struct.unpack(f"<{n_dims}I", fh.read(4 * n_dims)))
        (n_extra,) = struct.unpack("<Q", fh.read(8))
        weights, biases = [], []
        for d_in, d_out in zip(dims[:-1], dims[1:]):
            W = np.frombuffer(fh.read(8 * d_in * d_out), dtype="<f8").reshape(d_in, d_out)
            b = np.frombuffer(fh.read(8 * d_out), dtype="<f8")
            weights.append(W.copy())
            biases.append(b.copy())
        extra = None
        if n_extra:
            extra = np.frombuffer(fh.read(8 * n_extra), dtype="<f8").copy()
    model = Mlp(dims, weights, biases, ACTIVATIONS[act])
    return model, kind, extra
