"""Data-manifold models and the distribution-shift indicator.

The indicator is F(u) = ||u - D(E(u))||_2 for an encoder/decoder pair: PCA
(linear autoencoder, closed form) or a small MLP autoencoder trained with
Adam. The norm (not its square) keeps the gradient magnitude O(1) near the
manifold; where the residual is exactly zero the gradient is defined as the
zero vector. Indicators freeze their model at construction.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import GateError
from .nn import (AdamState, Mlp, PlateauSchedule, adam_step, backward,
                 forward, forward_cached, init_mlp, load_checkpoint,
                 save_checkpoint)

GATE_LOSS = 1e-3
KIND_PCA = 1
KIND_MLP_AE = 2


@dataclass
class AutoencoderModel:
    kind: str                 # "pca" | "mlp"
    latent_dim: int
    train_loss: float
    mean: np.ndarray = None   # pca
    basis: np.ndarray = None  # pca, (latent, d) orthonormal rows
    encoder: Mlp = None       # mlp
    decoder: Mlp = None       # mlp

    def reconstruct(self, u):
        if self.kind == "pca":
            centered = np.asarray(u, dtype=float) - self.mean
            return self.mean + centered @ self.basis.T @ self.basis
        return forward(self.decoder, forward(self.encoder, u))

    def param_hash(self):
        import hashlib

        digest = hashlib.sha256()
        if self.kind == "pca":
            digest.update(np.ascontiguousarray(self.mean).tobytes())
            digest.update(np.ascontiguousarray(self.basis).tobytes())
        else:
            digest.update(self.encoder.param_hash().encode())
            digest.update(self.decoder.param_hash().encode())
        return digest.hexdigest()


def fit_pca(data, latent_dim):
    """Linear autoencoder: top principal directions of mean-centered samples.

    ``data`` is (N, d) with samples in rows.
    """
    data = np.asarray(data, dtype=float)
    n, d = data.shape
    if not 1 <= latent_dim <= min(n, d):
        raise ValueError("latent_dim must be in [1, min(samples, dim)]")
    mean = data.mean(axis=0)
    centered = data - mean
    _, S, Vt = np.linalg.svd(centered, full_matrices=False)
    if S.size == 0 or S[0] <= 1e-14 * max(n, d):
        warnings.warn("zero-variance data: PCA basis is arbitrary")
    basis = Vt[:latent_dim]
    model = AutoencoderModel(kind="pca", latent_dim=latent_dim, train_loss=0.0,
                             mean=mean, basis=basis)
    resid = centered - centered @ basis.T @ basis
    model.train_loss = float(np.mean(np.sum(resid**2, axis=1)))
    return model


def fit_mlp_autoencoder(data, latent_dim, epochs=2000, seed=0, hidden=(64,),
                        lr=1e-4, activation="tanh", batch_size=None):
    """MLP autoencoder minimizing mean F(u)^2 with Adam.

    Returns the model with its final training loss; quality gating happens
    when a DsIndicator is constructed from it.
    """
    data = np.ascontiguousarray(data, dtype=float)
    n, d = data.shape
    if n == 0:
        raise ValueError("empty training data")
    enc_dims = [d, *hidden, latent_dim]
    dec_dims = [latent_dim, *list(hidden)[::-1], d]
    enc = init_mlp(enc_dims, activation, seed=(seed, 0))
    dec = init_mlp(dec_dims, activation, seed=(seed, 1))
    params = enc.params() + dec.params()
    state = AdamState(lr=lr)
    sched = PlateauSchedule(state)
    if batch_size is None:
        batch_size = n
    loss = _ae_loss(enc, dec, data)
    for _ in range(epochs):
        for start in range(0, n, batch_size):
            xb = data[start : start + batch_size]
            z, enc_cache = forward_cached(enc, xb)
            out, dec_cache = forward_cached(dec, z)
            resid = out - xb
            upstream = (2.0 / xb.shape[0]) * resid
            dec_grads, dz = backward(dec, z, upstream, cache=dec_cache)
            enc_grads, _ = backward(enc, xb, dz, cache=enc_cache)
            adam_step(state, params, enc_grads + dec_grads)
        loss = _ae_loss(enc, dec, data)
        sched.update(loss)
    return AutoencoderModel(kind="mlp", latent_dim=latent_dim,
                            train_loss=float(loss), encoder=enc, decoder=dec)


def _ae_loss(enc, dec, data):
    out = forward(dec, forward(enc, data))
    return float(np.mean(np.sum((out - data) ** 2, axis=1)))


class DsIndicator:
    """Frozen distribution-shift indicator around an autoencoder model.

    Refuses models whose training loss misses the reconstruction gate
    unless ``force`` is set.
    """

    def __init__(self, model, force=False, gate=GATE_LOSS):
        if model.kind == "mlp" and model.train_loss > gate and not force:
            raise GateError(model.train_loss, gate)
        self.model = model
        self.frozen_hash = model.param_hash()

    def check_frozen(self):
        return self.model.param_hash() == self.frozen_hash


def ds_value(ind, u):
    """F(u) = ||u - D(E(u))||_2; batched over rows when u is 2-D."""
    u = np.asarray(u, dtype=float)
    resid = u - ind.model.reconstruct(u)
    return np.linalg.norm(resid, axis=-1)


def ds_gradient(ind, u):
    """Gradient of F, the unit manifold-normal direction; zero where F = 0.

    Batched over rows when u is 2-D.
    """
    u = np.asarray(u, dtype=float)
    single = u.ndim == 1
    ub = np.atleast_2d(u)
    model = ind.model
    resid = ub - model.reconstruct(ub)
    f = np.linalg.norm(resid, axis=1)
    if model.kind == "pca":
        jtr = resid  # residual already lies in the normal space
    else:
        z, enc_cache = forward_cached(model.encoder, ub)
        _, dec_cache = forward_cached(model.decoder, z)
        _, dz = backward(model.decoder, z, resid, cache=dec_cache)
        _, jvp = backward(model.encoder, ub, dz, cache=enc_cache)
        jtr = resid - jvp
    safe = np.where(f > 0.0, f, 1.0)[:, None]
    grad = np.where(f[:, None] > 0.0, jtr / safe, 0.0)
    return grad[0] if single else grad


def search_latent_dim(data, grid=(4, 8, 16, 32), gate=GATE_LOSS):
    """Smallest PCA latent dimension whose mean F^2 meets the gate.

    Returns (model, reached_gate); falls back to the largest grid entry when
    none reaches the gate.
    """
    model = None
    for k in grid:
        if k > min(np.shape(data)):
            break
        model = fit_pca(data, k)
        if model.train_loss < gate:
            return model, True
    return model, False


def save_autoencoder(path, model):
    if model.kind == "pca":
        d = model.mean.size
        stub = Mlp([d, model.latent_dim], [np.ascontiguousarray(model.basis.T)],
                   [np.zeros(model.latent_dim)], "identity")
        save_checkpoint(path, stub, kind=KIND_PCA, extra=model.mean)
    else:
        enc, dec = model.encoder, model.decoder
        combined = Mlp(enc.layer_dims + dec.layer_dims[1:],
                       enc.weights + dec.weights, enc.biases + dec.biases,
                       enc.activation)
        extra = np.array([float(len(enc.weights)), model.train_loss])
        save_checkpoint(path, combined, kind=KIND_MLP_AE, extra=extra)


def load_autoencoder(path):
    model, kind, extra = load_checkpoint(path)
    if kind == KIND_PCA:
        basis = model.weights[0].T.copy()
        mean = extra
        out = AutoencoderModel(kind="pca", latent_dim=basis.shape[0],
                               train_loss=0.0, mean=mean, basis=basis)
        # recompute of train_loss needs the data; stored models report nan
        out.train_loss = float("nan")
        return out
    n_enc = int(extra[0])
    dims = model.layer_dims
    enc = Mlp(dims[: n_enc + 1], model.weights[:n_enc], model.biases[:n_enc],
              model.activation)
    dec = Mlp(dims[n_enc:], model.weights[n_enc:], model.biases[n_enc:],
              model.activation)
    return AutoencoderModel(kind="mlp", latent_dim=dims[n_enc],
                            train_loss=float(extra[1]), encoder=enc, decoder=dec)
