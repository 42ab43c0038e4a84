import numpy as np
import pytest

from mlhs.errors import GateError
from mlhs.manifold import (AutoencoderModel, DsIndicator, ds_gradient,
                           ds_value, fit_mlp_autoencoder, fit_pca,
                           load_autoencoder, save_autoencoder,
                           search_latent_dim)


def rank_k_data(n=200, d=20, k=3, seed=0):
    rng = np.random.default_rng(seed)
    basis = np.linalg.qr(rng.standard_normal((d, k)))[0]
    return rng.standard_normal((n, k)) @ basis.T + 0.7


def axis_indicator():
    """PCA model whose manifold is the x axis through the origin."""
    model = AutoencoderModel(kind="pca", latent_dim=1, train_loss=0.0,
                             mean=np.zeros(2), basis=np.array([[1.0, 0.0]]))
    return DsIndicator(model)


def test_pca_exact_on_rank_k():
    data = rank_k_data()
    model = fit_pca(data, 3)
    assert model.train_loss < 1e-10
    assert np.allclose(model.reconstruct(data), data, atol=1e-7)


def test_pca_basis_orthonormal():
    model = fit_pca(rank_k_data(seed=1), 4)
    assert np.allclose(model.basis @ model.basis.T, np.eye(4), atol=1e-12)


def test_ds_value_and_gradient_axis():
    ind = axis_indicator()
    assert ds_value(ind, np.array([3.0, 4.0])) == pytest.approx(4.0)
    assert np.allclose(ds_gradient(ind, np.array([3.0, 4.0])), [0.0, 1.0])
    # on the manifold the value is zero and the gradient is defined as zero
    assert ds_value(ind, np.array([5.0, 0.0])) == 0.0
    assert np.allclose(ds_gradient(ind, np.array([5.0, 0.0])), 0.0)


def test_ds_value_batched():
    ind = axis_indicator()
    u = np.array([[3.0, 4.0], [1.0, -2.0]])
    assert np.allclose(ds_value(ind, u), [4.0, 2.0])
    g = ds_gradient(ind, u)
    assert np.allclose(g, [[0.0, 1.0], [0.0, -1.0]])


def test_mlp_gradient_finite_difference():
    rng = np.random.default_rng(3)
    data = rank_k_data(n=50, d=6, k=2, seed=3)
    model = fit_mlp_autoencoder(data, 2, epochs=30, hidden=(8,), seed=4)
    ind = DsIndicator(model, force=True)
    u = rng.standard_normal(6)
    g = ds_gradient(ind, u)
    h = 1e-6
    for j in range(6):
        e = np.zeros(6)
        e[j] = h
        fd = (ds_value(ind, u + e) - ds_value(ind, u - e)) / (2 * h)
        assert abs(fd - g[j]) <= 1e-4 * max(1.0, abs(fd))


def test_gate_refuses_bad_mlp():
    model = AutoencoderModel(kind="mlp", latent_dim=2, train_loss=0.5,
                             encoder=None, decoder=None)
    model.param_hash = lambda: "x"
    with pytest.raises(GateError):
        DsIndicator(model)
    DsIndicator(model, force=True)  # force overrides


def test_indicator_freeze_detection():
    model = fit_pca(rank_k_data(seed=5), 3)
    ind = DsIndicator(model)
    assert ind.check_frozen()
    model.basis = model.basis * 2.0
    assert not ind.check_frozen()


def test_search_latent_dim_picks_smallest():
    data = rank_k_data(k=3, seed=6)
    model, reached = search_latent_dim(data, grid=(1, 2, 3, 8))
    assert reached
    assert model.latent_dim == 3


def test_search_latent_dim_fallback():
    rng = np.random.default_rng(7)
    data = rng.standard_normal((100, 30))  # full rank, no gate at small k
    model, reached = search_latent_dim(data, grid=(1, 2))
    assert not reached
    assert model.latent_dim == 2


@pytest.mark.parametrize("kind", ["pca", "mlp"])
def test_autoencoder_roundtrip(tmp_path, kind):
    data = rank_k_data(n=40, d=8, k=2, seed=8)
    if kind == "pca":
        model = fit_pca(data, 2)
    else:
        model = fit_mlp_autoencoder(data, 2, epochs=5, hidden=(6,), seed=9)
    path = str(tmp_path / "ae.ckpt")
    save_autoencoder(path, model)
    loaded = load_autoencoder(path)
    assert loaded.kind == kind
    assert loaded.latent_dim == model.latent_dim
    u = data[:5]
    assert np.allclose(loaded.reconstruct(u), model.reconstruct(u), atol=1e-12)
