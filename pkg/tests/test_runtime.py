import numpy as np
import pytest

from mlhs.manifold import AutoencoderModel, DsIndicator
from mlhs.runtime import (SimRun, evaluate_run, run_hybrid, spearman,
                          stopping_time, write_run_csv)
from mlhs.training import ResolvedModel, make_dense_surrogate


def axis_indicator():
    model = AutoencoderModel(kind="pca", latent_dim=1, train_loss=0.0,
                             mean=np.zeros(2), basis=np.array([[1.0, 0.0]]))
    return DsIndicator(model)


def exact_linear_surrogate(C):
    model = make_dense_surrogate(2, 2, hidden=(), seed=0)
    model.net.weights[0][:] = np.asarray(C, float).T
    model.net.biases[0][:] = 0.0
    return model


def test_exact_surrogate_reproduces_truth():
    """A surrogate that emits the true labels recovers the closed loop."""
    A = np.diag([-0.1, -0.2])
    C = np.array([[0.05, 0.0], [0.0, 0.05]])
    rm = ResolvedModel.linear(A, np.eye(2), dt=0.5)
    model = exact_linear_surrogate(C)
    u0 = np.array([1.0, -2.0])
    run = run_hybrid(rm, model, u0, 20)
    M = np.eye(2) + 0.5 * (A + C)
    truth = [u0]
    for _ in range(20):
        truth.append(M @ truth[-1])
    truth = np.array(truth)
    assert run.blew_up_at is None
    assert np.allclose(run.states, truth, atol=1e-12)
    evaluate_run(run, truth)
    assert np.max(run.rel_error) < 1e-12


def test_run_hybrid_detects_blowup():
    rm = ResolvedModel.linear(np.array([[30.0, 0.0], [0.0, 30.0]]),
                              np.eye(2), dt=1.0)
    model = exact_linear_surrogate(np.zeros((2, 2)))
    run = run_hybrid(rm, model, np.array([1.0, 1.0]), 50)
    assert run.blew_up_at is not None
    assert run.states.shape[0] == run.blew_up_at


def test_evaluate_run_relative_and_fallback():
    run = SimRun(states=np.array([[3.0, 4.0], [1.0, 0.0]]))
    truth = np.array([[0.0, 0.0], [2.0, 0.0]])
    with pytest.warns(UserWarning):
        evaluate_run(run, truth)
    assert run.abs_error_fallback
    assert run.rel_error[0] == pytest.approx(5.0)   # absolute at zero truth
    assert run.rel_error[1] == pytest.approx(0.5)   # |1-2| / 2


def test_evaluate_run_fills_ds():
    run = SimRun(states=np.array([[1.0, 0.0], [0.0, 2.0]]))
    truth = np.ones((2, 2))
    evaluate_run(run, truth, axis_indicator())
    assert np.allclose(run.ds_curve, [0.0, 2.0])


def test_stopping_time_examples():
    run = SimRun(states=None, rel_error=np.array([0.1, 0.5, 1.2]))
    assert stopping_time(run, K=1.0) == 1
    run = SimRun(states=None, rel_error=np.array([0.1, 0.2, 0.3]))
    assert stopping_time(run, K=1.0) == 2
    run = SimRun(states=None, rel_error=np.array([5.0, 0.1]))
    assert stopping_time(run, K=1.0) == 0
    run = SimRun(states=None, rel_error=np.array([0.1, np.nan, 0.1]))
    assert stopping_time(run, K=1.0) == 0  # NaN is non-compliant


def test_stopping_time_validation():
    run = SimRun(states=None, rel_error=np.array([0.1]))
    with pytest.raises(ValueError):
        stopping_time(run, K=0.0)
    with pytest.raises(ValueError):
        stopping_time(SimRun(states=None), K=1.0)


def test_spearman_basic():
    assert spearman([1, 2, 3, 4], [10, 20, 30, 40]) == pytest.approx(1.0)
    assert spearman([1, 2, 3, 4], [4, 3, 2, 1]) == pytest.approx(-1.0)
    # monotone but nonlinear is still a perfect rank correlation
    x = np.linspace(0, 1, 20)
    assert spearman(x, np.exp(5 * x)) == pytest.approx(1.0)
    assert spearman([1, 1, 1], [2, 3, 4]) == 0.0


def test_spearman_ties():
    # ties get averaged ranks; scipy would report the same value
    r = spearman([1.0, 2.0, 2.0, 3.0], [1.0, 2.0, 3.0, 4.0])
    assert r == pytest.approx(0.9486832980505138)


def test_write_run_csv(tmp_path):
    run = SimRun(states=None, rel_error=np.array([0.0, 0.5]),
                 ds_curve=np.array([0.1, 0.2]))
    path = tmp_path / "run.csv"
    write_run_csv(str(path), run)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "step,rel_error,ds"
    assert lines[1].startswith("0,0,")
    assert len(lines) == 3
