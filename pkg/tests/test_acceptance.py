"""End-to-end acceptance suite.

One test per criterion; every test prints a single PASS/FAIL line so the
pytest log doubles as the acceptance report. The two PDE sweeps are shared
module-level fixtures because they dominate the runtime.
"""

import os
import time

import numpy as np
import pytest

from mlhs.config import ExperimentConfig
from mlhs.experiments import run_linear_toy, run_ns_sweep, run_rd_sweep
from mlhs.linalg import exp_norm_bound, matrix_exp, spectral_summary
from mlhs.linear import (LinearSystem, continuous_state, fit_ols, fit_tr,
                         reg_residual, theorem_bound)
from mlhs.manifold import AutoencoderModel, DsIndicator, fit_pca
from mlhs.nn import backward, forward, init_mlp
from mlhs.ns import NSParams, divergence, ns_step_projection, stable_dt
from mlhs.rd import RDParams, interpolate, rd_step_cn, restrict
from mlhs.training import (ResolvedModel, loss_gradient_check,
                           make_dense_surrogate, make_patch_surrogate)


def report(num, desc, ok, detail=""):
    line = f"[criterion {num:02d}] {'PASS' if ok else 'FAIL'}: {desc}"
    if detail:
        line += f" ({detail})"
    print("\n" + line)
    assert ok, line


def random_system(rng, m=None, n=None, stable=False):
    """System whose closed loop A + B C* leaves span(V) invariant."""
    m = m or int(rng.integers(2, 7))
    n = n or int(rng.integers(1, 7))
    l = int(rng.integers(1, m))
    V = np.linalg.qr(rng.standard_normal((m, l)))[0]
    P = V @ V.T
    F = rng.standard_normal((m, m)) - (1.5 if stable else 0.5) * np.eye(m)
    F = F - (np.eye(m) - P) @ F @ P  # kill the V -> V-perp block
    B = rng.standard_normal((m, n))
    C_star = rng.standard_normal((n, m))
    A = F - B @ C_star
    return LinearSystem(A=A, B=B, C_star=C_star, V_basis=V)


def random_dataset(rng, sys, N=40, sigma=1e-3):
    from mlhs.linear import LinearDataset

    coeff = rng.standard_normal((sys.V_basis.shape[1], N))
    U = sys.V_basis @ coeff
    Y = sys.C_star @ U + sigma * rng.standard_normal((sys.n, N))
    return LinearDataset(U=U, Y=Y, noise_sigma=sigma)


# ---------------------------------------------------------------------------
# criterion 1: closed form vs first-order condition and gradient descent


def test_criterion_01_closed_form_equivalence():
    rng = np.random.default_rng(100)
    t0 = time.time()
    worst_foc = 0.0
    worst_gd = 0.0
    for _ in range(20):
        sys = random_system(rng)
        data = random_dataset(rng, sys)
        lam = float(rng.choice([0.5, 1.0, 10.0]))
        C = fit_tr(data, sys, lam).C_hat
        UUt = data.U @ data.U.T
        Pperp = sys.p_vperp()
        YUt = data.Y @ data.U.T
        foc = C @ UUt + lam * sys.B.T @ Pperp @ (sys.A + sys.B @ C) @ UUt - YUt
        worst_foc = max(worst_foc, np.linalg.norm(foc) / max(1.0, np.linalg.norm(YUt)))

        # plain gradient descent on the regularized objective from zero
        G = np.eye(sys.n) + lam * sys.B.T @ Pperp @ sys.B
        L = 2.0 * np.linalg.norm(G, 2) * np.linalg.norm(UUt, 2)
        step = 1.0 / L
        X = np.zeros_like(C)
        for _ in range(20000):
            grad = 2.0 * (X @ UUt - YUt
                          + lam * sys.B.T @ Pperp @ (sys.A + sys.B @ X) @ UUt)
            X -= step * grad
            if np.linalg.norm(grad) < 1e-12 * max(1.0, np.linalg.norm(YUt)):
                break
        worst_gd = max(worst_gd, np.linalg.norm(X - C))
    elapsed = time.time() - t0
    ok = worst_foc < 1e-6 and worst_gd < 1e-5 and elapsed < 10.0
    report(1, "closed-form TR satisfies its first-order condition and matches "
           "a gradient-descent minimizer on 20 random instances", ok,
           f"foc {worst_foc:.2e}, gd gap {worst_gd:.2e}, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# criterion 2: the regularizer vanishes at C* on in-subspace data


def test_criterion_02_tr_unbiasedness():
    rng = np.random.default_rng(200)
    worst = 0.0
    for _ in range(20):
        sys = random_system(rng)
        data = random_dataset(rng, sys)
        worst = max(worst, reg_residual(sys, sys.C_star, data.U))
    report(2, "regularizer evaluated at C* equals zero on every dataset",
           worst <= 1e-12, f"max residual {worst:.2e}")


# ---------------------------------------------------------------------------
# criterion 3: toy-dynamics rates


def test_criterion_03_toy_rates(tmp_path):
    t0 = time.time()
    cfg = ExperimentConfig()
    summary = run_linear_toy(cfg, str(tmp_path / "toy"))
    elapsed = time.time() - t0
    curve = summary["ols_curve"]
    ks = np.arange(10, 41)
    slope = np.polyfit(ks, np.log(curve[10:41]), 1)[0]
    target = np.log(1.2)
    lam_grid = sorted(summary["terminal_tr"])
    tr = [summary["terminal_tr"][l] for l in lam_grid]
    ok_slope = abs(slope - target) <= 0.15 * target
    ok_ratio = tr[-1] <= 1e-2 * summary["terminal_ols"]
    ok_mono = all(tr[i + 1] <= tr[i] for i in range(len(tr) - 1))
    ok_mols = min(summary["terminal_mols"].values()) > tr[-1]
    ok = ok_slope and ok_ratio and ok_mono and ok_mols and elapsed < 60.0
    report(3, "toy OLS slope near log 1.2, TR(1e6) <= 1e-2 OLS, TR monotone "
           "in lambda, mOLS floor above TR", ok,
           f"slope {slope:.4f} vs {target:.4f}, ratio "
           f"{tr[-1] / summary['terminal_ols']:.1e}, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# criterion 4: error bounds dominate measured errors


def test_criterion_04_bound_validity():
    rng = np.random.default_rng(400)
    t0 = time.time()
    checked = 0
    ok = True
    while checked < 20:
        sys = random_system(rng, stable=True)
        if spectral_summary(sys.A + sys.B @ sys.C_star).defective:
            continue
        data = random_dataset(rng, sys)
        for rep, pick in ((fit_ols(data), "ols"), (fit_tr(data, sys, 1e2), "tr")):
            resid = (rep.C_hat - sys.C_star) @ data.U
            delta = max(float(np.mean(np.sum(resid**2, axis=0))), 1e-30)
            for T in (1.0, 2.0, 5.0):
                bound = theorem_bound(sys, rep.C_hat, delta, 1e2, T)
                if bound.warnings:
                    continue
                errs = []
                for _ in range(5):
                    c = rng.standard_normal(sys.V_basis.shape[1])
                    u0 = sys.V_basis @ c
                    u0 /= max(np.linalg.norm(u0), 1e-12)
                    errs.append(np.linalg.norm(
                        continuous_state(sys, rep.C_hat, u0, T)
                        - continuous_state(sys, sys.C_star, u0, T)))
                value = bound.ols_bound if pick == "ols" else bound.tr_bound
                ok = ok and (float(np.mean(errs)) <= value)
        checked += 1
    n_exp = 0
    while n_exp < 100:
        M = rng.standard_normal((3, 3))
        if spectral_summary(M).defective:
            continue
        for t in (0.5, 1.0, 2.0):
            ok = ok and exp_norm_bound(M, t) >= np.linalg.norm(matrix_exp(M, t), 2)
        n_exp += 1
    elapsed = time.time() - t0
    ok = ok and elapsed < 30.0
    report(4, "theorem bounds dominate measured trajectory errors and "
           "exp_norm_bound dominates the true exponential norm", ok,
           f"{elapsed:.1f}s")


# ---------------------------------------------------------------------------
# criterion 5: gradient suites


def test_criterion_05_gradient_suites():
    rng = np.random.default_rng(500)
    t0 = time.time()
    worst = 0.0
    # raw network backward on 20 random shapes
    for _ in range(20):
        dims = [int(rng.integers(2, 5)) for _ in range(3)]
        act = str(rng.choice(["tanh", "identity"]))
        net = init_mlp(dims, act, seed=int(rng.integers(1 << 30)))
        x = rng.standard_normal((3, dims[0]))
        up = rng.standard_normal((3, dims[-1]))
        grads, _ = backward(net, x, up)
        h = 1e-6
        for p, g in zip(net.params(), grads):
            flat = p.reshape(-1)
            gf = np.asarray(g).reshape(-1)
            for idx in range(flat.size):
                orig = flat[idx]
                flat[idx] = orig + h
                fp = float(np.sum(forward(net, x) * up))
                flat[idx] = orig - h
                fm = float(np.sum(forward(net, x) * up))
                flat[idx] = orig
                fd = (fp - fm) / (2 * h)
                worst = max(worst, abs(fd - gf[idx]) / max(abs(fd), abs(gf[idx]), 1.0))

    def axis_ind(d):
        basis = np.zeros((1, d))
        basis[0, 0] = 1.0
        return DsIndicator(AutoencoderModel(kind="pca", latent_dim=1,
                                            train_loss=0.0, mean=np.zeros(d),
                                            basis=basis))

    # full-loss gradients across the three resolved kinds, 30 configs
    for i in range(20):
        obj = ["OLS", "mOLS", "TR", "aOLS"][i % 4]
        rm = ResolvedModel.linear(rng.standard_normal((2, 2)), np.eye(2), 0.5)
        model = make_dense_surrogate(2, 2, hidden=(3,), objective=obj,
                                     lambda_=0.7, seed=int(rng.integers(1 << 30)))
        states = rng.standard_normal((3, 2))
        labels = rng.standard_normal((3, 2))
        worst = max(worst, loss_gradient_check(model, rm, axis_ind(2),
                                               states, labels))
    for i in range(5):
        p_c = RDParams(n=2, dt=0.01)
        rm = ResolvedModel.rd(p_c, 4)
        model = make_patch_surrogate(4, hidden=(3,), objective="TR",
                                     lambda_=0.5, seed=i, radius=1)
        states = rng.standard_normal((2, 32))
        labels = rng.standard_normal((2, 32))
        worst = max(worst, loss_gradient_check(model, rm, axis_ind(32),
                                               states, labels))
    for i in range(5):
        p = NSParams(nu=0.01, ny=2)
        from dataclasses import replace

        rm = ResolvedModel.ns(replace(p, dt=stable_dt(p)))
        d = 2 * p.nx * p.ny
        model = make_dense_surrogate(d, p.nx * p.ny, hidden=(3,),
                                     objective="TR", lambda_=0.5, seed=i + 50)
        states = rng.standard_normal((2, d))
        labels = rng.standard_normal((2, p.nx * p.ny))
        drifts = rng.standard_normal((2, d))
        worst = max(worst, loss_gradient_check(model, rm, axis_ind(d),
                                               states, labels, drifts=drifts))
    elapsed = time.time() - t0
    ok = worst < 1e-5 and elapsed < 60.0
    report(5, "network backward and full losses match finite differences on "
           "50 random configurations", ok,
           f"worst rel err {worst:.2e}, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# criterion 6: PDE solver correctness


def test_criterion_06_pde_solvers():
    t0 = time.time()

    def no_reaction(u, v, p):
        return np.zeros_like(u), np.zeros_like(v)

    T = 0.4
    errs = []
    for dt in (0.05, 0.025):
        p = RDParams(n=16, gamma=0.2, dt=dt)
        x = np.arange(p.n) * p.h
        mode = np.sin(2 * np.pi * x / p.domain)[:, None] * np.ones((1, p.n))
        lam = (2 * np.cos(2 * np.pi * p.h / p.domain) - 2) / p.h**2
        u, v = mode.copy(), np.zeros_like(mode)
        for _ in range(int(round(T / dt))):
            u, v = rd_step_cn(u, v, p, reaction=no_reaction)
        errs.append(np.max(np.abs(u - np.exp(p.gamma * lam * T) * mode)))
    order = float(np.log2(errs[0] / errs[1]))

    params = NSParams(nu=0.01, ny=16)
    from dataclasses import replace

    params = replace(params, dt=stable_dt(params))
    u = np.zeros((params.nx + 1, params.ny))
    v = np.zeros((params.nx, params.ny + 1))
    pr = None
    max_div = 0.0
    for k in range(200):
        u, v, pr = ns_step_projection(u, v, pr, params, k * params.dt)
        max_div = max(max_div, float(np.max(np.abs(divergence(u, v, params.h)))))

    rng = np.random.default_rng(600)
    coarse = rng.standard_normal((16, 16))
    ri_exact = np.array_equal(restrict(interpolate(coarse)), coarse)

    elapsed = time.time() - t0
    ok = order >= 1.7 and max_div <= 1e-6 and ri_exact and elapsed < 120.0
    report(6, "CN temporal order >= 1.7, projection divergence <= 1e-6 over "
           "200 steps, restrict o interpolate exact", ok,
           f"order {order:.2f}, max div {max_div:.1e}, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# criteria 7-10 share the two desk sweeps


@pytest.fixture(scope="module")
def rd_results(tmp_path_factory):
    cfg = ExperimentConfig()
    out = str(tmp_path_factory.mktemp("rd_out"))
    data = str(tmp_path_factory.mktemp("rd_data"))
    t0 = time.time()
    res = run_rd_sweep(cfg, data, out, objectives=("OLS", "TR"), seed=0)
    res["elapsed"] = time.time() - t0
    res["gammas"] = cfg.rd_gammas
    return res


@pytest.fixture(scope="module")
def ns_results(tmp_path_factory):
    cfg = ExperimentConfig()
    out = str(tmp_path_factory.mktemp("ns_out"))
    data = str(tmp_path_factory.mktemp("ns_data"))
    t0 = time.time()
    res = run_ns_sweep(cfg, data, out, objectives=("OLS", "TR"), seed=0)
    res["elapsed"] = time.time() - t0
    res["res"] = cfg.ns_re
    return res


def test_criterion_07_rd_direction_of_effect(rd_results):
    g_lo, g_hi = rd_results["gammas"]
    imp = {}
    for g in (g_lo, g_hi):
        o = rd_results[g]["OLS"]["final_mean"]
        t = rd_results[g]["TR"]["final_mean"]
        imp[g] = (o - t) / o
    ok = (imp[g_lo] >= 0.20 and imp[g_hi] > 0.0 and imp[g_lo] >= imp[g_hi]
          and rd_results["elapsed"] < 1800.0)
    report(7, "TR beats OLS on the reaction-diffusion sweep with the "
           "documented severity trend", ok,
           f"improvement {100 * imp[g_lo]:.1f}% @ {g_lo}, "
           f"{100 * imp[g_hi]:.1f}% @ {g_hi}, {rd_results['elapsed']:.0f}s")


def test_criterion_08_ns_direction_of_effect(ns_results):
    ok = ns_results["elapsed"] < 2700.0
    details = []
    for re in ns_results["res"]:
        tk_o = ns_results[re]["OLS"]["t_k"]
        tk_t = ns_results[re]["TR"]["t_k"]
        wins = sum(t >= o for t, o in zip(tk_t, tk_o))
        ok = ok and wins >= 2
        details.append(f"Re={re:g} wins {wins}/3")
    re_hi = max(ns_results["res"])
    tk_o = ns_results[re_hi]["OLS"]["t_k"]
    tk_t = ns_results[re_hi]["TR"]["t_k"]
    early_fail = any(o < t for o, t in zip(tk_o, tk_t))
    ok = ok and early_fail
    report(8, "TR stopping times dominate OLS on the channel-flow sweep and "
           "OLS fails first in at least one high-Re seed", ok,
           "; ".join(details) + f", {ns_results['elapsed']:.0f}s")


def test_criterion_09_ds_error_comovement(rd_results, ns_results):
    worst = 1.0
    for g in rd_results["gammas"]:
        for obj in ("OLS", "TR"):
            worst = min(worst, min(rd_results[g][obj]["spearman"]))
    for re in ns_results["res"]:
        for obj in ("OLS", "TR"):
            worst = min(worst, min(ns_results[re][obj]["spearman"]))
    report(9, "error and distribution-shift curves co-move on every desk run",
           worst > 0.5, f"min spearman {worst:.3f}")


def test_criterion_10_autoencoder_gate(rd_results):
    ok = all(rd_results[g]["gate_reached"]
             and rd_results[g]["ae_loss"] < 1e-3 for g in rd_results["gammas"])
    rng = np.random.default_rng(1000)
    basis = np.linalg.qr(rng.standard_normal((30, 4)))[0]
    data = rng.standard_normal((200, 4)) @ basis.T
    model = fit_pca(data, 4)
    ok = ok and model.train_loss < 1e-10
    report(10, "indicator training meets the reconstruction gate and PCA is "
           "exact on rank-k data", ok,
           f"rank-k loss {model.train_loss:.1e}")


# ---------------------------------------------------------------------------
# criterion 11: determinism


def test_criterion_11_determinism(tmp_path):
    cfg = ExperimentConfig()
    a = str(tmp_path / "a")
    b = str(tmp_path / "b")
    run_linear_toy(cfg, a)
    run_linear_toy(cfg, b)
    ok = True
    for name in ("linear_per_step.csv", "linear_lambda.csv"):
        with open(os.path.join(a, name), "rb") as fa, \
                open(os.path.join(b, name), "rb") as fb:
            ok = ok and fa.read() == fb.read()
    report(11, "repeating the toy experiment yields byte-identical CSVs", ok)
