"""The three experiment suites and their CSV outputs.

linear_toy: the 2-D synthetic comparison of OLS / ridge / TR closed-form
estimators on partially unstable diagonal dynamics. rd_sweep: coarse-fine
correction learning for FitzHugh-Nagumo across diffusion scales. ns_sweep:
pressure-surrogate channel flow across Reynolds numbers with stopping-time
comparison. All runs are seeded and deterministic; outputs are CSV files
plus a checksum manifest.
"""

import csv
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .datasets import file_checksum, load_dataset
from .errors import BlowUpError, DependencyError
from .linear import (LinearSystem, ds_metric_linear, fit_mols, fit_ols,
                     fit_tr, generate_linear_data, simulate_linear,
                     theorem_bound, trajectory_error_curve, write_linear_csv)
from .manifold import DsIndicator, fit_pca, search_latent_dim
from .ns import NSParams, make_ns_dataset, ns_step_projection, stable_dt
from .rd import RDParams, make_rd_dataset, rd_step_cn
from .runtime import evaluate_run, run_hybrid, spearman, stopping_time, write_run_csv
from .seeding import rng_from
from .training import (ResolvedModel, make_dense_surrogate,
                       make_patch_surrogate, train_surrogate)


# ---------------------------------------------------------------------------
# linear toy


def linear_toy_system(seed):
    """Partially unstable 2-D toy: closed loop diag(0.95, 1.2), B = I,
    C* uniform in [0,1]^{2x2}, data subspace span(e1)."""
    rng = rng_from(seed, "toy")
    F = np.diag([0.95, 1.2])
    C_star = rng.uniform(0.0, 1.0, size=(2, 2))
    A = F - C_star
    V = np.array([[1.0], [0.0]])
    return LinearSystem(A=A, B=np.eye(2), C_star=C_star, V_basis=V), rng


def run_linear_toy(cfg, out_dir):
    """Appendix-style toy comparison; returns a summary dict and writes CSVs."""
    os.makedirs(out_dir, exist_ok=True)
    n_steps = cfg.linear_steps
    lam_grid = cfg.lambda_grid
    lam_star = max(lam_grid)
    n_seeds = cfg.linear_seeds
    err = {"ols": [], "tr": [], "mols": {l: [] for l in lam_grid},
           "tr_grid": {l: [] for l in lam_grid}}
    mols_curves = {l: [] for l in lam_grid}
    ds = {"ols": [], "tr": []}
    bounds = {"ols": [], "tr": []}
    for i in range(n_seeds):
        s = cfg.linear_base_seed + i
        sys, rng = linear_toy_system(s)
        data = generate_linear_data(sys, n_traj=1, n_steps=n_steps,
                                    noise_sigma=cfg.linear_sigma, seed=(s, "data"))
        rep_ols = fit_ols(data)
        reps_tr = {l: fit_tr(data, sys, l) for l in lam_grid}
        reps_mols = {l: fit_mols(data, l) for l in lam_grid}
        u0 = sys.V_basis[:, 0] * rng.standard_normal()
        truth = simulate_linear(sys, sys.C_star, u0, n_steps)
        Pperp = sys.p_vperp()

        def curves(C_hat):
            try:
                sim = simulate_linear(sys, C_hat, u0, n_steps)
            except BlowUpError as exc:
                sim = np.full((n_steps + 1, sys.m), 1e300)
                sim[: exc.states.shape[0]] = exc.states
            e = trajectory_error_curve(truth, sim)
            return e, ds_metric_linear(sim, Pperp)

        e_ols, d_ols = curves(rep_ols.C_hat)
        e_tr, d_tr = curves(reps_tr[lam_star].C_hat)
        err["ols"].append(e_ols)
        err["tr"].append(e_tr)
        ds["ols"].append(d_ols)
        ds["tr"].append(d_tr)
        for l in lam_grid:
            err["tr_grid"][l].append(curves(reps_tr[l].C_hat)[0][-1])
            mc = curves(reps_mols[l].C_hat)[0]
            mols_curves[l].append(mc)
            err["mols"][l].append(mc[-1])
        delta_ols = _apriori_delta(sys, rep_ols.C_hat, data)
        delta_tr = _apriori_delta(sys, reps_tr[lam_star].C_hat, data)
        bounds["ols"].append([theorem_bound(sys, rep_ols.C_hat, delta_ols,
                                            lam_star, max(k, 1e-9)).ols_bound
                              for k in range(n_steps + 1)])
        bounds["tr"].append([theorem_bound(sys, reps_tr[lam_star].C_hat, delta_tr,
                                           lam_star, max(k, 1e-9)).tr_bound
                             for k in range(n_steps + 1)])
    mean = lambda seq: np.mean(np.asarray(seq), axis=0)
    best_l = _best_mols(err)
    e_mols = mean(mols_curves[best_l])
    e_ols_m, e_tr_m = mean(err["ols"]), mean(err["tr"])
    d_ols_m, d_tr_m = mean(ds["ols"]), mean(ds["tr"])
    b_ols_m, b_tr_m = mean(bounds["ols"]), mean(bounds["tr"])
    rows = [{"step": k, "error_ols": e_ols_m[k], "error_tr": e_tr_m[k],
             "error_mols": e_mols[k], "ds_ols": d_ols_m[k], "ds_tr": d_tr_m[k],
             "bound_ols": b_ols_m[k], "bound_tr": b_tr_m[k]}
            for k in range(n_steps + 1)]
    write_linear_csv(os.path.join(out_dir, "linear_per_step.csv"), rows)
    with open(os.path.join(out_dir, "linear_lambda.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["lambda", "terminal_ols", "terminal_tr", "terminal_mols"])
        term_ols = float(np.mean([e[-1] for e in err["ols"]]))
        for l in lam_grid:
            w.writerow([format(l, ".17g"), format(term_ols, ".17g"),
                        format(float(np.mean(err["tr_grid"][l])), ".17g"),
                        format(float(np.mean(err["mols"][l])), ".17g")])
    summary = {
        "terminal_ols": term_ols,
        "terminal_tr": {l: float(np.mean(err["tr_grid"][l])) for l in lam_grid},
        "terminal_mols": {l: float(np.mean(err["mols"][l])) for l in lam_grid},
        "ols_curve": e_ols_m,
    }
    write_manifest(out_dir)
    return summary


def _best_mols(err):
    means = {l: float(np.mean(v)) for l, v in err["mols"].items()}
    return min(means, key=means.get)


def _apriori_delta(sys, C_hat, data):
    resid = (C_hat - sys.C_star) @ data.U
    return max(float(np.mean(np.sum(resid**2, axis=0))), 1e-30)


# ---------------------------------------------------------------------------
# reaction-diffusion sweep


def rd_setting(cfg, gamma):
    p_c = RDParams(n=cfg.rd_coarse_n, gamma=gamma)
    p_f = RDParams(n=cfg.rd_fine_n, gamma=gamma)
    return p_c, p_f


def rd_dataset_path(data_dir, gamma, cfg):
    return os.path.join(data_dir, f"rd_gamma{gamma:g}_n{cfg.rd_fine_n}.bin")


def build_rd_dataset(cfg, gamma, data_dir, seed=0):
    os.makedirs(data_dir, exist_ok=True)
    path = rd_dataset_path(data_dir, gamma, cfg)
    if not os.path.exists(path):
        p_c, p_f = rd_setting(cfg, gamma)
        data = make_rd_dataset(p_c, p_f, cfg.rd_n_traj, cfg.rd_n_steps,
                               cfg.rd_n_discard, seed=seed)
        data.save(path)
    return load_dataset(path)


def rd_truth_trajectory(p_f, n_burn, horizon, seed):
    """Burn-in then horizon+1 recorded fine states (flattened)."""
    rng = rng_from(seed, "rd-eval")
    u = rng.standard_normal((p_f.n, p_f.n))
    v = rng.standard_normal((p_f.n, p_f.n))
    for _ in range(n_burn):
        u, v = rd_step_cn(u, v, p_f)
    states = [np.stack([u, v]).ravel()]
    for _ in range(horizon):
        u, v = rd_step_cn(u, v, p_f)
        states.append(np.stack([u, v]).ravel())
    return np.array(states)


def run_rd_sweep(cfg, data_dir, out_dir, objectives=None, seed=0):
    """Returns {gamma: {objective: {...}}} and writes run/summary CSVs."""
    os.makedirs(out_dir, exist_ok=True)
    objectives = list(objectives or cfg.objectives)
    results = {}
    summary_rows = []
    for gamma in cfg.rd_gammas:
        p_c, p_f = rd_setting(cfg, gamma)
        data = build_rd_dataset(cfg, gamma, data_dir, seed=seed)
        rm = ResolvedModel.rd(p_c, p_f.n)
        ae, reached = search_latent_dim(data.states, cfg.latent_grid)
        ind = DsIndicator(ae)
        truths = [rd_truth_trajectory(p_f, cfg.rd_n_discard, cfg.horizon, (seed, s))
                  for s in range(cfg.n_seeds)]
        results[gamma] = {"gate_reached": reached, "latent_dim": ae.latent_dim,
                          "ae_loss": ae.train_loss}
        for obj in objectives:
            model = make_patch_surrogate(
                p_f.n, hidden=(cfg.rd_hidden,), objective=obj,
                lambda_=cfg.lambda_ if obj in ("TR", "mOLS") else 0.0,
                seed=(seed, obj), radius=cfg.rd_radius)
            if obj == "mOLS":
                model.lambda_ = 1e-6
            train_surrogate(model, rm, ind if obj == "TR" else None, data,
                            epochs=cfg.rd_epochs, seed=(seed, obj, "train"),
                            lr=cfg.rd_lr, batch_size=cfg.rd_batch,
                            log_path=os.path.join(
                                out_dir, f"rd_train_g{gamma:g}_{obj}.csv"))
            finals, spearmans, runs = [], [], []
            for s in range(cfg.n_seeds):
                run = run_hybrid(rm, model, truths[s][0], cfg.horizon)
                evaluate_run(run, truths[s], ind)
                write_run_csv(os.path.join(
                    out_dir, f"rd_run_g{gamma:g}_{obj}_s{s}.csv"), run)
                finals.append(run.rel_error[-1] if run.blew_up_at is None
                              else float("inf"))
                spearmans.append(spearman(run.rel_error, run.ds_curve))
                runs.append(run)
            results[gamma][obj] = {
                "final_mean": float(np.mean(finals)),
                "final_std": float(np.std(finals)),
                "finals": finals,
                "spearman": spearmans,
                "runs": runs,
            }
            summary_rows.append([f"{gamma:g}", obj,
                                 format(float(np.mean(finals)), ".6g"),
                                 format(float(np.std(finals)), ".6g")])
        if "OLS" in objectives and "TR" in objectives:
            d = diff_percent(results[gamma]["OLS"]["final_mean"],
                             results[gamma]["TR"]["final_mean"])
            summary_rows.append([f"{gamma:g}", "Diff", format(d, ".6g"), ""])
    _write_summary(os.path.join(out_dir, "rd_summary.csv"),
                   ["gamma", "objective", "final_rel_error_mean",
                    "final_rel_error_std"], summary_rows)
    write_manifest(out_dir)
    return results


# ---------------------------------------------------------------------------
# channel-flow sweep


def ns_dt_scale(cfg, re):
    """dt multiplier for a Reynolds number, matched by position in ns_re.

    Reynolds numbers beyond the configured scale list reuse its last entry.
    """
    res = list(cfg.ns_re)
    idx = res.index(re) if re in res else len(res) - 1
    return cfg.ns_dt_scale[min(idx, len(cfg.ns_dt_scale) - 1)]


def ns_setting(cfg, re):
    params = NSParams(nu=1.0 / re, ny=cfg.ns_ny)
    return replace(params, dt=ns_dt_scale(cfg, re) * stable_dt(params))


def ns_dataset_path(data_dir, re, cfg):
    return os.path.join(data_dir, f"ns_re{re:g}_ny{cfg.ns_ny}.bin")


def build_ns_dataset(cfg, re, data_dir, seed=0):
    os.makedirs(data_dir, exist_ok=True)
    path = ns_dataset_path(data_dir, re, cfg)
    if not os.path.exists(path):
        params = ns_setting(cfg, re)
        data = make_ns_dataset(params, cfg.ns_n_traj, cfg.ns_n_steps,
                               cfg.ns_n_discard, seed=seed,
                               dt_scale=ns_dt_scale(cfg, re))
        data.save(path)
    return load_dataset(path)


def ns_truth_trajectory(params, n_burn, horizon, seed):
    """Returns (face state at collection start, centered truth states, y0)."""
    rng = rng_from(seed, "ns-eval")
    y0 = 0.3 + 0.4 * rng.random()
    tp = replace(params, jet_y0=y0)
    from .ns import center_velocities

    u = np.zeros((tp.nx + 1, tp.ny))
    v = np.zeros((tp.nx, tp.ny + 1))
    p = None
    for k in range(n_burn):
        u, v, p = ns_step_projection(u, v, p, tp, k * tp.dt)
    start = np.concatenate([u.ravel(), v.ravel()])
    states = [center_velocities(u, v).ravel()]
    for k in range(horizon):
        u, v, p = ns_step_projection(u, v, p, tp, (n_burn + k) * tp.dt)
        states.append(center_velocities(u, v).ravel())
    return start, np.array(states), y0


def run_ns_sweep(cfg, data_dir, out_dir, objectives=None, seed=0):
    """Returns {re: {objective: {...}}} with stopping times; writes CSVs."""
    os.makedirs(out_dir, exist_ok=True)
    objectives = list(objectives or cfg.objectives)
    results = {}
    summary_rows = []
    for re in cfg.ns_re:
        params = ns_setting(cfg, re)
        data = build_ns_dataset(cfg, re, data_dir, seed=seed)
        params = replace(params, dt=data.dt)
        ae, reached = search_latent_dim(data.states, cfg.latent_grid)
        ind = DsIndicator(ae)
        evals = [ns_truth_trajectory(params, cfg.ns_n_discard, cfg.horizon,
                                     (seed, s)) for s in range(cfg.n_seeds)]
        results[re] = {"gate_reached": reached, "latent_dim": ae.latent_dim,
                       "ae_loss": ae.train_loss}
        d_state = 2 * params.nx * params.ny
        for obj in objectives:
            model = make_dense_surrogate(
                d_state, params.nx * params.ny, hidden=(cfg.ns_hidden,),
                objective=obj, activation="relu",
                lambda_=cfg.lambda_ if obj in ("TR", "mOLS") else 0.0,
                seed=(seed, obj, f"re{re:g}"))
            if obj == "mOLS":
                model.lambda_ = 1e-6
            rm_train = ResolvedModel.ns(params)
            train_surrogate(model, rm_train, ind if obj == "TR" else None,
                            data, epochs=cfg.ns_epochs,
                            seed=(seed, obj, "train"), lr=cfg.lr,
                            log_path=os.path.join(
                                out_dir, f"ns_train_re{re:g}_{obj}.csv"))
            tks, finals, spearmans, runs = [], [], [], []
            for s in range(cfg.n_seeds):
                start, truth, y0 = evals[s]
                rm_run = ResolvedModel.ns(replace(params, jet_y0=y0))
                run = run_hybrid(rm_run, model, start, cfg.horizon,
                                 t0=cfg.ns_n_discard * params.dt)
                evaluate_run(run, truth, ind)
                write_run_csv(os.path.join(
                    out_dir, f"ns_run_re{re:g}_{obj}_s{s}.csv"), run)
                tks.append(stopping_time(run, cfg.k_threshold))
                finals.append(run.rel_error[-1] if run.blew_up_at is None
                              else float("inf"))
                spearmans.append(spearman(run.rel_error, run.ds_curve))
                runs.append(run)
            results[re][obj] = {
                "t_k": tks, "finals": finals, "spearman": spearmans,
                "runs": runs, "t_k_mean": float(np.mean(tks)),
            }
            summary_rows.append([f"{re:g}", obj,
                                 format(float(np.mean(tks)), ".6g"),
                                 format(float(np.std(tks)), ".6g")])
        if "OLS" in objectives and "TR" in objectives:
            fo = results[re]["OLS"]
            ft = results[re]["TR"]
            fin_o = np.mean([f for f in fo["finals"] if np.isfinite(f)] or [np.inf])
            fin_t = np.mean([f for f in ft["finals"] if np.isfinite(f)] or [np.inf])
            d = diff_percent(fin_o, fin_t) if np.isfinite(fin_o) else float("nan")
            summary_rows.append([f"{re:g}", "Diff", format(d, ".6g"), ""])
    _write_summary(os.path.join(out_dir, "ns_summary.csv"),
                   ["re", "objective", "t_k_mean", "t_k_std"], summary_rows)
    write_manifest(out_dir)
    return results


# ---------------------------------------------------------------------------
# shared helpers


def diff_percent(ols, tr):
    """Table-style improvement row: (OLS - TR) / OLS in percent."""
    if ols == 0:
        return float("nan")
    return 100.0 * (ols - tr) / ols


def _write_summary(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow(row)


MANIFEST_NAME = "manifest.txt"


def write_manifest(directory):
    """Checksum manifest of every regular file in ``directory`` (recursive)."""
    entries = []
    for root, _, files in os.walk(directory):
        for name in sorted(files):
            if name == MANIFEST_NAME:
                continue
            path = os.path.join(root, name)
            rel = os.path.relpath(path, directory)
            entries.append((rel, file_checksum(path)))
    entries.sort()
    with open(os.path.join(directory, MANIFEST_NAME), "w") as fh:
        for rel, digest in entries:
            fh.write(f"{digest}  {rel}\n")
    return entries


def verify_manifest(directory):
    """Re-checksums every manifest entry; returns a list of mismatches."""
    path = os.path.join(directory, MANIFEST_NAME)
    if not os.path.exists(path):
        raise DependencyError(f"no manifest in {directory}")
    bad = []
    with open(path) as fh:
        for line in fh:
            digest, rel = line.rstrip("\n").split("  ", 1)
            target = os.path.join(directory, rel)
            if not os.path.exists(target) or file_checksum(target) != digest:
                bad.append(rel)
    return bad
