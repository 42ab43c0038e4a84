"""Command-line front end.

Subcommands: gen-data, train-ae, train, simulate, experiment, verify.
Exit codes: 0 success, 2 configuration error, 3 missing dependency
(dataset/checkpoint), 4 numeric failure (blow-up or quality gate).
"""

import argparse
import os
import sys

import numpy as np

from .config import default_config_text, load_config
from .datasets import load_dataset
from .errors import (BlowUpError, ConfigError, DependencyError, GateError,
                     MlhsError, SolverError)
from .experiments import (build_ns_dataset, build_rd_dataset,
                          ns_dataset_path, ns_setting, ns_truth_trajectory,
                          rd_dataset_path, rd_setting, rd_truth_trajectory,
                          run_linear_toy, run_ns_sweep, run_rd_sweep,
                          verify_manifest, write_manifest)
from .manifold import (DsIndicator, load_autoencoder, save_autoencoder,
                       search_latent_dim)
from .runtime import evaluate_run, run_hybrid, write_run_csv
from .training import (ResolvedModel, load_surrogate, make_dense_surrogate,
                       make_patch_surrogate, save_surrogate, train_surrogate)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DEPENDENCY = 3
EXIT_NUMERIC = 4


def _settings(cfg):
    """(tag, value) pairs of the active experiment sweep."""
    if cfg.experiment == "rd_sweep":
        return [(f"g{g:g}", g) for g in cfg.rd_gammas]
    if cfg.experiment == "ns_sweep":
        return [(f"re{r:g}", r) for r in cfg.ns_re]
    return [("toy", None)]


def _dataset_path(cfg, value):
    if cfg.experiment == "rd_sweep":
        return rd_dataset_path(cfg.data_dir, value, cfg)
    return ns_dataset_path(cfg.data_dir, value, cfg)


def _load_or_build(cfg, value, seed, auto):
    path = _dataset_path(cfg, value)
    if not os.path.exists(path) and not auto:
        raise DependencyError(
            f"dataset {path} missing; run `mlhs gen-data` first or pass --auto")
    if cfg.experiment == "rd_sweep":
        return build_rd_dataset(cfg, value, cfg.data_dir, seed=seed)
    return build_ns_dataset(cfg, value, cfg.data_dir, seed=seed)


def cmd_gen_data(cfg, args):
    os.makedirs(cfg.data_dir, exist_ok=True)
    if cfg.experiment == "linear_toy":
        _gen_linear(cfg, args)
    else:
        for _, value in _settings(cfg):
            data = _load_or_build(cfg, value, args.seed, auto=True)
            if args.export_csv:
                base = os.path.splitext(os.path.basename(
                    _dataset_path(cfg, value)))[0]
                data.export_csv(os.path.join(args.export_csv, base + ".csv"))
    write_manifest(cfg.data_dir)
    return EXIT_OK


def _gen_linear(cfg, args):
    from .datasets import TrajectoryDataset
    from .experiments import linear_toy_system
    from .linear import generate_linear_data

    for i in range(cfg.linear_seeds):
        s = cfg.linear_base_seed + i
        path = os.path.join(cfg.data_dir, f"linear_s{s}.bin")
        if os.path.exists(path):
            continue
        sys_, _ = linear_toy_system(s)
        data = generate_linear_data(sys_, n_traj=1, n_steps=cfg.linear_steps,
                                    noise_sigma=cfg.linear_sigma,
                                    seed=(s, "data"))
        ds = TrajectoryDataset(kind="linear", states=data.U.T, labels=data.Y.T,
                               dt=1.0, nx=sys_.m, ny=1,
                               traj_len=data.U.shape[1])
        ds.save(path)
        if args.export_csv:
            ds.export_csv(os.path.join(args.export_csv, f"linear_s{s}.csv"))


def _ae_path(cfg, tag):
    return os.path.join(cfg.out_dir, f"ae_{cfg.experiment}_{tag}.ckpt")


def cmd_train_ae(cfg, args):
    if cfg.experiment == "linear_toy":
        print("linear_toy uses the known subspace projector; no autoencoder needed")
        return EXIT_OK
    os.makedirs(cfg.out_dir, exist_ok=True)
    for tag, value in _settings(cfg):
        data = _load_or_build(cfg, value, args.seed, args.auto)
        ae, reached = search_latent_dim(data.states, cfg.latent_grid)
        if not reached and not args.force:
            raise GateError(ae.train_loss, 1e-3)
        save_autoencoder(_ae_path(cfg, tag), ae)
        print(f"{tag}: latent_dim={ae.latent_dim} mean_F2={ae.train_loss:.3e}"
              f"{'' if reached else ' (gate missed, forced)'}")
    return EXIT_OK


def _surrogate_path(cfg, tag, objective):
    return os.path.join(cfg.out_dir, f"model_{cfg.experiment}_{tag}_{objective}.ckpt")


def cmd_train(cfg, args):
    if cfg.experiment == "linear_toy":
        print("linear_toy estimators are closed form; run `mlhs experiment`")
        return EXIT_OK
    os.makedirs(cfg.out_dir, exist_ok=True)
    objectives = [args.objective] if args.objective else list(cfg.objectives)
    for tag, value in _settings(cfg):
        data = _load_or_build(cfg, value, args.seed, args.auto)
        ind = None
        if "TR" in objectives:
            ae_path = _ae_path(cfg, tag)
            if not os.path.exists(ae_path):
                if not args.auto:
                    raise DependencyError(
                        f"indicator checkpoint {ae_path} missing; "
                        "run `mlhs train-ae` first or pass --auto")
                cmd_train_ae(cfg, args)
            ind = DsIndicator(load_autoencoder(ae_path), force=args.force)
        if cfg.experiment == "rd_sweep":
            p_c, p_f = rd_setting(cfg, value)
            rm = ResolvedModel.rd(p_c, p_f.n)
            epochs = cfg.rd_epochs
        else:
            from dataclasses import replace

            params = replace(ns_setting(cfg, value), dt=data.dt)
            rm = ResolvedModel.ns(params)
            epochs = cfg.ns_epochs
        for obj in objectives:
            if cfg.experiment == "rd_sweep":
                model = make_patch_surrogate(
                    p_f.n, hidden=(cfg.rd_hidden,), objective=obj,
                    lambda_=cfg.lambda_ if obj == "TR" else
                    (1e-6 if obj == "mOLS" else 0.0),
                    seed=(args.seed, obj), radius=cfg.rd_radius)
            else:
                model = make_dense_surrogate(
                    data.states.shape[1], data.labels.shape[1],
                    hidden=(cfg.ns_hidden,), objective=obj,
                    lambda_=cfg.lambda_ if obj == "TR" else
                    (1e-6 if obj == "mOLS" else 0.0),
                    seed=(args.seed, obj, tag))
            train_surrogate(model, rm, ind if obj == "TR" else None, data,
                            epochs=epochs, seed=(args.seed, obj, "train"),
                            lr=cfg.lr,
                            log_path=os.path.join(
                                cfg.out_dir, f"train_{tag}_{obj}.csv"))
            save_surrogate(_surrogate_path(cfg, tag, obj), model)
            print(f"trained {obj} for {tag}")
    return EXIT_OK


def cmd_simulate(cfg, args):
    if cfg.experiment == "linear_toy":
        print("linear_toy simulation is part of `mlhs experiment`")
        return EXIT_OK
    from dataclasses import replace

    os.makedirs(cfg.out_dir, exist_ok=True)
    objectives = [args.objective] if args.objective else list(cfg.objectives)
    for tag, value in _settings(cfg):
        ae_path = _ae_path(cfg, tag)
        ind = None
        if os.path.exists(ae_path):
            ind = DsIndicator(load_autoencoder(ae_path), force=True)
        data = _load_or_build(cfg, value, args.seed, args.auto)
        for obj in objectives:
            mpath = _surrogate_path(cfg, tag, obj)
            if not os.path.exists(mpath):
                raise DependencyError(
                    f"checkpoint {mpath} missing; run `mlhs train` first")
            model = load_surrogate(mpath)
            for s in range(cfg.n_seeds):
                if cfg.experiment == "rd_sweep":
                    p_c, p_f = rd_setting(cfg, value)
                    rm = ResolvedModel.rd(p_c, p_f.n)
                    truth = rd_truth_trajectory(p_f, cfg.rd_n_discard,
                                                cfg.horizon, (args.seed, s))
                    start = truth[0]
                    t0 = 0.0
                else:
                    params = replace(ns_setting(cfg, value), dt=data.dt)
                    start, truth, y0 = ns_truth_trajectory(
                        params, cfg.ns_n_discard, cfg.horizon, (args.seed, s))
                    rm = ResolvedModel.ns(replace(params, jet_y0=y0))
                    t0 = cfg.ns_n_discard * params.dt
                run = run_hybrid(rm, model, start, cfg.horizon, t0=t0)
                evaluate_run(run, truth, ind)
                out = os.path.join(cfg.out_dir, f"run_{tag}_{obj}_s{s}.csv")
                write_run_csv(out, run)
                note = "" if run.blew_up_at is None else \
                    f" (blew up at step {run.blew_up_at})"
                print(f"{tag} {obj} seed {s}: "
                      f"final rel_error {run.rel_error[-1]:.3e}{note}")
    return EXIT_OK


def cmd_experiment(cfg, args):
    if cfg.experiment != "linear_toy" and not args.auto:
        for _, value in _settings(cfg):
            path = _dataset_path(cfg, value)
            if not os.path.exists(path):
                raise DependencyError(
                    f"dataset {path} missing; run `mlhs gen-data` or pass --auto")
    if cfg.experiment == "linear_toy":
        run_linear_toy(cfg, cfg.out_dir)
    elif cfg.experiment == "rd_sweep":
        run_rd_sweep(cfg, cfg.data_dir, cfg.out_dir, seed=args.seed)
    else:
        run_ns_sweep(cfg, cfg.data_dir, cfg.out_dir, seed=args.seed)
    print(f"experiment {cfg.experiment} complete; results in {cfg.out_dir}")
    return EXIT_OK


def cmd_verify(cfg, args):
    status = EXIT_OK
    for directory in (cfg.data_dir, cfg.out_dir):
        if not os.path.isdir(directory):
            continue
        try:
            bad = verify_manifest(directory)
        except DependencyError as exc:
            print(f"{directory}: {exc}")
            status = EXIT_DEPENDENCY
            continue
        if bad:
            print(f"{directory}: checksum mismatch for {', '.join(bad)}")
            status = EXIT_DEPENDENCY
        else:
            print(f"{directory}: manifest verified")
    return status


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mlhs",
        description="Hybrid simulation with learned unresolved maps")
    parser.add_argument("--print-defaults", action="store_true",
                        help="print the default config file and exit")
    sub = parser.add_subparsers(dest="command")
    for name in ("gen-data", "train-ae", "train", "simulate", "experiment",
                 "verify"):
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="config file path")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--auto", action="store_true",
                       help="build missing upstream artifacts")
        p.add_argument("--full", action="store_true",
                       help="use the full paper sweep grids (slow)")
        p.add_argument("--export-csv", default=None,
                       help="directory for CSV copies of generated datasets")
        p.add_argument("--force", action="store_true",
                       help="override the autoencoder quality gate")
        if name in ("train", "simulate"):
            p.add_argument("--objective", default=None,
                           choices=("OLS", "mOLS", "aOLS", "TR"))
    return parser


_COMMANDS = {
    "gen-data": cmd_gen_data,
    "train-ae": cmd_train_ae,
    "train": cmd_train,
    "simulate": cmd_simulate,
    "experiment": cmd_experiment,
    "verify": cmd_verify,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.print_defaults:
        print(default_config_text(), end="")
        return EXIT_OK
    if args.command is None:
        parser.print_help()
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config)
        if args.full:
            cfg.rd_gammas = cfg.rd_gammas_full
            cfg.ns_re = cfg.ns_re_full
            print("full sweep grids enabled; expect multi-hour runtimes")
        if args.export_csv:
            os.makedirs(args.export_csv, exist_ok=True)
        return _COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DependencyError as exc:
        print(f"missing dependency: {exc}", file=sys.stderr)
        return EXIT_DEPENDENCY
    except (BlowUpError, GateError, SolverError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except MlhsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
