"""Closed-loop hybrid simulation and its diagnostics.

The hybrid recursion steps the resolved model with surrogate-predicted
labels, u_{k+1} = step(u_k, phi(u_k), t_k), recording blow-up instead of
raising. Diagnostics follow the experiment conventions: per-step relative
error against a ground-truth trajectory, the DS indicator value along the
run, and the stopping time t_K of the largest compliant error prefix.
"""

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from .manifold import ds_value
from .training import resolved_step, surrogate_predict

BLOWUP_FACTOR = 1e6


@dataclass
class SimRun:
    states: np.ndarray              # (n_recorded, d) observed states
    rel_error: np.ndarray = None
    ds_curve: np.ndarray = None
    blew_up_at: int = None
    abs_error_fallback: bool = False


def run_hybrid(rm, surrogate, u0, n_steps, t0=0.0, ceiling_factor=BLOWUP_FACTOR):
    """Iterate the hybrid dynamics for n_steps; returns a SimRun of observed states.

    On NaN/Inf or when the state norm exceeds ceiling_factor times the
    initial norm the run stops and the blow-up step index is recorded.
    """
    u = np.asarray(u0, dtype=float).ravel()
    ceiling = ceiling_factor * max(1.0, float(np.linalg.norm(u)))
    observed = [rm.observe(u)]
    blew_up_at = None
    for k in range(n_steps):
        t = t0 + k * rm.dt
        y = surrogate_predict(surrogate, rm.observe(u)[None, :])[0]
        try:
            u = np.asarray(resolved_step(rm, u, y, t), dtype=float).ravel()
        except Exception:
            blew_up_at = k + 1
            break
        if not np.all(np.isfinite(u)) or np.linalg.norm(u) > ceiling:
            blew_up_at = k + 1
            break
        observed.append(rm.observe(u))
    return SimRun(states=np.array(observed), blew_up_at=blew_up_at)


def evaluate_run(run, truth, ind=None):
    """Fill the error and DS curves of a run against a truth trajectory.

    ``truth`` is (n, d) in the observed space and must cover the recorded
    prefix. Zero-norm truth states switch that step to absolute error and
    flag the run.
    """
    truth = np.atleast_2d(np.asarray(truth, dtype=float))
    n = run.states.shape[0]
    if truth.shape[0] < n:
        raise ValueError("truth trajectory shorter than the run")
    diff = np.linalg.norm(run.states - truth[:n], axis=1)
    norms = np.linalg.norm(truth[:n], axis=1)
    zero = norms == 0.0
    if np.any(zero):
        warnings.warn("zero-norm truth states: absolute error used there")
        run.abs_error_fallback = True
    run.rel_error = np.where(zero, diff, diff / np.where(zero, 1.0, norms))
    if ind is not None:
        run.ds_curve = ds_value(ind, run.states)
    return run


def stopping_time(run, K=100.0):
    """Last step index of the prefix with rel_error <= K throughout.

    A run whose recorded prefix is fully compliant but ended in blow-up is
    credited only up to the last recorded step.
    """
    if K <= 0:
        raise ValueError("K must be positive")
    if run.rel_error is None:
        raise ValueError("evaluate_run must fill rel_error first")
    bad = np.nonzero(~(run.rel_error <= K))[0]
    if bad.size == 0:
        return run.rel_error.size - 1
    return int(bad[0]) - 1 if bad[0] > 0 else 0


def spearman(a, b):
    """Spearman rank correlation of two equal-length sequences."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ra = _ranks(a)
    rb = _ranks(b)
    ra -= ra.mean()
    rb -= rb.mean()
    denom = np.sqrt(np.sum(ra**2) * np.sum(rb**2))
    if denom == 0.0:
        return 0.0
    return float(np.sum(ra * rb) / denom)


def _ranks(x):
    order = np.argsort(x, kind="stable")
    ranks = np.empty(x.size, dtype=float)
    ranks[order] = np.arange(x.size, dtype=float)
    # average ties
    vals, inv, counts = np.unique(x, return_inverse=True, return_counts=True)
    if counts.max() > 1:
        sums = np.zeros(vals.size)
        np.add.at(sums, inv, ranks)
        ranks = sums[inv] / counts[inv]
    return ranks


def write_run_csv(path, run):
    """Run output CSV with columns step,rel_error,ds."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "rel_error", "ds"])
        ds = run.ds_curve if run.ds_curve is not None else np.full(
            run.rel_error.size, np.nan)
        for k, (e, d) in enumerate(zip(run.rel_error, ds)):
            w.writerow([k, format(e, ".17g"), format(d, ".17g")])
