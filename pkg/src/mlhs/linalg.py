"""Dense linear algebra primitives used by the rest of the package.

Matrices are plain float64 numpy arrays. Factorizations are delegated to
LAPACK through numpy/scipy; the value added here is the contract checking,
the spectral summary used for error bounds, and the matrix-exponential
norm bound.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DegenerateBasisError, FactorizationError, SolverError

# Eigenvector-matrix condition number above which a matrix is treated as
# (numerically) defective. The Jordan-transform condition is not computable
# in floating point, so the eigenvector condition acts as a proxy.
DEFECTIVE_COND = 1e12


@dataclass(frozen=True)
class SpectralSummary:
    """Largest real part of the spectrum and a Jordan-transform condition proxy."""

    eig_max_real: float
    cond_jordan_proxy: float
    defective: bool = False


def svd(M):
    """Thin SVD: returns (U, S, Vt) with U @ diag(S) @ Vt == M."""
    M = np.asarray(M, dtype=float)
    if not np.all(np.isfinite(M)):
        raise ValueError("svd requires finite entries")
    try:
        return np.linalg.svd(M, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise FactorizationError(str(exc)) from exc


def default_rcond(M):
    return max(M.shape) * np.finfo(float).eps


def pseudo_inverse(M, rcond=None):
    """Moore-Penrose pseudo-inverse with singular values <= rcond*s_max zeroed."""
    M = np.asarray(M, dtype=float)
    if rcond is None:
        rcond = default_rcond(M)
    U, S, Vt = svd(M)
    cutoff = rcond * (S[0] if S.size else 0.0)
    inv_s = np.where(S > cutoff, 1.0 / np.where(S > 0, S, 1.0), 0.0)
    return (Vt.T * inv_s) @ U.T


def projector_onto_columns(Vbasis, rcond=None):
    """Orthogonal projector onto the column space of ``Vbasis``."""
    Vbasis = np.atleast_2d(np.asarray(Vbasis, dtype=float))
    if Vbasis.shape[1] > Vbasis.shape[0]:
        raise DegenerateBasisError("more columns than ambient dimension")
    if rcond is None:
        rcond = default_rcond(Vbasis)
    U, S, _ = svd(Vbasis)
    if S.size == 0 or np.any(S <= rcond * S[0]):
        raise DegenerateBasisError("basis is rank deficient")
    Q = U[:, : Vbasis.shape[1]]
    return Q @ Q.T


def matrix_exp(M, t=1.0):
    """exp(M*t) by scaling-and-squaring with Pade approximant (scipy)."""
    M = np.asarray(M, dtype=float)
    if M.shape[0] != M.shape[1]:
        raise ValueError("matrix_exp requires a square matrix")
    E = scipy.linalg.expm(M * t)
    if not np.all(np.isfinite(E)):
        raise OverflowError("matrix exponential overflowed")
    return E


def spectral_summary(M):
    M = np.asarray(M, dtype=float)
    if M.shape[0] != M.shape[1]:
        raise ValueError("spectral_summary requires a square matrix")
    try:
        w, P = np.linalg.eig(M)
    except np.linalg.LinAlgError as exc:
        raise FactorizationError(str(exc)) from exc
    cond = np.linalg.cond(P, 2)
    defective = not np.isfinite(cond) or cond > DEFECTIVE_COND
    if not np.isfinite(cond):
        cond = DEFECTIVE_COND
    return SpectralSummary(float(np.max(w.real)), float(max(cond, 1.0)), defective)


def cg_solve(apply_op, b, tol, maxiter=None, x0=None):
    """Matrix-free conjugate gradient for a symmetric positive definite operator.

    ``apply_op`` maps an array to an array of the same shape. Iterates until
    the residual 2-norm drops to ``tol`` (absolute) and raises SolverError if
    ``maxiter`` iterations do not get there. Returns (x, final_residual_norm).
    """
    b = np.asarray(b, dtype=float)
    if maxiter is None:
        maxiter = 10 * b.size
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - apply_op(x)
    res = np.sqrt(np.vdot(r, r).real)
    if res <= tol:
        return x, float(res)
    p = r.copy()
    rs = res * res
    for _ in range(maxiter):
        Ap = apply_op(p)
        alpha = rs / np.vdot(p, Ap).real
        x = x + alpha * p
        r = r - alpha * Ap
        rs_new = np.vdot(r, r).real
        if np.sqrt(rs_new) <= tol:
            return x, float(np.sqrt(rs_new))
        p = r + (rs_new / rs) * p
        rs = rs_new
    raise SolverError(
        f"conjugate gradient stalled at residual {np.sqrt(rs):.3e} (tol {tol:.1e})"
    )


def exp_norm_bound(M, t):
    """Upper bound on ||exp(M*t)||_2: cond(P) * m^2 * (2 + t^(m-1)) * e^(eig_max*t).

    Valid for diagonalizable M; for defective M the condition proxy may
    under-estimate the Jordan-transform condition.
    """
    M = np.asarray(M, dtype=float)
    if t < 0:
        raise ValueError("t must be nonnegative")
    m = M.shape[0]
    s = spectral_summary(M)
    return s.cond_jordan_proxy * m**2 * (2.0 + t ** (m - 1)) * np.exp(s.eig_max_real * t)
