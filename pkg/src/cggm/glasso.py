"""Sparse precision-matrix estimation by block-wise coordinate descent.

Given a scatter matrix S and penalty level rho, estimates the precision
matrix minimizing ``-log det(T) + tr(S T) + rho * sum w_ij |T_ij]``, the
penalty running over the full matrix including the diagonal.  The algorithm
maintains the working covariance W: the diagonal is pinned at
``S_ii + rho * w_ii`` (the diagonal stationarity condition), and each sweep
refreshes every column by a weighted lasso on the retained block.  The
precision matrix is recovered column-wise from the block-inverse identities
of ``W T = I``, which preserves the exact zeros produced by the lasso.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import ConvergenceError, InputError, NumericalError
from .lasso import _cd_solve
from .model import symmetrize

__all__ = ["GlassoResult", "glasso"]


@dataclass
class GlassoResult:
    """Precision/covariance pair from a block solve.

    ``objective_trace`` holds the per-sweep penalized objective when the
    solve was run with ``collect_trace=True`` (empty otherwise).
    """

    theta: np.ndarray
    w: np.ndarray
    sweeps: int
    converged: bool
    objective_trace: list[float] = field(default_factory=list)


@njit(cache=True, nogil=True)
def _glasso_sweep(s, pen, w, b, theta, inner_tol, inner_max_iter):
    """One full pass over the p columns of W.

    Returns ``(sum of |delta W| over ordered off-diagonal entries, status)``
    with status 0 = ok, 1 = positive definiteness lost, 2 = a column lasso
    stalled.  ``b`` stores each column's lasso solution between sweeps for
    warm starts (row j holds the p-1 coefficients of column j).
    """
    p = s.shape[0]
    d = p - 1
    w11 = np.empty((d, d))
    s12 = np.empty(d)
    pen12 = np.empty(d)
    beta = np.empty(d)
    w12 = np.empty(d)
    delta_sum = 0.0
    for j in range(p):
        r = 0
        for k in range(p):
            if k == j:
                continue
            cidx = 0
            for m in range(p):
                if m == j:
                    continue
                w11[r, cidx] = w[k, m]
                cidx += 1
            s12[r] = s[k, j]
            pen12[r] = pen[k, j]
            beta[r] = b[j, r]
            r += 1
        _, _, ok = _cd_solve(w11, s12, pen12, beta, inner_tol, inner_max_iter)
        if not ok:
            return delta_sum, 2
        for k in range(d):
            acc = 0.0
            for m in range(d):
                acc += w11[k, m] * beta[m]
            w12[k] = acc
        denom = w[j, j]
        r = 0
        for k in range(p):
            if k == j:
                continue
            delta_sum += 2.0 * abs(w12[r] - w[k, j])
            w[k, j] = w12[r]
            w[j, k] = w12[r]
            denom -= w12[r] * beta[r]
            r += 1
        if denom <= 0.0:
            return delta_sum, 1
        th = 1.0 / denom
        theta[j, j] = th
        r = 0
        for k in range(p):
            if k == j:
                continue
            theta[k, j] = -beta[r] * th
            theta[j, k] = theta[k, j]
            b[j, r] = beta[r]
            r += 1
    return delta_sum, 0


def _penalized_objective(s, theta, pen):
    sign, logdet = np.linalg.slogdet(theta)
    if sign <= 0:
        return float("inf")
    return float(-logdet + (s * theta).sum() + (pen * np.abs(theta)).sum())


def glasso(
    s: np.ndarray,
    rho: float,
    theta_weights: np.ndarray | None = None,
    init_w: np.ndarray | None = None,
    tol: float = 1e-4,
    max_sweeps: int = 100,
    inner_tol: float | None = None,
    inner_max_iter: int = 1000,
    collect_trace: bool = False,
) -> GlassoResult:
    """Estimate a sparse precision matrix from the scatter matrix ``s``.

    Parameters
    ----------
    s : symmetric positive semidefinite scatter matrix (p x p).
    rho : penalty level; must be positive unless ``s`` itself is positive
        definite.
    theta_weights : optional element-wise penalty weights (default all ones).
        The diagonal weight scales rho in the pinned W diagonal.
    init_w : optional warm start for W; its diagonal is reset regardless.
    tol : convergence threshold; a solve stops when the mean absolute change
        of the W off-diagonals in a sweep drops to ``tol`` times the mean
        absolute off-diagonal of ``s``.
    collect_trace : record the penalized objective after each sweep.

    Raises
    ------
    InputError for a non-symmetric or non-PSD input, NumericalError when
    positive definiteness is lost mid-sweep, ConvergenceError when a column
    subproblem stalls.
    """
    s = np.ascontiguousarray(np.asarray(s, dtype=float))
    p = s.shape[0]
    if s.ndim != 2 or s.shape[1] != p:
        raise InputError(f"s must be square, got shape {s.shape}")
    scale = max(1.0, float(np.abs(s).max()))
    if np.abs(s - s.T).max() > 1e-10 * scale:
        raise InputError("s must be symmetric")
    if not np.isfinite(s).all():
        raise InputError("non-finite entry in s")
    if not np.isfinite(rho) or rho < 0:
        raise InputError(f"rho must be finite and nonnegative, got {rho}")
    eigs = np.linalg.eigvalsh(s)
    if eigs[0] < -1e-8 * max(1.0, eigs[-1]):
        raise InputError("s must be positive semidefinite")
    if rho == 0 and eigs[0] <= 1e-12 * max(1.0, eigs[-1]):
        raise InputError("rho = 0 requires a positive definite s")

    if theta_weights is None:
        weights = np.ones((p, p))
    else:
        weights = np.asarray(theta_weights, dtype=float)
        if weights.shape != (p, p):
            raise InputError(f"theta_weights must be {p} x {p}, got {weights.shape}")
        if not np.isfinite(weights).all() or (weights < 0).any():
            raise InputError("theta_weights must be finite and nonnegative")
    pen = np.ascontiguousarray(rho * weights)

    if init_w is None:
        w = s.copy()
    else:
        w = np.ascontiguousarray(np.asarray(init_w, dtype=float).copy())
        if w.shape != (p, p):
            raise InputError(f"init_w must be {p} x {p}, got {w.shape}")
    # pinned diagonal: stationarity of the penalized objective in theta_ii
    np.fill_diagonal(w, np.diag(s) + np.diag(pen))

    if p == 1:
        theta = np.array([[1.0 / w[0, 0]]])
        trace = [_penalized_objective(s, theta, pen)] if collect_trace else []
        return GlassoResult(theta, w.copy(), 0, True, trace)

    if inner_tol is None:
        inner_tol = max(tol * 1e-4, 1e-12)
    b = np.zeros((p, p - 1))
    theta = np.zeros((p, p))
    off_count = p * (p - 1)
    mean_off = (np.abs(s).sum() - np.abs(np.diag(s)).sum()) / off_count
    thresh = tol * mean_off
    trace: list[float] = []
    converged = False
    sweeps = 0
    for _ in range(max_sweeps):
        delta_sum, status = _glasso_sweep(s, pen, w, b, theta, inner_tol, inner_max_iter)
        sweeps += 1
        if status == 1:
            raise NumericalError(
                f"positive definiteness lost in sweep {sweeps} (rho={rho:g}); "
                "the scatter matrix may be badly conditioned"
            )
        if status == 2:
            raise ConvergenceError(
                f"a column lasso stalled in sweep {sweeps}", last=theta
            )
        if collect_trace:
            trace.append(_penalized_objective(s, theta, pen))
        if delta_sum / off_count <= thresh:
            converged = True
            break
    return GlassoResult(symmetrize(theta), symmetrize(w), sweeps, converged, trace)
