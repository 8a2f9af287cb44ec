"""Weighted L1-penalized quadratic minimization by cyclic coordinate descent.

Solves problems of the form

    minimize_b  0.5 * b' Q b - b' c + penalty * sum_j w_j |b_j|

which covers both the per-column subproblems of the precision-matrix block
solver (Q is the retained covariance block) and plain lasso regression
(Q = X'X/n, c = X'y/n).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import ConvergenceError, InputError

__all__ = [
    "QuadLassoProblem",
    "soft_threshold",
    "solve_quad_lasso",
    "quad_objective",
    "lasso_regression",
]


@njit(cache=True, nogil=True)
def _soft(z, t):
    a = abs(z) - t
    if a <= 0.0:
        return 0.0
    return a if z > 0.0 else -a


@njit(cache=True, nogil=True)
def _cd_sweep(q, c, pen, beta):
    """One cyclic pass in fixed ascending order; returns the largest absolute
    coordinate change."""
    d = beta.shape[0]
    max_delta = 0.0
    for j in range(d):
        qjj = q[j, j]
        if qjj <= 0.0:
            # no curvature on this coordinate (PSD boundary): park it at zero
            if beta[j] != 0.0:
                delta = abs(beta[j])
                if delta > max_delta:
                    max_delta = delta
                beta[j] = 0.0
            continue
        r = c[j] + qjj * beta[j]
        for k in range(d):
            r -= q[j, k] * beta[k]
        new = _soft(r, pen[j]) / qjj
        delta = abs(new - beta[j])
        if delta > max_delta:
            max_delta = delta
        beta[j] = new
    return max_delta


@njit(cache=True, nogil=True)
def _cd_solve(q, c, pen, beta, tol, max_iter):
    delta = 0.0
    for it in range(max_iter):
        delta = _cd_sweep(q, c, pen, beta)
        if delta <= tol:
            return it + 1, delta, True
    return max_iter, delta, False


def soft_threshold(z: float, t: float) -> float:
    """``sgn(z) * max(|z| - t, 0)``, the proximal map of the absolute value."""
    if t < 0:
        raise InputError("threshold must be nonnegative")
    return float(_soft(float(z), float(t)))


@dataclass(frozen=True)
class QuadLassoProblem:
    """Data of one penalized quadratic subproblem.

    ``q`` must be symmetric positive semidefinite; ``weights`` scale the
    penalty per coordinate (all ones when omitted); ``start`` is an optional
    warm start.
    """

    q: np.ndarray
    linear: np.ndarray
    penalty: float
    weights: np.ndarray | None = None
    start: np.ndarray | None = None

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        linear = np.asarray(self.linear, dtype=float).ravel()
        d = linear.shape[0]
        if q.shape != (d, d):
            raise InputError(f"q must be {d} x {d}, got {q.shape}")
        scale = max(1.0, float(np.abs(q).max()) if q.size else 0.0)
        if q.size and np.abs(q - q.T).max() > 1e-10 * scale:
            raise InputError("q must be symmetric (within 1e-10)")
        if not np.isfinite(self.penalty) or self.penalty < 0:
            raise InputError(f"penalty must be finite and nonnegative, got {self.penalty}")
        for v, name in ((self.weights, "weights"), (self.start, "start")):
            if v is None:
                continue
            v = np.asarray(v, dtype=float).ravel()
            if v.shape[0] != d:
                raise InputError(f"{name} must have length {d}")
            if not np.isfinite(v).all():
                raise InputError(f"{name} must be finite")
            if name == "weights" and (v < 0).any():
                raise InputError("weights must be nonnegative")
            object.__setattr__(self, name, v)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "linear", linear)

    @property
    def dim(self) -> int:
        return self.linear.shape[0]


def quad_objective(prob: QuadLassoProblem, beta: np.ndarray) -> float:
    """Objective value 0.5 b'Qb - b'c + penalty * sum w|b| at ``beta``."""
    beta = np.asarray(beta, dtype=float).ravel()
    w = prob.weights if prob.weights is not None else 1.0
    return float(
        0.5 * beta @ prob.q @ beta
        - beta @ prob.linear
        + prob.penalty * np.sum(w * np.abs(beta))
    )


def solve_quad_lasso(
    prob: QuadLassoProblem, tol: float = 1e-6, max_iter: int = 1000
) -> np.ndarray:
    """Minimize the penalized quadratic by cyclic coordinate descent.

    Coordinates are visited in fixed ascending order; convergence is declared
    when the largest absolute coordinate change in a sweep drops to ``tol``.
    At the solution the KKT conditions hold: the (sub)gradient
    ``Q b - c + penalty * w * sgn(b)`` vanishes on active coordinates and is
    dominated by ``penalty * w`` on the zero ones.

    Raises :class:`ConvergenceError` (carrying the last iterate) when
    ``max_iter`` sweeps do not suffice.
    """
    if not tol > 0:
        raise InputError("tol must be positive")
    d = prob.dim
    q = np.ascontiguousarray(prob.q)
    c = np.ascontiguousarray(prob.linear)
    pen = np.full(d, prob.penalty) if prob.weights is None else prob.penalty * prob.weights
    pen = np.ascontiguousarray(pen)
    beta = np.zeros(d) if prob.start is None else prob.start.copy()
    _, delta, ok = _cd_solve(q, c, pen, beta, tol, max_iter)
    if not ok:
        raise ConvergenceError(
            f"coordinate descent did not reach tol={tol:g} in {max_iter} sweeps "
            f"(last sweep change {delta:g})",
            last=beta,
        )
    return beta


def lasso_regression(
    design: np.ndarray,
    response: np.ndarray,
    penalty: float,
    tol: float = 1e-6,
    max_iter: int = 1000,
) -> np.ndarray:
    """Lasso fit minimizing ``(1/2n) ||y - X b||^2 + penalty * ||b||_1``.

    Works on the Gram matrices, so the cost per sweep is d^2 regardless of n.
    """
    x = np.asarray(design, dtype=float)
    y = np.asarray(response, dtype=float).ravel()
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise InputError(
            f"design ({x.shape}) and response ({y.shape[0]},) do not conform"
        )
    n = x.shape[0]
    gram = x.T @ x / n
    prob = QuadLassoProblem((gram + gram.T) / 2.0, x.T @ y / n, penalty)
    return solve_quad_lasso(prob, tol=tol, max_iter=max_iter)
