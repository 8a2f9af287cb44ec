"""Alternating solver for the penalized conditional Gaussian model.

Starting from the coefficient MLE (or zeros when the covariate cross-product
is singular), the solver alternates two block minimizations of the penalized
objective: a precision update via the block lasso on the current residual
scatter, and cyclic soft-threshold passes over the coefficient matrix under
the current precision.  Both blocks are exact coordinate minimizations, so
the objective trace is nonincreasing; the loop stops when its relative
change falls below ``tol_outer``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import InputError, NumericalError, RankError
from .glasso import glasso
from .model import (
    CggmFit,
    PenaltySpec,
    SufficientStats,
    mle_fit,
    penalized_objective,
    residual_scatter,
    spd_invertible,
    symmetrize,
)

__all__ = [
    "SolveOptions",
    "init_estimates",
    "update_gamma",
    "fit",
    "fit_adaptive",
    "adaptive_weights",
]

_ORDERS = ("theta_first", "gamma_first")


@dataclass(frozen=True)
class SolveOptions:
    """Knobs for the alternating solver.

    ``tol_outer`` is the relative objective change that ends the outer loop;
    ``tol_inner`` drives both the precision sweeps and the coefficient
    passes.  ``stat_tol`` additionally requires the final iteration to have
    barely moved either block (largest precision-entry change and largest
    residual-scatter change), which bounds the cross-block staleness of the
    stationarity conditions at the returned point.  ``order`` picks which
    block moves first in each iteration.  ``restarts`` holds seeds for
    optional randomly perturbed restarts; the fit with the lowest final
    objective wins.
    """

    tol_outer: float = 1e-6
    max_outer: int = 200
    tol_inner: float = 1e-6
    stat_tol: float = 1e-4
    center: bool = True
    trace: bool = False
    order: str = "theta_first"
    max_gamma_passes: int = 100
    glasso_max_sweeps: int = 100
    restarts: tuple[int, ...] = ()

    def __post_init__(self):
        if not (self.tol_outer > 0 and self.tol_inner > 0 and self.stat_tol > 0):
            raise InputError("tolerances must be positive")
        if self.max_outer < 1:
            raise InputError("max_outer must be at least 1")
        if self.order not in _ORDERS:
            raise InputError(f"order must be one of {_ORDERS}")


def init_estimates(stats: SufficientStats, rho: float) -> tuple[np.ndarray, np.ndarray]:
    """Starting values ``(gamma0, w0)``.

    When the covariate cross-product is safely invertible (smallest
    eigenvalue above 1e-10 times the largest), ``gamma0`` is the coefficient
    MLE and ``w0`` its residual scatter plus ``rho I``; otherwise zeros and
    the ridged response scatter.
    """
    p, q = stats.p, stats.q
    if spd_invertible(stats.c_x):
        gamma0 = np.linalg.solve(stats.c_x, stats.c_yx.T).T
        w0 = residual_scatter(stats, gamma0) + rho * np.eye(p)
    else:
        gamma0 = np.zeros((p, q))
        w0 = stats.c_y + rho * np.eye(p)
    return gamma0, symmetrize(w0)


@njit(cache=True, nogil=True)
def _gamma_sweep(gamma, u, theta, c_x, p2, lam_w, col_ok):
    """One in-place cyclic pass over all (i, j) coefficient entries.

    ``u = gamma' theta`` is kept consistent as entries change; ``p2`` is the
    fixed part ``2 theta c_yx``.  Returns the largest absolute entry change.
    """
    p, q = gamma.shape
    max_delta = 0.0
    for i in range(p):
        tii = theta[i, i]
        for j in range(q):
            if not col_ok[j]:
                continue
            a = 2.0 * c_x[j, j] * tii
            acc = 0.0
            for k in range(q):
                acc += c_x[j, k] * u[k, i]
            g = p2[i, j] + a * gamma[i, j] - 2.0 * acc
            z = abs(g) - lam_w[i, j]
            if z <= 0.0:
                new = 0.0
            else:
                new = (z if g > 0.0 else -z) / a
            delta = new - gamma[i, j]
            if delta != 0.0:
                ad = abs(delta)
                if ad > max_delta:
                    max_delta = ad
                for m in range(p):
                    u[j, m] += delta * theta[i, m]
                gamma[i, j] = new
    return max_delta


def _column_mask(c_x: np.ndarray) -> np.ndarray:
    d = np.diag(c_x)
    return d > 1e-12 * max(1.0, float(d.max()) if d.size else 0.0)


def _warn_dead_columns(col_ok: np.ndarray) -> None:
    dead = np.flatnonzero(~col_ok)
    if dead.size:
        warnings.warn(
            f"covariate column(s) {dead.tolist()} have zero variance; "
            "their coefficients are forced to zero",
            stacklevel=3,
        )


def update_gamma(
    stats: SufficientStats,
    theta: np.ndarray,
    gamma_prev: np.ndarray,
    lam: float,
    gamma_weights: np.ndarray | None = None,
) -> np.ndarray:
    """One cyclic soft-threshold pass over the coefficient matrix.

    Entries are visited in ascending (row, column) order and updated in
    place, so later entries see the refreshed values of earlier ones.
    Covariate columns with zero variance get zero coefficients and a warning.
    """
    theta = np.ascontiguousarray(np.asarray(theta, dtype=float))
    gamma = np.ascontiguousarray(np.array(gamma_prev, dtype=float, copy=True))
    p, q = stats.p, stats.q
    if theta.shape != (p, p) or gamma.shape != (p, q):
        raise InputError("theta/gamma shapes do not match the statistics")
    if (np.diag(theta) <= 0).any():
        raise InputError("theta must have strictly positive diagonal")
    if not np.isfinite(lam) or lam < 0:
        raise InputError(f"lam must be finite and nonnegative, got {lam}")
    lam_w = np.full((p, q), lam) if gamma_weights is None else lam * np.asarray(gamma_weights, dtype=float)
    col_ok = _column_mask(stats.c_x)
    _warn_dead_columns(col_ok)
    gamma[:, ~col_ok] = 0.0
    u = np.ascontiguousarray(gamma.T @ theta)
    p2 = np.ascontiguousarray(2.0 * theta @ stats.c_yx)
    _gamma_sweep(
        gamma,
        u,
        theta,
        np.ascontiguousarray(stats.c_x),
        p2,
        np.ascontiguousarray(lam_w),
        col_ok,
    )
    return gamma


def _gamma_phase(stats, theta, gamma, lam_w, col_ok, tol, max_passes):
    """Repeat full coefficient passes until the largest entry change drops
    to ``tol``.  Mutates ``gamma``; returns (passes, converged)."""
    c_x = np.ascontiguousarray(stats.c_x)
    theta = np.ascontiguousarray(theta)
    p2 = np.ascontiguousarray(2.0 * theta @ stats.c_yx)
    for i in range(max_passes):
        u = np.ascontiguousarray(gamma.T @ theta)
        delta = _gamma_sweep(gamma, u, theta, c_x, p2, lam_w, col_ok)
        if delta <= tol:
            return i + 1, True
    return max_passes, False


def adaptive_weights(pilot: np.ndarray, exponent: float = 0.5, cap: float = 1e6) -> np.ndarray:
    """Element-wise penalty weights ``|pilot|^(-exponent)``, clipped to
    ``cap`` (zero pilot entries hit the cap, effectively excluding them)."""
    a = np.abs(np.asarray(pilot, dtype=float))
    with np.errstate(divide="ignore"):
        w = a ** (-float(exponent))
    return np.minimum(w, cap)


def fit(
    stats: SufficientStats,
    pen: PenaltySpec,
    opts: SolveOptions | None = None,
    init_gamma: np.ndarray | None = None,
) -> CggmFit:
    """Penalized fit of the coefficient matrix and sparse precision matrix.

    Alternates the precision block solve on the current residual scatter with
    coefficient passes to convergence under the current precision, until the
    relative change of the penalized objective falls below ``tol_outer``.
    The returned trace holds the objective after every half-step.

    Raises :class:`NumericalError` if the objective ever rises beyond the
    ``1e-8 * (1 + |obj|)`` slack, which would indicate a broken invariant.
    """
    opts = opts or SolveOptions()
    if pen.lam < 0 or not pen.rho > 0:
        raise InputError("need lam >= 0 and rho > 0")
    if not opts.restarts:
        return _fit_once(stats, pen, opts, init_gamma)
    best = _fit_once(stats, pen, opts, init_gamma)
    best_obj = best.objective_trace[-1]
    base_gamma, _ = init_estimates(stats, pen.rho) if init_gamma is None else (np.asarray(init_gamma, dtype=float), None)
    scale = max(1.0, float(np.abs(base_gamma).max()))
    for seed in opts.restarts:
        rng = np.random.default_rng(seed)
        start = base_gamma + 0.1 * scale * rng.standard_normal(base_gamma.shape)
        cand = _fit_once(stats, pen, opts, start)
        if cand.objective_trace[-1] < best_obj:
            best, best_obj = cand, cand.objective_trace[-1]
    return best


def _fit_once(stats, pen, opts, init_gamma):
    p, q = stats.p, stats.q
    tw = pen.theta_weights
    gw = pen.gamma_weights
    lam_w = np.ascontiguousarray(
        np.full((p, q), pen.lam) if gw is None else pen.lam * gw
    )
    col_ok = _column_mask(stats.c_x)
    _warn_dead_columns(col_ok)

    if init_gamma is None:
        gamma, _ = init_estimates(stats, pen.rho)
    else:
        gamma = np.array(init_gamma, dtype=float, copy=True)
        if gamma.shape != (p, q):
            raise InputError(f"init_gamma must be {p} x {q}")
    gamma = np.ascontiguousarray(gamma)
    gamma[:, ~col_ok] = 0.0

    glasso_inner_tol = max(opts.tol_inner * 1e-3, 1e-12)
    theta = None
    w = None
    trace: list[float] = []
    prev = np.inf
    converged = False
    iterations = 0

    def record(obj, revert):
        # exact block minimizations cannot raise the objective; tolerate
        # float-level wiggle by keeping the better iterate, fail loudly beyond
        nonlocal prev
        if obj > prev + 1e-8 * (1.0 + abs(prev)):
            raise NumericalError(
                f"objective increased from {prev!r} to {obj!r} during iteration "
                f"{iterations}; this should be impossible"
            )
        if obj > prev:
            revert()
            obj = prev
        trace.append(obj)
        prev = obj
        return obj

    def theta_step():
        nonlocal theta, w
        s_g = residual_scatter(stats, gamma)
        res = glasso(
            s_g,
            pen.rho,
            theta_weights=tw,
            tol=opts.tol_inner,
            max_sweeps=opts.glasso_max_sweeps,
            inner_tol=glasso_inner_tol,
        )
        old = (theta, w)
        theta, w = res.theta, res.w
        obj = penalized_objective(stats, theta, gamma, pen)
        moved = np.inf if old[0] is None else float(np.abs(theta - old[0]).max())

        def revert():
            nonlocal theta, w
            theta, w = old

        return record(obj, revert), moved

    def gamma_step():
        nonlocal gamma
        old = gamma.copy()
        s_before = residual_scatter(stats, gamma)
        _gamma_phase(
            stats, theta, gamma, lam_w, col_ok, opts.tol_inner, opts.max_gamma_passes
        )
        obj = penalized_objective(stats, theta, gamma, pen)
        moved = float(np.abs(residual_scatter(stats, gamma) - s_before).max())

        def revert():
            nonlocal gamma
            gamma = old

        return record(obj, revert), moved

    if opts.order == "gamma_first":
        # the first coefficient pass needs a precision estimate
        _, w0 = init_estimates(stats, pen.rho)
        theta = symmetrize(np.linalg.inv(w0))
        w = w0

    for it in range(1, opts.max_outer + 1):
        iterations = it
        last = prev
        if opts.order == "theta_first":
            _, moved_t = theta_step()
            obj, moved_g = gamma_step()
        else:
            _, moved_g = gamma_step()
            obj, moved_t = theta_step()
        if opts.trace:
            print(f"[fit] iteration {it}: objective {obj:.10g}")
        stationary = max(moved_t, moved_g) <= opts.stat_tol
        if (
            np.isfinite(last)
            and abs(obj - last) <= opts.tol_outer * (1.0 + abs(last))
            and stationary
        ):
            converged = True
            break

    return CggmFit(
        theta=theta,
        w=w,
        gamma=gamma,
        penalty=pen,
        objective_trace=trace,
        iterations=iterations,
        converged=converged,
    )


def fit_adaptive(
    stats: SufficientStats,
    lam: float,
    rho: float,
    opts: SolveOptions | None = None,
    exponent: float = 0.5,
    weight_cap: float = 1e6,
) -> CggmFit:
    """Adaptive-penalty fit: element-wise weights ``|mle|^(-exponent)`` from
    the unpenalized estimates of the coefficients and the precision matrix.

    Requires ``n > max(p, q)`` and an invertible covariate cross-product so
    the pilot estimates exist; otherwise raises :class:`InputError` telling
    the caller to use the non-adaptive fit.
    """
    if stats.n <= max(stats.p, stats.q):
        raise InputError(
            "adaptive weights need n > max(p, q); use the non-adaptive fit instead"
        )
    try:
        theta_mle, gamma_mle = mle_fit(stats)
    except RankError as exc:
        raise InputError(
            f"pilot estimates unavailable ({exc}); use the non-adaptive fit instead"
        ) from exc
    pen = PenaltySpec(
        lam,
        rho,
        adaptive=True,
        exponent=exponent,
        gamma_weights=adaptive_weights(gamma_mle, exponent, weight_cap),
        theta_weights=adaptive_weights(theta_mle, exponent, weight_cap),
    )
    return fit(stats, pen, opts)
