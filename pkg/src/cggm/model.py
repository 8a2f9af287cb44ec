"""Core data model: sufficient statistics, likelihood, penalized objective.

The model is a multivariate Gaussian for a p-vector of responses y given a
q-vector of covariates x, with mean ``Gamma @ x`` and a sparse precision
matrix ``Theta``.  Everything the solvers need from the data is carried by
the cross-product matrices in :class:`SufficientStats`, so fitting never
touches the raw samples.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError, NotPositiveDefiniteError, RankError

__all__ = [
    "Dataset",
    "SufficientStats",
    "PenaltySpec",
    "CggmFit",
    "sufficient_stats",
    "residual_scatter",
    "neg_log_likelihood",
    "penalized_objective",
    "mle_fit",
    "symmetrize",
    "chol_logdet",
]


def symmetrize(a: np.ndarray) -> np.ndarray:
    """Average a square matrix with its transpose."""
    return (a + a.T) / 2.0


def chol_logdet(a: np.ndarray) -> float:
    """Log-determinant of a symmetric positive definite matrix via Cholesky.

    Raises :class:`NotPositiveDefiniteError` when the factorization fails.
    """
    try:
        chol = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError("matrix is not positive definite") from exc
    return float(2.0 * np.log(np.diag(chol)).sum())


def _as_matrix(x, name: str) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.ndim != 2:
        raise InputError(f"{name} must be a 2-d array, got shape {a.shape}")
    return a


def _check_symmetric(a: np.ndarray, name: str, tol: float) -> None:
    scale = max(1.0, float(np.abs(a).max()) if a.size else 0.0)
    if np.abs(a - a.T).max() > tol * scale:
        raise InputError(f"{name} must be symmetric (within {tol:g})")


def _check_psd(a: np.ndarray, name: str) -> None:
    if a.size == 0:
        return
    eigs = np.linalg.eigvalsh(symmetrize(a))
    if eigs[0] < -1e-8 * max(1.0, eigs[-1]):
        raise InputError(f"{name} must be positive semidefinite")


def spd_invertible(a: np.ndarray, rtol: float = 1e-10) -> bool:
    """Invertibility test for a symmetric PSD matrix: smallest eigenvalue
    greater than ``rtol`` times the largest."""
    eigs = np.linalg.eigvalsh(symmetrize(a))
    return bool(eigs[0] > rtol * max(eigs[-1], 0.0))


@dataclass(frozen=True)
class Dataset:
    """Paired observation matrices with rows as samples.

    ``y`` is n x p (expression levels), ``x`` is n x q (numerically coded
    markers).  Row i of the two matrices belongs to the same sample.
    """

    y: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        y = _as_matrix(self.y, "y")
        x = _as_matrix(self.x, "x")
        if y.shape[0] != x.shape[0]:
            raise InputError(
                f"y and x must have the same number of rows ({y.shape[0]} vs {x.shape[0]})"
            )
        if y.shape[0] < 2:
            raise InputError("need at least 2 samples")
        if not np.isfinite(y).all() or not np.isfinite(x).all():
            raise InputError("non-finite entry in input data")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.y.shape[1]

    @property
    def q(self) -> int:
        return self.x.shape[1]


@dataclass(frozen=True)
class SufficientStats:
    """Cross-product matrices (1/n-scaled sums) plus the sample count.

    This is the solver's only view of the data: ``c_y`` is p x p, ``c_yx``
    is p x q, ``c_x`` is q x q.
    """

    c_y: np.ndarray
    c_yx: np.ndarray
    c_x: np.ndarray
    n: int

    def __post_init__(self):
        c_y = _as_matrix(self.c_y, "c_y")
        c_yx = _as_matrix(self.c_yx, "c_yx")
        c_x = _as_matrix(self.c_x, "c_x")
        p, q = c_yx.shape
        if c_y.shape != (p, p) or c_x.shape != (q, q):
            raise InputError(
                f"inconsistent shapes: c_y {c_y.shape}, c_yx {c_yx.shape}, c_x {c_x.shape}"
            )
        for a, name in ((c_y, "c_y"), (c_yx, "c_yx"), (c_x, "c_x")):
            if not np.isfinite(a).all():
                raise InputError(f"non-finite entry in {name}")
        _check_symmetric(c_y, "c_y", 1e-12)
        _check_symmetric(c_x, "c_x", 1e-12)
        _check_psd(c_y, "c_y")
        _check_psd(c_x, "c_x")
        if self.n < 1:
            raise InputError("n must be at least 1")
        object.__setattr__(self, "c_y", c_y)
        object.__setattr__(self, "c_yx", c_yx)
        object.__setattr__(self, "c_x", c_x)

    @property
    def p(self) -> int:
        return self.c_y.shape[0]

    @property
    def q(self) -> int:
        return self.c_x.shape[0]


@dataclass(frozen=True)
class PenaltySpec:
    """Penalty levels and optional element-wise weights for the two L1 terms.

    ``lam`` scales the coefficient penalty, ``rho`` the precision penalty.
    Weight matrices default to all ones; ``adaptive``/``exponent`` record how
    weights were derived when they come from a pilot estimate.
    """

    lam: float
    rho: float
    adaptive: bool = False
    exponent: float = 0.5
    gamma_weights: np.ndarray | None = None
    theta_weights: np.ndarray | None = None

    def __post_init__(self):
        for v, name in ((self.lam, "lam"), (self.rho, "rho")):
            if not np.isfinite(v) or v < 0:
                raise InputError(f"{name} must be finite and nonnegative, got {v}")
        if self.adaptive and not self.exponent > 0:
            raise InputError("exponent must be positive for adaptive penalties")
        for w, name in (
            (self.gamma_weights, "gamma_weights"),
            (self.theta_weights, "theta_weights"),
        ):
            if w is None:
                continue
            w = _as_matrix(w, name)
            if not np.isfinite(w).all() or (w < 0).any():
                raise InputError(f"{name} must be finite and nonnegative")
            object.__setattr__(self, name, w)


@dataclass
class CggmFit:
    """Result of a penalized fit.

    ``theta`` is the estimated precision matrix, ``w`` its working inverse
    (the covariance estimate), ``gamma`` the coefficient matrix.  The
    objective trace holds the penalized objective after every half-step and
    is nonincreasing.
    """

    theta: np.ndarray
    w: np.ndarray
    gamma: np.ndarray
    penalty: PenaltySpec
    objective_trace: list[float]
    iterations: int
    converged: bool


def sufficient_stats(data: Dataset, center: bool = True) -> SufficientStats:
    """Cross-product statistics of a dataset.

    With ``center`` set (the default) the column means of y and x are removed
    first, which absorbs the intercept the model itself does not carry.
    """
    y, x, n = data.y, data.x, data.n
    if center:
        y = y - y.mean(axis=0)
        x = x - x.mean(axis=0)
    c_y = symmetrize(y.T @ y / n)
    c_yx = y.T @ x / n
    c_x = symmetrize(x.T @ x / n)
    return SufficientStats(c_y, c_yx, c_x, n)


def residual_scatter(stats: SufficientStats, gamma: np.ndarray) -> np.ndarray:
    """Scatter matrix of the regression residuals implied by ``gamma``:
    ``c_y - c_yx G' - G c_yx' + G c_x G'``, symmetrized."""
    gamma = _as_matrix(gamma, "gamma")
    if gamma.shape != (stats.p, stats.q):
        raise InputError(
            f"gamma must be {stats.p} x {stats.q}, got {gamma.shape[0]} x {gamma.shape[1]}"
        )
    cross = stats.c_yx @ gamma.T
    s = stats.c_y - cross - cross.T + gamma @ stats.c_x @ gamma.T
    return symmetrize(s)


def neg_log_likelihood(stats: SufficientStats, theta: np.ndarray, gamma: np.ndarray) -> float:
    """Negative average Gaussian log-likelihood up to an additive constant:
    ``-log det(theta) + tr(S_gamma theta)``.

    Raises :class:`NotPositiveDefiniteError` when ``theta`` is not positive
    definite.
    """
    theta = _as_matrix(theta, "theta")
    logdet = chol_logdet(theta)
    s = residual_scatter(stats, gamma)
    return float(-logdet + (s * theta).sum())


def penalized_objective(
    stats: SufficientStats, theta: np.ndarray, gamma: np.ndarray, pen: PenaltySpec
) -> float:
    """Negative log-likelihood plus weighted L1 penalties on ``gamma`` and on
    the full ``theta`` matrix, diagonal included."""
    value = neg_log_likelihood(stats, theta, gamma)
    gamma = np.asarray(gamma, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if pen.gamma_weights is None:
        gpen = np.abs(gamma).sum()
    else:
        gpen = (pen.gamma_weights * np.abs(gamma)).sum()
    if pen.theta_weights is None:
        tpen = np.abs(theta).sum()
    else:
        tpen = (pen.theta_weights * np.abs(theta)).sum()
    return float(value + pen.lam * gpen + pen.rho * tpen)


def mle_fit(stats: SufficientStats) -> tuple[np.ndarray, np.ndarray]:
    """Unpenalized maximum-likelihood estimates ``(theta, gamma)``.

    ``gamma = c_yx c_x^{-1}`` and ``theta`` is the inverse of the residual
    scatter at that ``gamma``.  Raises :class:`RankError` when ``c_x`` or the
    residual scatter is singular, in which case callers should fall back to
    the zero-coefficient start.
    """
    if not spd_invertible(stats.c_x):
        raise RankError("c_x is singular or near-singular; cannot form the MLE")
    gamma = np.linalg.solve(stats.c_x, stats.c_yx.T).T
    resid = residual_scatter(stats, gamma)
    try:
        np.linalg.cholesky(resid)
    except np.linalg.LinAlgError as exc:
        raise RankError("residual scatter is singular; cannot form the MLE") from exc
    theta = symmetrize(np.linalg.inv(resid))
    return theta, gamma
