"""Synthetic models, data generation, evaluation metrics, and the
estimator-comparison benchmark.

The generators follow a fixed recipe: sparse random support, entry values
bounded away from zero, and a row normalization that guarantees a strictly
diagonally dominant (hence positive definite) precision matrix.  The
benchmark generates a model and dataset per replication (seed = base seed +
replication index), tunes each requested method by BIC on its own grid, and
scores the recovered precision matrix / graph against the truth.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import ConvergenceError, CggmError, InputError
from .glasso import glasso
from .lasso import _cd_solve
from .model import (
    CggmFit,
    Dataset,
    PenaltySpec,
    SufficientStats,
    sufficient_stats,
    symmetrize,
)
from .selection import NONZERO_TOL, _log_grid, bic, default_grids, grid_search
from .solver import SolveOptions, adaptive_weights

__all__ = [
    "SimConfig",
    "SimModel",
    "GraphReport",
    "SupportMetrics",
    "MlassoResult",
    "gen_precision",
    "gen_gamma",
    "make_model",
    "gen_dataset",
    "quadratic_loss",
    "delta_norms",
    "mcc_score",
    "support_metrics",
    "evaluate_estimate",
    "mlasso_graph",
    "run_benchmark",
    "BENCH_COLUMNS",
    "KNOWN_METHODS",
]


def _rng(seed_or_rng) -> np.random.Generator:
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)


@dataclass(frozen=True)
class SimConfig:
    """Size and sparsity of one synthetic scenario."""

    p: int
    q: int
    n: int
    theta_link_prob: float
    gamma_link_prob: float
    seed: int = 0

    def __post_init__(self):
        if min(self.p, self.q, self.n) < 1:
            raise InputError("p, q, n must all be at least 1")
        for v, name in (
            (self.theta_link_prob, "theta_link_prob"),
            (self.gamma_link_prob, "gamma_link_prob"),
        ):
            if not 0 < v < 1:
                raise InputError(f"{name} must lie in (0, 1), got {v}")


@dataclass(frozen=True)
class SimModel:
    """Ground truth for one replication."""

    theta_true: np.ndarray
    gamma_true: np.ndarray
    config: SimConfig

    def __post_init__(self):
        t = np.asarray(self.theta_true, dtype=float)
        if not np.allclose(np.diag(t), 1.0):
            raise InputError("theta_true must have unit diagonal")
        off = np.abs(t).sum(axis=1) - np.abs(np.diag(t))
        if (off >= 1.0).any():
            raise InputError("theta_true must be strictly diagonally dominant")
        object.__setattr__(self, "theta_true", t)
        object.__setattr__(self, "gamma_true", np.asarray(self.gamma_true, dtype=float))


def gen_precision(p: int, link_prob: float, rng_seed) -> np.ndarray:
    """Random sparse precision matrix with unit diagonal.

    Upper-triangle links are sampled independently with ``link_prob`` and
    filled from Unif([-1,-0.5] u [0.5,1]), mirrored to the lower triangle.
    Each entry is then divided by 1.5 times the larger of its two endpoint
    row sums of absolute off-diagonals, which caps every off-diagonal row
    sum at 2/3 and makes strict diagonal dominance (and hence positive
    definiteness) a hard guarantee rather than a probabilistic one.  The
    matrix is average-symmetrized and the diagonal set to 1.
    """
    if p < 2:
        raise InputError("p must be at least 2")
    if not 0 < link_prob < 1:
        raise InputError(f"link_prob must lie in (0, 1), got {link_prob}")
    rng = _rng(rng_seed)
    iu = np.triu_indices(p, 1)
    m = iu[0].size
    link = rng.random(m) < link_prob
    mag = rng.uniform(0.5, 1.0, m)
    sign = np.where(rng.random(m) < 0.5, 1.0, -1.0)
    b = np.zeros((p, p))
    b[iu] = np.where(link, sign * mag, 0.0)
    b = b + b.T
    row = np.abs(b).sum(axis=1)
    scale = 1.5 * np.maximum.outer(row, row)
    a = np.zeros_like(b)
    np.divide(b, scale, out=a, where=b != 0)
    a = symmetrize(a)
    np.fill_diagonal(a, 1.0)
    return a


def gen_gamma(p: int, q: int, link_prob: float, v_min: float, rng_seed) -> np.ndarray:
    """Sparse coefficient matrix: independent links with ``link_prob``,
    values from Unif([v_min, 1] u [-1, -v_min])."""
    if not 0 < v_min < 1:
        raise InputError(f"v_min must lie in (0, 1), got {v_min}")
    if not 0 < link_prob < 1:
        raise InputError(f"link_prob must lie in (0, 1), got {link_prob}")
    rng = _rng(rng_seed)
    link = rng.random((p, q)) < link_prob
    mag = rng.uniform(v_min, 1.0, (p, q))
    sign = np.where(rng.random((p, q)) < 0.5, 1.0, -1.0)
    return np.where(link, sign * mag, 0.0)


def _min_nonzero_offdiag(theta: np.ndarray, fallback: float = 0.5) -> float:
    a = np.abs(theta).copy()
    np.fill_diagonal(a, 0.0)
    nz = a[a > 0]
    return float(nz.min()) if nz.size else fallback


def make_model(config: SimConfig, rng_seed=None) -> SimModel:
    """Draw a ground-truth model: precision matrix first, then coefficients
    with magnitudes at least the smallest nonzero precision entry."""
    rng = _rng(config.seed if rng_seed is None else rng_seed)
    theta = gen_precision(config.p, config.theta_link_prob, rng)
    v_m = _min_nonzero_offdiag(theta)
    gamma = gen_gamma(config.p, config.q, config.gamma_link_prob, v_m, rng)
    return SimModel(theta, gamma, config)


def gen_dataset(model: SimModel, n: int, rng_seed) -> Dataset:
    """Sample a dataset from the model: marker entries iid Bernoulli(1/2) in
    {0, 1}; responses are ``gamma_true x`` plus Gaussian noise drawn through
    the Cholesky factor of ``theta_true`` (so its covariance is the inverse
    precision)."""
    if n < 1:
        raise InputError("n must be at least 1")
    rng = _rng(rng_seed)
    p, q = model.theta_true.shape[0], model.gamma_true.shape[1]
    x = (rng.random((n, q)) < 0.5).astype(float)
    z = rng.standard_normal((n, p))
    try:
        chol = np.linalg.cholesky(model.theta_true)
    except np.linalg.LinAlgError as exc:
        raise InputError("theta_true must be positive definite") from exc
    noise = solve_triangular(chol, z.T, lower=True, trans="T").T
    y = x @ model.gamma_true.T + noise
    return Dataset(y, x)


def quadratic_loss(theta_true: np.ndarray, theta_hat: np.ndarray) -> float:
    """``tr((theta_true^{-1} theta_hat - I)^2)``; zero iff the two agree."""
    theta_true = np.asarray(theta_true, dtype=float)
    theta_hat = np.asarray(theta_hat, dtype=float)
    try:
        m = np.linalg.solve(theta_true, theta_hat)
    except np.linalg.LinAlgError as exc:
        raise InputError("theta_true must be invertible") from exc
    m -= np.eye(theta_true.shape[0])
    return float((m * m.T).sum())


@dataclass(frozen=True)
class DeltaNorms:
    elem_inf: float
    mat_inf: float
    spectral: float
    frobenius: float


def delta_norms(theta_true: np.ndarray, theta_hat: np.ndarray) -> DeltaNorms:
    """Four norms of the estimation error ``delta = theta_true - theta_hat``:
    element-wise max, max absolute row sum, largest singular value, and
    Frobenius."""
    d = np.asarray(theta_true, dtype=float) - np.asarray(theta_hat, dtype=float)
    return DeltaNorms(
        elem_inf=float(np.abs(d).max()),
        mat_inf=float(np.abs(d).sum(axis=1).max()),
        spectral=float(np.linalg.norm(d, 2)),
        frobenius=float(np.linalg.norm(d)),
    )


def mcc_score(tp: int, tn: int, fp: int, fn: int) -> float:
    """Matthews correlation coefficient; 0 when any margin is empty."""
    denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    if denom == 0:
        return 0.0
    return float((tp * tn - fp * fn) / math.sqrt(denom))


@dataclass(frozen=True)
class SupportMetrics:
    """Hamming distance plus off-diagonal classification scores.

    ``degenerate`` flags an empty sensitivity or specificity denominator
    (the corresponding score is reported as 0).
    """

    dist: int
    spe: float
    sen: float
    mcc: float
    degenerate: bool = False


def support_metrics(
    theta_true: np.ndarray, theta_hat: np.ndarray, tol: float = NONZERO_TOL
) -> SupportMetrics:
    """Support-recovery scores treating nonzero entries as positives.

    The Hamming distance counts mismatches over all ordered entries,
    diagonal included; TP/TN/FP/FN count ordered off-diagonal pairs only,
    since the diagonal is structurally nonzero on both sides and would
    inflate the scores.
    """
    t = np.abs(np.asarray(theta_true, dtype=float)) > tol
    h = np.abs(np.asarray(theta_hat, dtype=float)) > tol
    if t.shape != h.shape:
        raise InputError("theta_true and theta_hat must have the same shape")
    dist = int((t != h).sum())
    off = ~np.eye(t.shape[0], dtype=bool)
    tp = int((t & h & off).sum())
    tn = int((~t & ~h & off).sum())
    fp = int((~t & h & off).sum())
    fn = int((t & ~h & off).sum())
    degenerate = (tn + fp == 0) or (tp + fn == 0)
    spe = tn / (tn + fp) if tn + fp else 0.0
    sen = tp / (tp + fn) if tp + fn else 0.0
    return SupportMetrics(dist, spe, sen, mcc_score(tp, tn, fp, fn), degenerate)


@dataclass(frozen=True)
class GraphReport:
    """All scores of one recovered precision matrix against the truth."""

    loss: float
    norm_elem_inf: float
    norm_mat_inf: float
    norm_spectral: float
    norm_frobenius: float
    dist: int
    spe: float
    sen: float
    mcc: float


def evaluate_estimate(
    theta_true: np.ndarray, theta_hat: np.ndarray, tol: float = NONZERO_TOL
) -> GraphReport:
    """Quadratic loss, error norms, and support metrics in one record."""
    norms = delta_norms(theta_true, theta_hat)
    sup = support_metrics(theta_true, theta_hat, tol)
    return GraphReport(
        loss=quadratic_loss(theta_true, theta_hat),
        norm_elem_inf=norms.elem_inf,
        norm_mat_inf=norms.mat_inf,
        norm_spectral=norms.spectral,
        norm_frobenius=norms.frobenius,
        dist=sup.dist,
        spe=sup.spe,
        sen=sup.sen,
        mcc=sup.mcc,
    )


@dataclass(frozen=True)
class MlassoResult:
    """Neighborhood-selection output: the AND-rule gene graph, the full
    gene-on-gene coefficient matrix, and the marker coefficients."""

    adjacency: np.ndarray
    gene_coefs: np.ndarray
    marker_coefs: np.ndarray


def _mlasso_path(
    data: Dataset, lams, inner_tol: float, center: bool = True,
    inner_max_iter: int = 10_000,
):
    """Per-response lasso fits along a penalty path (descending, warm
    started).  Yields (gene_coefs, marker_coefs, rss_over_n) per level.

    The sweep budget is generous because near-collinear response columns
    make the coordinate updates crawl."""
    y, x = data.y, data.x
    if center:
        y = y - y.mean(axis=0)
        x = x - x.mean(axis=0)
    n, p = y.shape
    q = x.shape[1]
    full = np.hstack([y, x])
    gram = symmetrize(full.T @ full / n)
    d = p - 1 + q
    betas = np.zeros((p, d))
    out = []
    for lam in lams:
        gene_coefs = np.zeros((p, p))
        marker_coefs = np.zeros((p, q))
        rss = np.zeros(p)
        pen = np.full(d, float(lam))
        for j in range(p):
            keep = [k for k in range(p + q) if k != j]
            sub = np.ascontiguousarray(gram[np.ix_(keep, keep)])
            c = np.ascontiguousarray(gram[keep, j])
            beta = betas[j]
            _, _, ok = _cd_solve(sub, c, pen, beta, inner_tol, inner_max_iter)
            if not ok:
                raise ConvergenceError(
                    f"lasso for response column {j} stalled at penalty {lam:g}",
                    last=beta,
                )
            gene_part = np.delete(np.arange(p), j)
            gene_coefs[gene_part, j] = beta[: p - 1]
            marker_coefs[j] = beta[p - 1 :]
            rss[j] = gram[j, j] - 2.0 * beta @ c + beta @ sub @ beta
        out.append((gene_coefs, marker_coefs, rss))
    return out


def mlasso_graph(
    data: Dataset,
    lam: float,
    tol: float = NONZERO_TOL,
    center: bool = True,
    inner_tol: float = 1e-8,
) -> MlassoResult:
    """Neighborhood-selection graph: each response column is lasso-regressed
    on the remaining columns plus all covariates at penalty ``lam``; an edge
    between two columns requires selection in both directions (so the
    adjacency is symmetric by construction)."""
    if not lam > 0:
        raise InputError("lam must be positive")
    ((gene_coefs, marker_coefs, _),) = _mlasso_path(data, [lam], inner_tol, center)
    sel = np.abs(gene_coefs) > tol
    adjacency = sel & sel.T
    return MlassoResult(adjacency, gene_coefs, marker_coefs)


KNOWN_METHODS = ("cggm", "acggm", "glasso", "aglasso", "mlasso")

BENCH_COLUMNS = (
    "method",
    "replication",
    "lambda",
    "rho",
    "loss",
    "norm_elem_inf",
    "norm_mat_inf",
    "norm_spectral",
    "norm_frobenius",
    "dist",
    "spe",
    "sen",
    "mcc",
    "converged",
)

_METRIC_FIELDS = (
    "loss",
    "norm_elem_inf",
    "norm_mat_inf",
    "norm_spectral",
    "norm_frobenius",
    "dist",
    "spe",
    "sen",
    "mcc",
)


def _tune_glasso(stats: SufficientStats, grid_size: int, adaptive: bool, tol: float):
    """Pick rho by BIC for the plain (or adaptive) precision-only estimator
    on the response scatter.  Returns (theta, rho)."""
    s = stats.c_y
    off = np.abs(s).copy()
    np.fill_diagonal(off, 0.0)
    rho_grid = _log_grid(float(off.max()), grid_size, 100.0)
    weights = None
    if adaptive:
        try:
            pilot = np.linalg.inv(s)
        except np.linalg.LinAlgError as exc:
            raise InputError("adaptive weights need an invertible response scatter") from exc
        weights = adaptive_weights(symmetrize(pilot))
    zeros = np.zeros((stats.p, stats.q))
    pen0 = PenaltySpec(0.0, 1.0)
    best = None
    init = None
    for rho in sorted(rho_grid, reverse=True):
        res = glasso(s, float(rho), theta_weights=weights, init_w=init, tol=tol)
        init = res.w
        shim = CggmFit(res.theta, res.w, zeros, pen0, [], res.sweeps, res.converged)
        score = bic(shim, stats)
        if res.converged and (best is None or score < best[0] or (score == best[0] and rho > best[2])):
            best = (score, res.theta, float(rho))
    if best is None:
        raise ConvergenceError("no glasso grid cell converged")
    return best[1], best[2]


def _tune_mlasso(data: Dataset, grid_size: int, inner_tol: float = 1e-8):
    """Pick a single shared penalty by the summed per-regression Gaussian
    BIC ``n log(rss/n) + log(n) df``.  Returns (MlassoResult, lam)."""
    n, p = data.y.shape
    y = data.y - data.y.mean(axis=0)
    x = data.x - data.x.mean(axis=0)
    full = np.hstack([y, x])
    gram = full.T @ full / n
    lam_max = 0.0
    for j in range(p):
        c = np.abs(np.delete(gram[:, j], j))
        if c.size:
            lam_max = max(lam_max, float(c.max()))
    grid = sorted(_log_grid(lam_max, grid_size, 100.0), reverse=True)
    path = _mlasso_path(data, grid, inner_tol)
    best = None
    for lam, (gene_coefs, marker_coefs, rss) in zip(grid, path):
        df = (np.abs(gene_coefs) > NONZERO_TOL).sum() + (np.abs(marker_coefs) > NONZERO_TOL).sum()
        score = float(n * np.log(np.maximum(rss, 1e-12)).sum() + math.log(n) * df)
        if best is None or score < best[0] or (score == best[0] and lam > best[2]):
            sel = np.abs(gene_coefs) > NONZERO_TOL
            best = (score, MlassoResult(sel & sel.T, gene_coefs, marker_coefs), lam)
    return best[1], best[2]


def _nan_report() -> dict:
    return {k: float("nan") for k in _METRIC_FIELDS}


def _run_replication(config, rep, methods, grid_size, opts):
    seed = config.seed + rep
    rng = np.random.default_rng(seed)
    theta_t = gen_precision(config.p, config.theta_link_prob, rng)
    v_m = _min_nonzero_offdiag(theta_t)
    gamma_t = gen_gamma(config.p, config.q, config.gamma_link_prob, v_m, rng)
    model = SimModel(theta_t, gamma_t, config)
    data = gen_dataset(model, config.n, rng)
    stats = sufficient_stats(data, center=True)

    rows = []
    for method in methods:
        row = {"method": method, "replication": rep, "lambda": float("nan"),
               "rho": float("nan"), "converged": True}
        row.update(_nan_report())
        try:
            if method in ("cggm", "acggm"):
                lam_grid, rho_grid = default_grids(stats, size=grid_size)
                best, _ = grid_search(
                    stats, lam_grid, rho_grid, adaptive=(method == "acggm"), opts=opts
                )
                theta_hat = best.theta
                row["lambda"] = best.penalty.lam
                row["rho"] = best.penalty.rho
            elif method in ("glasso", "aglasso"):
                theta_hat, rho = _tune_glasso(
                    stats, grid_size, adaptive=(method == "aglasso"), tol=opts.tol_inner
                )
                row["rho"] = rho
            elif method == "mlasso":
                res, lam = _tune_mlasso(data, grid_size)
                row["lambda"] = lam
                # the graph estimate has a structurally nonzero diagonal;
                # compare supports on that footing
                est = res.adjacency.astype(float) + np.eye(config.p)
                sup = support_metrics(theta_t, est)
                row.update(dist=sup.dist, spe=sup.spe, sen=sup.sen, mcc=sup.mcc)
                rows.append(row)
                continue
            else:
                raise InputError(f"unknown method {method!r}; known: {KNOWN_METHODS}")
            report = evaluate_estimate(theta_t, theta_hat)
            row.update({k: getattr(report, k) for k in _METRIC_FIELDS})
        except CggmError as exc:
            row["converged"] = False
            row["error"] = str(exc)
        rows.append(row)
    return rows


def run_benchmark(
    config: SimConfig,
    replications: int,
    methods=("cggm", "glasso"),
    grid_size: int = 8,
    opts: SolveOptions | None = None,
    max_workers: int = 1,
) -> list[dict]:
    """Run the estimator comparison and return a flat row table.

    Per replication r the model and data are drawn with seed
    ``config.seed + r``, each method is tuned by BIC on its own default
    grid, and all metrics are computed against the truth.  After the
    per-replication rows, a ``mean`` and an ``se`` (standard error over
    replications) summary row is appended per method.  Failed cells are
    recorded with ``converged=False`` and skipped in the summaries.
    """
    if replications < 1:
        raise InputError("replications must be at least 1")
    methods = tuple(methods)
    for m in methods:
        if m not in KNOWN_METHODS:
            raise InputError(f"unknown method {m!r}; known: {KNOWN_METHODS}")
    opts = opts or SolveOptions()

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            futures = [
                pool.submit(_run_replication, config, r, methods, grid_size, opts)
                for r in range(replications)
            ]
            per_rep = [f.result() for f in futures]
    else:
        per_rep = [
            _run_replication(config, r, methods, grid_size, opts)
            for r in range(replications)
        ]

    rows = [row for rep_rows in per_rep for row in rep_rows]
    base_rows = list(rows)
    for method in methods:
        mrows = [r for r in base_rows if r["method"] == method]
        ok = [r for r in mrows if r["converged"]]
        for stat in ("mean", "se"):
            srow = {"method": method, "replication": stat, "lambda": float("nan"),
                    "rho": float("nan"), "converged": len(ok) == len(mrows)}
            for k in _METRIC_FIELDS:
                vals = np.array([r[k] for r in ok], dtype=float)
                vals = vals[np.isfinite(vals)]
                if vals.size == 0:
                    srow[k] = float("nan")
                elif stat == "mean":
                    srow[k] = float(vals.mean())
                else:
                    srow[k] = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else 0.0
            rows.append(srow)
    return rows
