"""Command-line pipeline: simulate, fit, tune, mlasso, eval, bench.

Exit codes: 0 on success, 1 for input/usage errors, 2 for convergence or
numerical failures.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .errors import (
    ConvergenceError,
    InputError,
    NotPositiveDefiniteError,
    NumericalError,
    ParseError,
    RankError,
    SearchError,
)
from .io import FLOAT_FMT, read_matrix, write_fit, write_matrix
from .model import Dataset, PenaltySpec, sufficient_stats
from .selection import BicRecord, default_grids, grid_search
from .simulate import (
    BENCH_COLUMNS,
    KNOWN_METHODS,
    SimConfig,
    evaluate_estimate,
    gen_dataset,
    make_model,
    mlasso_graph,
    run_benchmark,
)
from .solver import SolveOptions, fit, fit_adaptive

__all__ = ["cli", "main"]


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with code 2 on bad flags; the contract here is exit 1
    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _add_io_flags(p):
    p.add_argument("--delimiter", default="\t", help="column delimiter (default tab)")
    p.add_argument("--header", action="store_true", help="input files carry a header row")


def _expand_config(argv):
    """Splice ``--config FILE`` (a JSON object of flag defaults) into the
    argument list.  Keys use flag names with dashes or underscores; explicit
    command-line flags override config values."""
    if argv is None:
        argv = sys.argv[1:]
    argv = [str(a) for a in argv]
    if "--config" not in argv:
        return argv
    i = argv.index("--config")
    if i + 1 >= len(argv):
        raise InputError("--config requires a file path")
    path = argv[i + 1]
    rest = argv[:i] + argv[i + 2:]
    if not rest:
        raise InputError("--config requires a command before it")
    try:
        with open(path) as fh:
            payload = json.load(fh)
    except FileNotFoundError:
        raise InputError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(payload, dict):
        raise ParseError(f"{path}: config must be a JSON object of flag values")
    injected = []
    for key, value in payload.items():
        flag = "--" + str(key).replace("_", "-").lstrip("-")
        if isinstance(value, bool):
            if value:
                injected.append(flag)
        else:
            injected.extend([flag, str(value)])
    return [rest[0]] + injected + rest[1:]


def _add_solver_flags(p):
    p.add_argument("--no-center", dest="center", action="store_false",
                   help="do not mean-center columns before forming statistics")
    p.add_argument("--tol-outer", type=float, default=1e-6)
    p.add_argument("--tol-inner", type=float, default=1e-6)
    p.add_argument("--max-outer", type=int, default=200)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cggm", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate",
                       help="draw a synthetic model and dataset")
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--q", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--theta-prob", type=float, required=True)
    p.add_argument("--gamma-prob", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("fit",
                       help="fit at fixed penalty levels")
    p.add_argument("--y", required=True)
    p.add_argument("--x", required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--adaptive", action="store_true")
    p.add_argument("--force", action="store_true",
                   help="write outputs even if the fit did not converge")
    p.add_argument("--out", required=True)
    _add_io_flags(p)
    _add_solver_flags(p)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("tune",
                       help="grid search over (lambda, rho) by BIC")
    p.add_argument("--y", required=True)
    p.add_argument("--x", required=True)
    p.add_argument("--lambda-grid", help="comma-separated values (default data-driven)")
    p.add_argument("--rho-grid", help="comma-separated values (default data-driven)")
    p.add_argument("--grid-size", type=int, default=10)
    p.add_argument("--adaptive", action="store_true")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", required=True)
    _add_io_flags(p)
    _add_solver_flags(p)
    p.set_defaults(func=_cmd_tune)

    p = sub.add_parser("mlasso",
                       help="neighborhood-selection graph at a fixed penalty")
    p.add_argument("--y", required=True)
    p.add_argument("--x", required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--out", required=True)
    _add_io_flags(p)
    p.set_defaults(func=_cmd_mlasso)

    p = sub.add_parser("eval",
                       help="score an estimated precision matrix against the truth")
    p.add_argument("--truth", required=True)
    p.add_argument("--est", required=True)
    p.add_argument("--out", default="metrics.json")
    _add_io_flags(p)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("bench",
                       help="replicated estimator comparison on synthetic data")
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--q", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--theta-prob", type=float, required=True)
    p.add_argument("--gamma-prob", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--replications", type=int, default=20)
    p.add_argument("--methods", default="cggm,glasso",
                   help=f"comma-separated subset of {','.join(KNOWN_METHODS)}")
    p.add_argument("--grid-size", type=int, default=8)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", default="benchmark.tsv", help="output TSV path")
    p.set_defaults(func=_cmd_bench)

    for cmd_parser in sub.choices.values():
        cmd_parser.add_argument(
            "--config",
            help="JSON object of flag defaults for this command; explicit flags win",
        )
    return parser


def _load_dataset(args) -> tuple[Dataset, list | None, list | None]:
    y, gene_names = read_matrix(args.y, args.delimiter, args.header)
    x, marker_names = read_matrix(args.x, args.delimiter, args.header)
    return Dataset(y, x), gene_names, marker_names


def _solve_options(args) -> SolveOptions:
    return SolveOptions(
        tol_outer=args.tol_outer,
        max_outer=args.max_outer,
        tol_inner=args.tol_inner,
        center=args.center,
    )


def _cmd_simulate(args) -> int:
    config = SimConfig(args.p, args.q, args.n, args.theta_prob, args.gamma_prob, args.seed)
    rng = np.random.default_rng(config.seed)
    model = make_model(config, rng)
    data = gen_dataset(model, config.n, rng)
    os.makedirs(args.out, exist_ok=True)
    write_matrix(os.path.join(args.out, "Y.tsv"), data.y)
    write_matrix(os.path.join(args.out, "X.tsv"), data.x)
    write_matrix(os.path.join(args.out, "theta_true.tsv"), model.theta_true)
    write_matrix(os.path.join(args.out, "gamma_true.tsv"), model.gamma_true)
    print(f"wrote Y.tsv X.tsv theta_true.tsv gamma_true.tsv to {args.out}")
    return 0


def _cmd_fit(args) -> int:
    data, gene_names, marker_names = _load_dataset(args)
    stats = sufficient_stats(data, center=args.center)
    opts = _solve_options(args)
    if args.adaptive:
        result = fit_adaptive(stats, args.lam, args.rho, opts)
    else:
        result = fit(stats, PenaltySpec(args.lam, args.rho), opts)
    if not result.converged and not args.force:
        raise ConvergenceError(
            f"fit did not converge within {opts.max_outer} iterations; "
            "rerun with --force to write anyway"
        )
    write_fit(result, args.out, gene_names, marker_names, force=args.force)
    print(f"fit: converged={result.converged} iterations={result.iterations} "
          f"objective={result.objective_trace[-1]:.6g}; outputs in {args.out}")
    return 0


def _parse_grid(text):
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise InputError(f"bad grid specification {text!r}") from None
    if not values:
        raise InputError(f"bad grid specification {text!r}")
    return np.asarray(values)


def _write_bic_table(path, records: list[BicRecord]) -> None:
    with open(path, "w") as fh:
        fh.write("lambda\trho\tbic\ts_n\tk_n\tconverged\n")
        for r in records:
            fh.write(
                f"{FLOAT_FMT % r.lam}\t{FLOAT_FMT % r.rho}\t{FLOAT_FMT % r.bic}\t"
                f"{r.s_n}\t{r.k_n}\t{int(r.converged)}\n"
            )


def _cmd_tune(args) -> int:
    data, gene_names, marker_names = _load_dataset(args)
    stats = sufficient_stats(data, center=args.center)
    opts = _solve_options(args)
    lam_grid, rho_grid = default_grids(stats, size=args.grid_size)
    if args.lambda_grid:
        lam_grid = _parse_grid(args.lambda_grid)
    if args.rho_grid:
        rho_grid = _parse_grid(args.rho_grid)
    best, records = grid_search(
        stats, lam_grid, rho_grid, adaptive=args.adaptive, opts=opts,
        max_workers=args.threads,
    )
    os.makedirs(args.out, exist_ok=True)
    _write_bic_table(os.path.join(args.out, "bic_grid.tsv"), records)
    write_fit(best, args.out, gene_names, marker_names, force=True)
    print(f"tune: best lambda={best.penalty.lam:.6g} rho={best.penalty.rho:.6g}; "
          f"outputs in {args.out}")
    return 0


def _cmd_mlasso(args) -> int:
    data, gene_names, marker_names = _load_dataset(args)
    p, q = data.p, data.q
    genes = gene_names or [f"g{i + 1}" for i in range(p)]
    markers = marker_names or [f"m{j + 1}" for j in range(q)]
    result = mlasso_graph(data, args.lam)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "edges.tsv"), "w") as fh:
        fh.write("gene_i\tgene_j\n")
        for i in range(p):
            for j in range(i + 1, p):
                if result.adjacency[i, j]:
                    fh.write(f"{genes[i]}\t{genes[j]}\n")
    with open(os.path.join(args.out, "assoc.tsv"), "w") as fh:
        fh.write("gene\tmarker\tcoefficient\n")
        for i in range(p):
            for j in range(q):
                c = result.marker_coefs[i, j]
                if abs(c) > 1e-10:
                    fh.write(f"{genes[i]}\t{markers[j]}\t{FLOAT_FMT % c}\n")
    n_edges = int(result.adjacency.sum()) // 2
    print(f"mlasso: {n_edges} edges; outputs in {args.out}")
    return 0


def _cmd_eval(args) -> int:
    truth, _ = read_matrix(args.truth, args.delimiter, args.header)
    est, _ = read_matrix(args.est, args.delimiter, args.header)
    report = evaluate_estimate(truth, est)
    payload = {k: getattr(report, k) for k in (
        "loss", "norm_elem_inf", "norm_mat_inf", "norm_spectral",
        "norm_frobenius", "dist", "spe", "sen", "mcc")}
    with open(args.out, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(json.dumps(payload, indent=2, sort_keys=True))
    return 0


def _format_cell(value) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return FLOAT_FMT % value
    return str(value)


def _cmd_bench(args) -> int:
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    config = SimConfig(args.p, args.q, args.n, args.theta_prob, args.gamma_prob, args.seed)
    rows = run_benchmark(
        config, args.replications, methods=methods, grid_size=args.grid_size,
        max_workers=args.threads,
    )
    outdir = os.path.dirname(args.out)
    if outdir:
        os.makedirs(outdir, exist_ok=True)
    with open(args.out, "w") as fh:
        fh.write("\t".join(BENCH_COLUMNS) + "\n")
        for row in rows:
            fh.write("\t".join(_format_cell(row[c]) for c in BENCH_COLUMNS) + "\n")
    print(f"bench: wrote {len(rows)} rows to {args.out}")
    return 0


def cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(_expand_config(argv))
        return args.func(args)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except (InputError, ParseError, RankError, NotPositiveDefiniteError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ConvergenceError, NumericalError, SearchError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli())


if __name__ == "__main__":
    main()
