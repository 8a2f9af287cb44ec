"""Delimited-matrix parsing and fit-output files.

All numeric output uses the %.12g format so written matrices round-trip
through :func:`read_matrix` to 12 significant digits.
"""
from __future__ import annotations

import json
import os

import numpy as np

from .errors import InputError, ParseError
from .model import CggmFit
from .selection import NONZERO_TOL

__all__ = ["FLOAT_FMT", "read_matrix", "write_matrix", "write_fit"]

FLOAT_FMT = "%.12g"


def read_matrix(path, delimiter: str = "\t", has_header: bool = False):
    """Parse a rectangular numeric matrix with rows as samples.

    Returns ``(values, column_names)``; the names are None without a header.
    Ragged rows, non-numeric cells, non-finite values, and empty files raise
    :class:`ParseError` naming the offending (1-based) line.
    """
    with open(path) as fh:
        lines = fh.read().splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        raise ParseError(f"{path}: empty file")
    names = None
    start = 0
    if has_header:
        names = [c.strip() for c in lines[0].split(delimiter)]
        start = 1
        if not lines[start:]:
            raise ParseError(f"{path}: no data rows after the header")
    rows = []
    width = None
    for offset, line in enumerate(lines[start:], start=start + 1):
        cells = line.split(delimiter)
        if width is None:
            width = len(cells)
        elif len(cells) != width:
            raise ParseError(
                f"{path}: line {offset}: expected {width} columns, got {len(cells)}"
            )
        row = []
        for cell in cells:
            try:
                value = float(cell)
            except ValueError:
                raise ParseError(
                    f"{path}: line {offset}: non-numeric value {cell.strip()!r}"
                ) from None
            if not np.isfinite(value):
                raise ParseError(
                    f"{path}: line {offset}: non-finite value {cell.strip()!r}"
                )
            row.append(value)
        rows.append(row)
    values = np.array(rows, dtype=float)
    if names is not None and len(names) != values.shape[1]:
        raise ParseError(
            f"{path}: header has {len(names)} names for {values.shape[1]} columns"
        )
    return values, names


def write_matrix(path, a, names=None, delimiter: str = "\t") -> None:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    with open(path, "w") as fh:
        if names is not None:
            fh.write(delimiter.join(names) + "\n")
        for row in a:
            fh.write(delimiter.join(FLOAT_FMT % v for v in row) + "\n")


def write_fit(
    fit: CggmFit,
    outdir,
    gene_names=None,
    marker_names=None,
    force: bool = False,
) -> dict:
    """Write the fit as a file set under ``outdir``:

    - ``theta.tsv`` / ``gamma.tsv``: the full estimated matrices;
    - ``edges.tsv``: one row per nonzero upper-triangle precision entry with
      its partial correlation ``-theta_ij / sqrt(theta_ii theta_jj)``;
    - ``assoc.tsv``: nonzero (gene, marker, coefficient) triples;
    - ``fit.json``: penalty levels, objective trace, iteration counts.

    Refuses to write a non-converged fit unless ``force`` is set.  Returns
    the mapping of logical name to path.
    """
    if not fit.converged and not force:
        raise InputError("fit did not converge; pass force=True to write anyway")
    os.makedirs(outdir, exist_ok=True)
    p, q = fit.gamma.shape
    genes = gene_names if gene_names is not None else [f"g{i + 1}" for i in range(p)]
    markers = marker_names if marker_names is not None else [f"m{j + 1}" for j in range(q)]
    if len(genes) != p or len(markers) != q:
        raise InputError("gene/marker name lists do not match the fit dimensions")

    paths = {name: os.path.join(outdir, name + ext)
             for name, ext in (("theta", ".tsv"), ("gamma", ".tsv"),
                               ("edges", ".tsv"), ("assoc", ".tsv"), ("fit", ".json"))}
    write_matrix(paths["theta"], fit.theta)
    write_matrix(paths["gamma"], fit.gamma)

    diag = np.diag(fit.theta)
    with open(paths["edges"], "w") as fh:
        fh.write("gene_i\tgene_j\ttheta_ij\tpartial_correlation\n")
        for i in range(p):
            for j in range(i + 1, p):
                t = fit.theta[i, j]
                if abs(t) <= NONZERO_TOL:
                    continue
                pc = -t / np.sqrt(diag[i] * diag[j])
                fh.write(
                    f"{genes[i]}\t{genes[j]}\t{FLOAT_FMT % t}\t{FLOAT_FMT % pc}\n"
                )
    with open(paths["assoc"], "w") as fh:
        fh.write("gene\tmarker\tgamma\n")
        for i in range(p):
            for j in range(q):
                g = fit.gamma[i, j]
                if abs(g) > NONZERO_TOL:
                    fh.write(f"{genes[i]}\t{markers[j]}\t{FLOAT_FMT % g}\n")
    payload = {
        "lambda": fit.penalty.lam,
        "rho": fit.penalty.rho,
        "adaptive": fit.penalty.adaptive,
        "iterations": fit.iterations,
        "converged": fit.converged,
        "objective_trace": list(map(float, fit.objective_trace)),
    }
    with open(paths["fit"], "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return paths
