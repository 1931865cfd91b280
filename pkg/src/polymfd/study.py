"""Refinement studies on generated meshes."""

from __future__ import annotations

import csv
import io
from typing import Sequence

from .forms import StabilizationConfig
from .mesh import generate_mesh
from .post import ErrorReport, convergence_rates, mixed_errors, nodal_errors
from .solve import ProblemSpec, solve_advection, solve_mixed, solve_nodal

METHODS = ("nodal", "mixed", "advect")


def solve_and_measure(mesh, spec: ProblemSpec, method: str = "nodal",
                      cfg: StabilizationConfig | None = None, cell_weights: str = "uniform",
                      sd: bool = False, tau=None, rtol: float = 1e-12, solver: str = "auto"):
    """Solve one problem and return ``(report, solution, result, forms)``.

    ``solver`` is passed to :func:`polymfd.solve.solve_system`.
    """
    kw = dict(cfg=cfg, cell_weights=cell_weights, method=solver)
    if method == "nodal":
        sol, res, forms = solve_nodal(mesh, spec, rtol=rtol, **kw)
        report = nodal_errors(sol, spec, mesh, forms, n_dofs=len(res.x))
    elif method == "advect":
        sol, res, forms = solve_advection(mesh, spec, sd=sd, tau=tau, rtol=rtol, **kw)
        report = nodal_errors(sol, spec, mesh, forms, n_dofs=len(res.x))
    elif method == "mixed":
        sol, res, forms = solve_mixed(mesh, spec, rtol=rtol, **kw)
        report = mixed_errors(sol, spec, mesh, forms, n_dofs=len(res.x))
    else:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    return report, sol, res, forms


def run_convergence(kind: str, levels: Sequence[int], spec: ProblemSpec, method: str = "nodal",
                    delta: float = 0.0, seed=0, **solve_kw) -> list[ErrorReport]:
    """Error reports on ``generate_mesh(kind, n, delta, seed)`` for each ``n``."""
    reports = []
    for n in levels:
        mesh = generate_mesh(kind, n, delta, seed=seed)
        reports.append(solve_and_measure(mesh, spec, method, **solve_kw)[0])
    return reports


CSV_COLUMNS = ("h", "n_cells") + ErrorReport.ERROR_NAMES + tuple(
    "rate_" + name[4:] for name in ErrorReport.ERROR_NAMES
)


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    return repr(float(v))


def rate_table_csv(reports: Sequence[ErrorReport]) -> str:
    """CSV text with one row per report; floats are written with ``repr`` so
    equal inputs give byte-identical files."""
    rates = convergence_rates(reports)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for rep, rt in zip(reports, rates):
        row = [_cell(rep.h), str(rep.n_cells)]
        row += [_cell(getattr(rep, k)) for k in ErrorReport.ERROR_NAMES]
        row += [_cell(rt[k]) for k in ErrorReport.ERROR_NAMES]
        writer.writerow(row)
    return buf.getvalue()
