"""Command-line entry point.

Subcommands: ``generate-mesh``, ``check``, ``solve`` and ``convergence``.
Exit codes: 0 success, 1 diagnostic failure, 2 usage or configuration
error, 3 numerical failure.

Settings come from built-in defaults, then a JSON ``--config`` file, then
command-line flags (later sources win).
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np

from .errors import BadSequence, InvalidParam, MeshError, NonPositive, ParseError, PolyMFDError
from .dof import build_quadrature
from .forms import StabilizationConfig, build_forms, spectral_check
from .mesh import PolyMesh, generate_mesh, validate_mesh
from .mesh_io import export_vtk, load_mesh, save_fields, save_mesh
from .problems import PROBLEMS, get_problem, manufactured, scalar_function
from .solve import ProblemSpec, solve_advection, solve_mixed, solve_nodal
from .study import METHODS, rate_table_csv, solve_and_measure

log = logging.getLogger("polymfd")

EXIT_OK, EXIT_DIAGNOSTIC, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2, 3
CHECK_TOL = 1e-10
KINDS = ("tet", "hex", "perturbed-hex")

_VECTOR3 = {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}
_MATRIX3 = {"type": "array", "items": _VECTOR3, "minItems": 3, "maxItems": 3}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "mesh": {"oneOf": [
            {"type": "string"},
            {"type": "object", "additionalProperties": False, "required": ["file"],
             "properties": {"file": {"type": "string"}}},
            {"type": "object", "additionalProperties": False, "required": ["kind"],
             "properties": {"kind": {"enum": list(KINDS)},
                            "n": {"type": "integer", "minimum": 1},
                            "delta": {"type": "number"},
                            "seed": {"type": "integer"}}},
        ]},
        "levels": {"type": "array", "items": {"type": "integer", "minimum": 1}},
        "method": {"enum": list(METHODS)},
        "problem": {"oneOf": [
            {"type": "string"},
            {"type": "object", "additionalProperties": False,
             "properties": {"u": {"type": "string"}, "K": _MATRIX3, "beta": _VECTOR3,
                            "g": {"type": ["string", "number"]},
                            "dirichlet": {"type": ["string", "number"]}}},
        ]},
        "u_scale_F": {"type": "number", "exclusiveMinimum": 0},
        "u_scale_N": {"type": "number", "exclusiveMinimum": 0},
        "sd": {"type": "boolean"},
        "tau": {"type": ["number", "null"], "minimum": 0},
        "cell_weights": {"enum": ["uniform", "moment"]},
        "solver": {"enum": ["auto", "cg", "direct"]},
        "rtol": {"type": "number", "exclusiveMinimum": 0},
        "seed": {"type": "integer"},
        "out": {"type": "string"},
    },
}


@dataclass
class RunConfig:
    """Resolved settings of one command."""

    mesh: object = "hex:2"
    levels: Optional[list] = None
    method: str = "nodal"
    problem: object = "trig"
    u_scale_F: float = 1.0
    u_scale_N: float = 1.0
    sd: bool = False
    tau: Optional[float] = None
    cell_weights: str = "uniform"
    solver: str = "auto"
    rtol: float = 1e-12
    seed: int = 0
    out: str = "polymfd"

    @property
    def stabilization(self) -> StabilizationConfig:
        return StabilizationConfig(self.u_scale_F, self.u_scale_N)


class UsageError(Exception):
    """Bad command line or configuration (exit code 2)."""


# ----------------------------------------------------------------------------
# configuration
# ----------------------------------------------------------------------------


def read_config(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    try:
        jsonschema.validate(data, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(map(str, exc.absolute_path)) or "<root>"
        raise UsageError(f"{path}: {where}: {exc.message}") from None
    return data


_FLAG_KEYS = {"mesh": "mesh", "method": "method", "out": "out", "seed": "seed",
              "u_scale_f": "u_scale_F", "u_scale_n": "u_scale_N", "sd": "sd", "tau": "tau",
              "cell_weights": "cell_weights", "levels": "levels", "problem": "problem",
              "solver": "solver", "rtol": "rtol"}


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "config", None):
        data = read_config(args.config)
        cfg = replace(cfg, **data)
    overrides = {}
    for flag, key in _FLAG_KEYS.items():
        val = getattr(args, flag, None)
        if val is not None:
            overrides[key] = val
    cfg = replace(cfg, **overrides)
    if cfg.method not in METHODS:
        raise UsageError(f"unknown method {cfg.method!r}; choose from {', '.join(METHODS)}")
    for name in ("u_scale_F", "u_scale_N"):
        if not getattr(cfg, name) > 0:
            raise UsageError(f"{name} must be strictly positive")
    return cfg


def parse_mesh_spec(spec, seed: int = 0):
    """``"kind:n[:delta]"`` or a dict becomes generator parameters; anything
    else is a path to a JSON mesh."""
    if isinstance(spec, dict):
        if "file" in spec:
            return {"file": spec["file"]}
        return {"kind": spec["kind"], "n": spec.get("n", 2), "delta": spec.get("delta", 0.0),
                "seed": spec.get("seed", seed)}
    head = str(spec).split(":")
    if head[0] in KINDS:
        try:
            n = int(head[1]) if len(head) > 1 and head[1] else 2
            delta = float(head[2]) if len(head) > 2 else 0.0
        except ValueError:
            raise UsageError(f"bad mesh spec {spec!r}; expected kind:n[:delta]") from None
        if len(head) > 3:
            raise UsageError(f"bad mesh spec {spec!r}; expected kind:n[:delta]")
        return {"kind": head[0], "n": n, "delta": delta, "seed": seed}
    return {"file": str(spec)}


def obtain_mesh(spec, seed: int = 0) -> PolyMesh:
    params = parse_mesh_spec(spec, seed)
    if "file" in params:
        if not os.path.exists(params["file"]):
            raise UsageError(f"mesh file not found: {params['file']}")
        return load_mesh(params["file"])
    return generate_mesh(params["kind"], params["n"], params["delta"], seed=params["seed"])


def build_problem(problem) -> ProblemSpec:
    if isinstance(problem, str):
        if problem not in PROBLEMS:
            raise UsageError(f"unknown problem {problem!r}; choose from {', '.join(sorted(PROBLEMS))}")
        return get_problem(problem)
    K = problem.get("K")
    beta = problem.get("beta")
    if "u" in problem:
        if "g" in problem or "dirichlet" in problem:
            raise UsageError("give either an exact solution 'u' or 'g'/'dirichlet', not both")
        return manufactured(problem["u"], K, beta)

    def _data(v):
        return scalar_function(v) if isinstance(v, str) else float(v)

    return ProblemSpec(K=np.eye(3) if K is None else np.asarray(K, dtype=float),
                       beta=None if beta is None else np.asarray(beta, dtype=float),
                       g=_data(problem.get("g", 0.0)),
                       dirichlet=_data(problem.get("dirichlet", 0.0)), name="inline")


@contextlib.contextmanager
def thread_limit():
    """Cap BLAS/OpenMP threads from ``POLYMFD_THREADS`` when it is set."""
    value = os.environ.get("POLYMFD_THREADS")
    if not value:
        yield
        return
    try:
        count = int(value)
        if count < 1:
            raise ValueError
    except ValueError:
        raise UsageError(f"POLYMFD_THREADS must be a positive integer, got {value!r}") from None
    from threadpoolctl import threadpool_limits

    with threadpool_limits(limits=count):
        yield


def _prefix(out: str) -> Path:
    p = Path(out)
    if p.parent and not p.parent.exists():
        p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _with_suffix(prefix: Path, suffix: str) -> Path:
    return prefix.with_name(prefix.name + suffix)


# ----------------------------------------------------------------------------
# commands
# ----------------------------------------------------------------------------


def cmd_generate(cfg: RunConfig) -> int:
    mesh = obtain_mesh(cfg.mesh, cfg.seed)
    out = _prefix(cfg.out)
    path = out if out.suffix == ".json" else _with_suffix(out, ".json")
    save_mesh(mesh, path)
    log.info("wrote %s (%d cells)", path, mesh.n_cells)
    return EXIT_OK


CHECK_COLUMNS = ("cell", "residual_MF", "residual_MN", "exact_F", "exact_N",
                 "c_low_F", "c_high_F", "c_low_N", "c_high_N", "status")


def _rel(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.abs(a - b).max() / max(np.abs(b).max(), np.finfo(float).tiny))


def check_cell(L) -> dict:
    """Consistency residuals and constant-field exactness of one cell's
    local matrices (relative, max norm)."""
    return {
        "residual_MF": _rel(L.M_F @ L.N, L.R),
        "residual_MN": _rel(L.M_N @ L.B, L.A),
        "exact_F": _rel(L.N.T @ L.M_F @ L.N, L.volume * L.K),
        "exact_N": _rel(L.B.T @ L.M_N @ L.B, L.volume * L.K),
    }


def check_mesh(mesh: PolyMesh, cfg: RunConfig) -> tuple[list[dict], list[str]]:
    """Per-cell diagnostic rows and a list of problems (empty when healthy)."""
    problems = list(validate_mesh(mesh).violations)
    rows = []
    try:
        forms = build_forms(mesh, cfg=cfg.stabilization,
                            quad=build_quadrature(mesh, cfg.cell_weights))
    except PolyMFDError as exc:
        problems.append(f"local matrices: {exc}")
        return rows, problems
    for c, L in enumerate(forms):
        row = {"cell": c, **check_cell(L), "status": "ok"}
        try:
            row["c_low_F"], row["c_high_F"] = spectral_check(L.M_F, mesh, c, "F")
            row["c_low_N"], row["c_high_N"] = spectral_check(L.M_N, mesh, c, "N")
        except NonPositive as exc:
            row["status"] = "nonpositive"
            problems.append(str(exc))
        worst = max(row[k] for k in ("residual_MF", "residual_MN", "exact_F", "exact_N"))
        if not worst <= CHECK_TOL:
            row["status"] = "inconsistent"
            problems.append(f"cell {c}: relative residual {worst:.3e} above {CHECK_TOL:g}")
        rows.append(row)
    return rows, problems


def cmd_check(cfg: RunConfig) -> int:
    out = _prefix(cfg.out)
    path = out if out.suffix == ".csv" else _with_suffix(out, "_check.csv")
    rows, problems = [], []
    try:
        mesh = obtain_mesh(cfg.mesh, cfg.seed)
    except (MeshError, ParseError) as exc:
        problems.append(f"mesh: {exc}")
    else:
        rows, problems = check_mesh(mesh, cfg)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CHECK_COLUMNS)
        for row in rows:
            writer.writerow([row["cell"]] + [
                repr(float(row[k])) if k in row else "" for k in CHECK_COLUMNS[1:-1]
            ] + [row["status"]])
    for msg in problems:
        log.error("%s", msg)
    log.info("wrote %s (%d cells, %d problems)", path, len(rows), len(problems))
    return EXIT_DIAGNOSTIC if problems else EXIT_OK


def _solver_kw(cfg: RunConfig) -> dict:
    return dict(cfg=cfg.stabilization, cell_weights=cfg.cell_weights, sd=cfg.sd, tau=cfg.tau,
                rtol=cfg.rtol, solver=cfg.solver)


def cmd_solve(cfg: RunConfig) -> int:
    mesh = obtain_mesh(cfg.mesh, cfg.seed)
    spec = build_problem(cfg.problem)
    out = _prefix(cfg.out)
    t0 = time.perf_counter()
    kw = _solver_kw(cfg)
    if spec.exact is not None:
        report, sol, res, forms = solve_and_measure(mesh, spec, cfg.method, **kw)
        errors = {k: v for k, v in report.errors().items() if v is not None}
    else:
        base = dict(cfg=kw["cfg"], cell_weights=kw["cell_weights"], rtol=kw["rtol"],
                    method=kw["solver"])
        if cfg.method == "mixed":
            sol, res, forms = solve_mixed(mesh, spec, **base)
        elif cfg.method == "advect":
            sol, res, forms = solve_advection(mesh, spec, sd=cfg.sd, tau=cfg.tau, **base)
        else:
            sol, res, forms = solve_nodal(mesh, spec, **base)
        errors = {}
    elapsed = time.perf_counter() - t0

    summary = {
        "method": cfg.method,
        "problem": spec.name,
        "mesh": {"vertices": mesh.n_vertices, "edges": mesh.n_edges, "faces": mesh.n_faces,
                 "cells": mesh.n_cells, "h": mesh.h},
        "n_dofs": int(len(res.x)),
        "solver": res.method,
        "iterations": int(res.iterations),
        "residual": res.residual,
        "seconds": elapsed,
        "errors": errors,
    }
    if cfg.method == "mixed":
        vol = mesh.cell_volume
        mean_p = float(np.dot(vol, sol.p_h) / vol.sum())
        summary.update(mean_p=mean_p, mean_zero=abs(mean_p) <= 1e-12 * max(1.0, np.abs(sol.p_h).max()),
                       multiplier=sol.multiplier, offset=sol.offset)
        save_fields(_with_suffix(out, "_fields.json"), face={"F_h": sol.F_h},
                    cell={"p_h": sol.p_h})
        export_vtk(mesh, _with_suffix(out, ".vtk"), cell_data={"p_h": sol.p_h})
    else:
        save_fields(_with_suffix(out, "_fields.json"), node={"u_h": sol})
        export_vtk(mesh, _with_suffix(out, ".vtk"), point_data={"u_h": sol})
    with open(_with_suffix(out, "_summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    log.info("%s solve: %d dofs, residual %.3e", cfg.method, summary["n_dofs"], res.residual)
    return EXIT_OK


def cmd_convergence(cfg: RunConfig) -> int:
    params = parse_mesh_spec(cfg.mesh, cfg.seed)
    if "file" in params:
        raise UsageError("convergence needs a generated mesh family, not a file")
    levels = list(cfg.levels) if cfg.levels else [params["n"]]
    if len(levels) < 2:
        raise BadSequence("need at least two refinement levels")
    spec = build_problem(cfg.problem)
    kw = _solver_kw(cfg)
    reports = []
    for n in levels:
        mesh = generate_mesh(params["kind"], n, params["delta"], seed=params["seed"])
        reports.append(solve_and_measure(mesh, spec, cfg.method, **kw)[0])
        log.info("n=%d h=%.4g done", n, mesh.h)
    text = rate_table_csv(reports)
    out = _prefix(cfg.out)
    path = out if out.suffix == ".csv" else _with_suffix(out, "_convergence.csv")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    log.info("wrote %s", path)
    return EXIT_OK


COMMANDS = {
    "generate-mesh": cmd_generate,
    "check": cmd_check,
    "solve": cmd_solve,
    "convergence": cmd_convergence,
}


def _levels(text: str) -> list[int]:
    try:
        return [int(t) for t in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma separated list of integers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="polymfd", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--mesh", help="JSON mesh file or generator spec kind:n[:delta]")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output path or prefix")
        p.add_argument("--u-scale-f", type=float, dest="u_scale_f")
        p.add_argument("--u-scale-n", type=float, dest="u_scale_n")
        p.add_argument("--cell-weights", choices=["uniform", "moment"])
        if name in ("solve", "convergence"):
            # validated after merging with the config file so a bad value exits 2 either way
            p.add_argument("--method", help="nodal, mixed or advect")
            p.add_argument("--problem", help="problem name: " + ", ".join(sorted(PROBLEMS)))
            p.add_argument("--sd", action="store_true", default=None,
                           help="streamline-diffusion term for advect")
            p.add_argument("--tau", type=float, help="fixed SD parameter instead of the Peclet switch")
            p.add_argument("--solver", choices=["auto", "cg", "direct"])
            p.add_argument("--rtol", type=float)
        if name == "convergence":
            p.add_argument("--levels", type=_levels, help="refinement levels, e.g. 2,4,8")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
        with thread_limit():
            return COMMANDS[args.command](cfg)
    except (UsageError, InvalidParam, ParseError, BadSequence) as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except MeshError as exc:
        log.error("invalid mesh: %s", exc)
        return EXIT_DIAGNOSTIC
    except PolyMFDError as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
