"""Reconstructions, piecewise-linear postprocessing, error norms and rates."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .dof import QuadratureWeights, build_quadrature, cell_quadrature, interp_cell, interp_face, interp_node
from .errors import BadSequence, MissingExact
from .forms import Forms
from .mesh import PolyMesh
from .solve import MixedSolution, ProblemSpec


@dataclass
class CellLinearField:
    """Per cell ``x -> value[c] + slope[c] . (x - center[c])``."""

    value: np.ndarray
    slope: np.ndarray
    center: np.ndarray

    def evaluate(self, c: int, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        return self.value[c] + (x - self.center[c]) @ self.slope[c]


def reconstruct_vector(G: np.ndarray, mesh: PolyMesh, forms: Forms) -> np.ndarray:
    """Cellwise constant vector ``R^T G|_P / |P|`` (exact on constant fields)."""
    G = np.asarray(G, dtype=float)
    out = np.empty((mesh.n_cells, 3))
    for c, L in enumerate(forms):
        out[c] = L.R.T @ (mesh.cell_signs[c] * G[mesh.cell_faces[c]]) / L.volume
    return out


def reconstruct_gradient(v: np.ndarray, mesh: PolyMesh, forms: Forms) -> np.ndarray:
    """Cellwise ``K^-1 A^T v|_P / |P|`` (exact on linear functions)."""
    v = np.asarray(v, dtype=float)
    out = np.empty((mesh.n_cells, 3))
    for c, L in enumerate(forms):
        out[c] = np.linalg.solve(L.K, L.A.T @ v[mesh.cell_vertices[c]]) / L.volume
    return out


def postprocess_mixed(sol: MixedSolution, mesh: PolyMesh, forms: Forms) -> CellLinearField:
    slope = np.empty((mesh.n_cells, 3))
    for c, L in enumerate(forms):
        Fp = mesh.cell_signs[c] * sol.F_h[mesh.cell_faces[c]]
        slope[c] = np.linalg.solve(L.K, L.R.T @ Fp) / L.volume
    return CellLinearField(np.array(sol.p_h, dtype=float), slope, mesh.cell_centroid.copy())


def postprocess_nodal(u: np.ndarray, mesh: PolyMesh, forms: Forms,
                      quad: Optional[QuadratureWeights] = None) -> CellLinearField:
    """Centroid value from the cell vertex rule, slope from the reconstructed gradient.

    By default the cell rule uses linear-exact moment weights, so the field
    reproduces linear data on any cell.  Passing ``quad`` with uniform
    weights gives the same result on tetrahedra only.
    """
    if quad is None:
        quad = forms.quad if forms.quad.cell_mode == "moment" else build_quadrature(mesh, "moment")
    u = np.asarray(u, dtype=float)
    value = np.array([
        np.dot(quad.cell[c], u[cv]) / mesh.cell_volume[c]
        for c, cv in enumerate(mesh.cell_vertices)
    ])
    return CellLinearField(value, reconstruct_gradient(u, mesh, forms), mesh.cell_centroid.copy())


@dataclass
class ErrorReport:
    h: float
    n_cells: int
    n_dofs: int
    err_nodal: Optional[float] = None
    err_cell: Optional[float] = None
    err_flux: Optional[float] = None
    err_grad: Optional[float] = None
    err_post: Optional[float] = None

    ERROR_NAMES = ("err_nodal", "err_cell", "err_flux", "err_grad", "err_post")

    def errors(self) -> dict:
        return {k: getattr(self, k) for k in self.ERROR_NAMES}


def _linear_field_error(field: CellLinearField, exact, mesh: PolyMesh) -> float:
    total = 0.0
    for c in range(mesh.n_cells):
        pts, wts = cell_quadrature(mesh, c)
        total += np.dot(wts, (field.evaluate(c, pts) - exact(pts)) ** 2)
    return math.sqrt(total)


def mean_value(func, mesh: PolyMesh) -> float:
    return float(np.dot(interp_cell(func, mesh), mesh.cell_volume) / mesh.cell_volume.sum())


def nodal_errors(u_h: np.ndarray, spec: ProblemSpec, mesh: PolyMesh, forms: Forms,
                 n_dofs: int | None = None) -> ErrorReport:
    """Discrete L2 nodal error, reconstructed-gradient error and the L2 error
    of the postprocessed piecewise-linear field."""
    if spec.exact is None:
        raise MissingExact("problem has no exact solution")
    quad = forms.quad
    diff = u_h - interp_node(spec.exact.u, mesh)
    e_nod = math.sqrt(sum(np.dot(quad.cell[c], diff[cv] ** 2)
                          for c, cv in enumerate(mesh.cell_vertices)))
    grad = reconstruct_gradient(u_h, mesh, forms)
    gex = np.asarray(spec.exact.grad(mesh.cell_centroid)).reshape(-1, 3)
    e_grad = math.sqrt(np.dot(mesh.cell_volume, ((grad - gex) ** 2).sum(axis=1)))
    post = postprocess_nodal(u_h, mesh, forms)
    e_post = _linear_field_error(post, spec.exact.u, mesh)
    return ErrorReport(mesh.h, mesh.n_cells,
                       int(n_dofs if n_dofs is not None else (~mesh.boundary_vertex).sum()),
                       err_nodal=e_nod, err_grad=e_grad, err_post=e_post)


def mixed_errors(sol: MixedSolution, spec: ProblemSpec, mesh: PolyMesh, forms: Forms,
                 n_dofs: int | None = None) -> ErrorReport:
    """Cell pressure error against ``u - mean(u)``, flux error in the ``M_F``
    energy norm and the L2 error of the postprocessed pressure."""
    if spec.exact is None:
        raise MissingExact("problem has no exact solution")
    mean = mean_value(spec.exact.u, mesh)

    def p_exact(x):
        return spec.exact.u(x) - mean

    p_int = interp_cell(spec.exact.u, mesh) - mean
    e_cell = math.sqrt(np.dot(mesh.cell_volume, (sol.p_h - p_int) ** 2))
    delta = sol.F_h - interp_face(spec.flux, mesh)
    e_flux = 0.0
    for c, L in enumerate(forms):
        d = mesh.cell_signs[c] * delta[mesh.cell_faces[c]]
        e_flux += d @ L.M_F @ d
    e_flux = math.sqrt(max(e_flux, 0.0))
    post = postprocess_mixed(sol, mesh, forms)
    e_post = _linear_field_error(post, p_exact, mesh)
    return ErrorReport(mesh.h, mesh.n_cells,
                       int(n_dofs if n_dofs is not None else mesh.n_faces + mesh.n_cells),
                       err_cell=e_cell, err_flux=e_flux, err_post=e_post)


def compute_errors(spec: ProblemSpec, mesh: PolyMesh, forms: Forms, *, nodal=None,
                   mixed: MixedSolution | None = None) -> ErrorReport:
    """Errors of a nodal field or a mixed solution against ``spec.exact``."""
    if spec.exact is None:
        raise MissingExact("problem has no exact solution")
    if (nodal is None) == (mixed is None):
        raise ValueError("pass exactly one of nodal= or mixed=")
    if nodal is not None:
        return nodal_errors(np.asarray(nodal, dtype=float), spec, mesh, forms)
    return mixed_errors(mixed, spec, mesh, forms)


EXACT = "exact"
EXACT_TOL = 1e-12


def rate(e1, e2, h1: float, h2: float, exact_tol: float = EXACT_TOL):
    """Observed order ``log(e1/e2) / log(h1/h2)``; ``"exact"`` when both
    errors are below ``exact_tol``; ``None`` when an error is missing."""
    if e1 is None or e2 is None:
        return None
    if e1 <= exact_tol and e2 <= exact_tol:
        return EXACT
    if e1 <= 0.0 or e2 <= 0.0:
        return math.inf if e2 <= 0.0 else -math.inf
    return math.log(e1 / e2) / math.log(h1 / h2)


def convergence_rates(reports: Sequence[ErrorReport], exact_tol: float = EXACT_TOL) -> list[dict]:
    """Rates between consecutive reports, one dict per report (the first
    row has no rates).

    Raises
    ------
    BadSequence
        Fewer than two reports, or ``h`` not strictly decreasing.
    """
    if len(reports) < 2:
        raise BadSequence("need at least two refinement levels")
    hs = [r.h for r in reports]
    if any(b >= a for a, b in zip(hs, hs[1:])):
        raise BadSequence(f"mesh sizes must strictly decrease, got {hs}")
    rows = [{k: None for k in ErrorReport.ERROR_NAMES}]
    for prev, cur in zip(reports, reports[1:]):
        rows.append({
            k: rate(getattr(prev, k), getattr(cur, k), prev.h, cur.h, exact_tol)
            for k in ErrorReport.ERROR_NAMES
        })
    return rows


__all__ = [
    "CellLinearField", "ErrorReport", "reconstruct_vector", "reconstruct_gradient",
    "postprocess_mixed", "postprocess_nodal", "compute_errors", "nodal_errors",
    "mixed_errors", "convergence_rates", "rate", "mean_value", "EXACT",
]
