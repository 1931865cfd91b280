"""Discrete spaces, interpolation operators and quadrature weights.

Fields are plain numpy arrays indexed by entity:

* cell field  (one value per cell)
* face field  (average flux density ``(1/|f|) int_f F . n_f`` against the
  fixed face normal; the flux through ``f`` is ``|f|`` times the value)
* edge field  (per edge, oriented from the lower to the higher vertex index)
* node field  (one value per vertex)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import nnls

from .errors import WeightSolveFailure
from .mesh import PolyMesh

# 4-point degree-2 rule on the reference tetrahedron (barycentric)
_TET_A = 0.5854101966249685
_TET_B = 0.1381966011250105
_TET_BARY = np.full((4, 4), _TET_B) + np.eye(4) * (_TET_A - _TET_B)


def tet_quadrature(tets: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Points and weights of the degree-2 rule on an array of tetrahedra.

    ``tets`` has shape (k, 4, 3); returns points (4k, 3) and weights (4k,).
    """
    tets = np.asarray(tets, dtype=float)
    vol = np.abs(np.einsum(
        "ki,ki->k",
        tets[:, 1] - tets[:, 0],
        np.cross(tets[:, 2] - tets[:, 0], tets[:, 3] - tets[:, 0]),
    )) / 6.0
    pts = np.einsum("qj,kjd->kqd", _TET_BARY, tets).reshape(-1, 3)
    wts = np.repeat(vol / 4.0, 4)
    return pts, wts


def cell_quadrature(mesh: PolyMesh, c: int) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature on cell ``c``, exact for quadratic polynomials."""
    return tet_quadrature(mesh.subtets[c])


def integrate_cells(mesh: PolyMesh, func) -> np.ndarray:
    """``int_P func`` for every cell; ``func`` maps (m, 3) points to (m, ...)."""
    out = []
    for c in range(mesh.n_cells):
        pts, wts = cell_quadrature(mesh, c)
        out.append(np.tensordot(wts, np.asarray(func(pts), dtype=float), axes=(0, 0)))
    return np.array(out)


def interp_cell(func, mesh: PolyMesh) -> np.ndarray:
    """Cell averages ``(1/|P|) int_P p``."""
    return integrate_cells(mesh, func) / mesh.cell_volume


def _face_fan_centroids(mesh: PolyMesh, f: int) -> tuple[np.ndarray, np.ndarray]:
    pts = mesh.vertices[mesh.faces[f]]
    if len(pts) == 3:
        return pts.mean(axis=0)[None, :], np.array([mesh.face_area[f]])
    xf = mesh.face_centroid[f]
    b = np.roll(pts, -1, axis=0)
    areas = 0.5 * np.cross(pts - xf, b - xf) @ mesh.face_normal[f]
    return (xf + pts + b) / 3.0, areas


def interp_face(func, mesh: PolyMesh) -> np.ndarray:
    """Face averages of ``F . n_f`` with the fan-triangle centroid rule.

    Exact for fields with linear components.
    """
    out = np.empty(mesh.n_faces)
    for f in range(mesh.n_faces):
        x, w = _face_fan_centroids(mesh, f)
        vals = np.asarray(func(x), dtype=float).reshape(-1, 3) @ mesh.face_normal[f]
        out[f] = np.dot(w, vals) / mesh.face_area[f]
    return out


def interp_node(func, mesh: PolyMesh) -> np.ndarray:
    """Vertex values ``u(V)``."""
    return np.asarray(func(mesh.vertices), dtype=float).reshape(mesh.n_vertices)


def discrete_grad(u: np.ndarray, mesh: PolyMesh) -> np.ndarray:
    """``(u(V2) - u(V1)) / |e|`` for every edge."""
    u = np.asarray(u, dtype=float)
    return (u[mesh.edges[:, 1]] - u[mesh.edges[:, 0]]) / mesh.edge_length


def discrete_div(F: np.ndarray, mesh: PolyMesh) -> np.ndarray:
    """``(1/|P|) sum_f |f| F_f^P`` for every cell."""
    F = np.asarray(F, dtype=float)
    out = np.empty(mesh.n_cells)
    for c, (fc, sg) in enumerate(zip(mesh.cell_faces, mesh.cell_signs)):
        out[c] = np.dot(sg * mesh.face_area[fc], F[fc])
    return out / mesh.cell_volume


@dataclass(frozen=True)
class QuadratureWeights:
    """Vertex-based quadrature weights.

    ``cell[c][i]`` pairs with ``mesh.cell_vertices[c][i]``; ``face[f][l]`` with
    ``mesh.faces[f][l]``.
    """

    cell: tuple[np.ndarray, ...]
    face: tuple[np.ndarray, ...]
    cell_mode: str = "uniform"


def moment_weights(points: np.ndarray, center: np.ndarray, measure: float) -> np.ndarray:
    """Non-negative weights with ``sum w = measure`` and ``sum w (V - center) = 0``.

    The minimum-norm solution is used when it is non-negative; otherwise a
    non-negative least-squares solve of the same moment system.

    Raises
    ------
    WeightSolveFailure
        If no non-negative linearly exact weights exist.
    """
    d = np.asarray(points, dtype=float) - center
    scale = np.abs(d).max() or 1.0
    mat = np.vstack([np.ones(len(d)), (d / scale).T])
    rhs = np.zeros(4)
    rhs[0] = measure
    w = np.linalg.pinv(mat) @ rhs
    if w.min() >= -1e-14 * measure:
        w = np.maximum(w, 0.0)
    else:
        w, _ = nnls(mat, rhs)
    resid = np.abs(mat @ w - rhs).max()
    if resid > 1e-12 * measure:
        raise WeightSolveFailure(f"no non-negative linear-exact weights (residual {resid:.3e})")
    return w


def build_quadrature(mesh: PolyMesh, cell_weights: str = "uniform") -> QuadratureWeights:
    """Cell and face vertex weights.

    Parameters
    ----------
    cell_weights : {"uniform", "moment"}
        ``uniform`` gives ``|P| / V_P`` per vertex (exact on constants);
        ``moment`` also makes the cell rule exact on linear functions.
    """
    if cell_weights not in ("uniform", "moment"):
        raise ValueError(f"unknown cell weight mode {cell_weights!r}")
    face = tuple(
        moment_weights(mesh.vertices[loop], mesh.face_centroid[f], mesh.face_area[f])
        for f, loop in enumerate(mesh.faces)
    )
    if cell_weights == "uniform":
        cell = tuple(
            np.full(len(cv), mesh.cell_volume[c] / len(cv))
            for c, cv in enumerate(mesh.cell_vertices)
        )
    else:
        cell = tuple(
            moment_weights(mesh.vertices[cv], mesh.cell_centroid[c], mesh.cell_volume[c])
            for c, cv in enumerate(mesh.cell_vertices)
        )
    return QuadratureWeights(cell, face, cell_weights)
