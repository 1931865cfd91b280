"""Global assembly and linear solves for the nodal, mixed and
advection-diffusion methods."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .dof import build_quadrature, interp_cell, interp_node
from .errors import EmptyInterior, NoConvergence, SingularFactorization, SingularSystem
from .forms import Forms, StabilizationConfig, sample_material
from .mesh import PolyMesh

log = logging.getLogger(__name__)


@dataclass
class ManufacturedSolution:
    """Exact ``u`` with its gradient; ``u`` and ``grad`` act on (m, 3) points."""

    u: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]


@dataclass
class ProblemSpec:
    """``-div(K grad u) + beta . grad u = g`` in the unit cube, ``u = u_D`` on
    the boundary.

    ``K`` is a constant 3x3 array or a callable of one point; ``beta``, ``g``
    and ``dirichlet`` are constants or callables on (m, 3) point arrays.
    """

    K: object = field(default_factory=lambda: np.eye(3))
    beta: object = None
    g: object = 0.0
    dirichlet: object = 0.0
    exact: Optional[ManufacturedSolution] = None
    name: str = "custom"

    def diffusion(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.K(x) if callable(self.K) else self.K, dtype=float).reshape(3, 3)

    def flux(self, x: np.ndarray) -> np.ndarray:
        """``K grad u`` of the exact solution on (m, 3) points."""
        x = np.atleast_2d(x)
        grads = np.asarray(self.exact.grad(x), dtype=float).reshape(-1, 3)
        if callable(self.K):
            return np.array([self.diffusion(p) @ gr for p, gr in zip(x, grads)])
        return grads @ self.diffusion(x[0]).T

    def dirichlet_values(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        if callable(self.dirichlet):
            return np.asarray(self.dirichlet(x), dtype=float).reshape(len(x))
        return np.full(len(x), float(self.dirichlet))

    def source_values(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        if callable(self.g):
            return np.asarray(self.g(x), dtype=float).reshape(len(x))
        return np.full(len(x), float(self.g))

    def ellipticity(self, points: np.ndarray) -> tuple[float, float]:
        """Sampled ``(kappa_*, kappa^*)``; raises if K is not SPD somewhere."""
        ev = np.array([np.linalg.eigvalsh(self.diffusion(p)) for p in np.atleast_2d(points)])
        lo, hi = float(ev.min()), float(ev.max())
        if lo <= 0.0:
            raise ValueError(f"diffusion tensor is not positive definite (min eigenvalue {lo:.3e})")
        return lo, hi


def build_problem_forms(mesh: PolyMesh, spec: ProblemSpec,
                        cfg: StabilizationConfig | None = None,
                        cell_weights: str = "uniform",
                        k_average: str = "centroid") -> Forms:
    """Local matrices with the problem data sampled cellwise."""
    material = sample_material(mesh, spec.K, spec.beta, spec.source_values, k_average)
    return Forms(mesh, material, build_quadrature(mesh, cell_weights), cfg)


@dataclass
class LinearSystem:
    """Assembled system with the map from unknowns to mesh entities.

    ``blocks`` maps a name ("node", "face", "cell", "offset", "multiplier")
    to the index array of the corresponding unknowns; ``node_index`` gives,
    for nodal systems, the vertex of every unknown.
    """

    matrix: sps.csr_matrix
    rhs: np.ndarray
    blocks: dict
    kind: str
    symmetric: bool
    spd: bool
    node_index: Optional[np.ndarray] = None
    boundary_values: Optional[np.ndarray] = None

    @property
    def n_dofs(self) -> int:
        return len(self.rhs)


@dataclass
class SolveResult:
    x: np.ndarray
    residual: float
    iterations: int
    method: str


@dataclass
class MixedSolution:
    """Face fluxes, mean-zero cell pressures and the Lagrange multiplier.

    ``offset`` is the constant removed from the pressure so that
    ``sum |P| p_P = 0``; ``p_h + offset`` satisfies the boundary data.
    """

    F_h: np.ndarray
    p_h: np.ndarray
    multiplier: float
    offset: float


# ----------------------------------------------------------------------------
# nodal
# ----------------------------------------------------------------------------


def _scatter(mesh: PolyMesh, local_blocks, index_of, size: int) -> sps.csr_matrix:
    rows, cols, vals = [], [], []
    for c, blk in enumerate(local_blocks):
        idx = index_of(c)
        rows.append(np.repeat(idx, len(idx)))
        cols.append(np.tile(idx, len(idx)))
        vals.append(np.asarray(blk).ravel())
    if not rows:
        return sps.csr_matrix((size, size))
    mat = sps.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(size, size)
    )
    return mat.tocsr()


def nodal_stiffness(mesh: PolyMesh, forms: Forms) -> sps.csr_matrix:
    """``sum_P scatter(M_N^P)`` over all vertices (before boundary restriction)."""
    return _scatter(mesh, (L.M_N for L in forms), lambda c: mesh.cell_vertices[c],
                    mesh.n_vertices)


def nodal_load(mesh: PolyMesh, forms: Forms) -> np.ndarray:
    """``(g~, v)_N``: cell source times vertex quadrature weights."""
    b = np.zeros(mesh.n_vertices)
    for c, cv in enumerate(mesh.cell_vertices):
        np.add.at(b, cv, forms.material.g_tilde[c] * forms.quad.cell[c])
    return b


def _restrict(mesh: PolyMesh, full: sps.csr_matrix, load: np.ndarray, spec: ProblemSpec,
              kind: str, symmetric: bool) -> LinearSystem:
    interior = np.flatnonzero(~mesh.boundary_vertex)
    if len(interior) == 0:
        raise EmptyInterior("every vertex lies on the boundary")
    bnd = np.flatnonzero(mesh.boundary_vertex)
    ub = np.zeros(mesh.n_vertices)
    ub[bnd] = spec.dirichlet_values(mesh.vertices[bnd])
    rhs = load[interior] - full[interior][:, bnd] @ ub[bnd]
    mat = full[interior][:, interior].tocsr()
    return LinearSystem(mat, rhs, {"node": np.arange(len(interior))}, kind,
                        symmetric=symmetric, spd=symmetric, node_index=interior,
                        boundary_values=ub)


def assemble_nodal(mesh: PolyMesh, forms: Forms, spec: ProblemSpec) -> LinearSystem:
    """Nodal method on interior vertices with the Dirichlet data lifted."""
    return _restrict(mesh, nodal_stiffness(mesh, forms), nodal_load(mesh, forms), spec,
                     "nodal", symmetric=True)


# ----------------------------------------------------------------------------
# advection-diffusion
# ----------------------------------------------------------------------------


def peclet_tau(h: float, beta: np.ndarray, K: np.ndarray) -> float:
    """``h / (2|beta|) * min(1, Pe / 3)`` with ``Pe = |beta| h / (2 lambda_min(K))``."""
    bn = float(np.linalg.norm(beta))
    if bn <= 1e-14:
        return 0.0
    pe = bn * h / (2.0 * np.linalg.eigvalsh(K).min())
    return h / (2.0 * bn) * min(1.0, pe / 3.0)


def advective_row(L, beta: np.ndarray) -> np.ndarray:
    """Coefficients of ``beta . grad^R v`` in the local vertex values."""
    return np.linalg.solve(L.K, L.A.T).T @ beta / L.volume


def advection_blocks(mesh: PolyMesh, forms: Forms, sd: bool = False,
                     tau: Callable | None = None):
    """Per-cell advective (plus optional streamline-diffusion) blocks."""
    tau = tau or peclet_tau
    for c, L in enumerate(forms):
        beta = forms.material.beta_tilde[c]
        row = advective_row(L, beta)
        blk = np.outer(forms.quad.cell[c], row)
        if sd:
            t = tau(mesh.cell_diameter[c], beta, L.K)
            blk = blk + t * L.volume * np.outer(row, row)
        yield blk


def assemble_advection(mesh: PolyMesh, forms: Forms, spec: ProblemSpec, sd: bool = False,
                       tau: Callable | None = None) -> LinearSystem:
    """Nodal advection-diffusion system (non-symmetric)."""
    adv = _scatter(mesh, advection_blocks(mesh, forms, sd, tau),
                   lambda c: mesh.cell_vertices[c], mesh.n_vertices)
    full = (nodal_stiffness(mesh, forms) + adv).tocsr()
    no_beta = not np.any(forms.material.beta_tilde)
    return _restrict(mesh, full, nodal_load(mesh, forms), spec, "advect", symmetric=no_beta)


# ----------------------------------------------------------------------------
# mixed
# ----------------------------------------------------------------------------


def divergence_matrix(mesh: PolyMesh) -> sps.csr_matrix:
    """Rows ``(sign |f|)_f`` per cell: ``|P| (div^h F)_P``."""
    rows = np.concatenate([np.full(len(fc), c) for c, fc in enumerate(mesh.cell_faces)])
    cols = np.concatenate(mesh.cell_faces)
    vals = np.concatenate([s * mesh.face_area[fc]
                           for fc, s in zip(mesh.cell_faces, mesh.cell_signs)])
    return sps.csr_matrix((vals, (rows, cols)), shape=(mesh.n_cells, mesh.n_faces))


def face_mass(mesh: PolyMesh, forms: Forms) -> sps.csr_matrix:
    """``sum_P scatter(S M_F^P S)`` with ``S`` the diagonal of face signs."""
    blocks = (np.outer(s, s) * L.M_F for s, L in zip(mesh.cell_signs, forms))
    return _scatter(mesh, blocks, lambda c: mesh.cell_faces[c], mesh.n_faces)


def assemble_mixed(mesh: PolyMesh, forms: Forms, spec: ProblemSpec) -> LinearSystem:
    """Symmetric saddle-point system of the mixed method.

    Unknowns: face fluxes ``F``, mean-zero pressures ``p``, a pressure offset
    ``mu`` and the multiplier ``lam`` of the mean-zero constraint::

        [ M   D^T  b  0 ] [F  ]   [ r ]
        [ D   0    0  v ] [p  ] = [ -|P| g ]
        [ b^T 0    0  0 ] [mu ]   [ -sum |P| g ]
        [ 0   v^T  0  0 ] [lam]   [ 0 ]

    with ``D`` the weighted divergence, ``b = D^T 1`` the boundary face
    areas, ``v`` the cell volumes and ``r_f = sign |f| u_D(x_f)`` on boundary
    faces.  The physical pressure is ``p + mu``; ``lam`` vanishes at the
    solution.
    """
    nf, nc = mesh.n_faces, mesh.n_cells
    M = face_mass(mesh, forms)
    Dv = divergence_matrix(mesh)
    vol = mesh.cell_volume
    bvec = np.asarray(Dv.sum(axis=0)).ravel()

    col_b = sps.csr_matrix(bvec.reshape(-1, 1))
    col_v = sps.csr_matrix(vol.reshape(-1, 1))
    mat = sps.bmat([
        [M, Dv.T, col_b, None],
        [Dv, None, None, col_v],
        [col_b.T, None, None, None],
        [None, col_v.T, None, None],
    ], format="csr")

    rhs = np.zeros(nf + nc + 2)
    bf = np.flatnonzero(mesh.boundary_face)
    inc_sign = np.zeros(nf)
    for fc, s in zip(mesh.cell_faces, mesh.cell_signs):
        inc_sign[fc] += s
    rhs[bf] = inc_sign[bf] * mesh.face_area[bf] * spec.dirichlet_values(mesh.face_centroid[bf])
    if callable(spec.g):
        gbar = interp_cell(spec.source_values, mesh)
    else:
        gbar = np.full(nc, float(spec.g))
    rhs[nf:nf + nc] = -vol * gbar
    rhs[nf + nc] = -np.dot(vol, gbar)

    blocks = {
        "face": np.arange(nf),
        "cell": np.arange(nf, nf + nc),
        "offset": np.array([nf + nc]),
        "multiplier": np.array([nf + nc + 1]),
    }
    return LinearSystem(mat, rhs, blocks, "mixed", symmetric=True, spd=False)


# ----------------------------------------------------------------------------
# solvers
# ----------------------------------------------------------------------------


def solve_system(system: LinearSystem, method: str = "auto", rtol: float = 1e-12) -> SolveResult:
    """Solve an assembled system.

    SPD systems use Jacobi-preconditioned conjugate gradients by default
    (``method="cg"``); everything else, or ``method="direct"``, a sparse LU.

    Raises
    ------
    NoConvergence
        CG did not reach ``rtol`` within ``10 * n`` iterations.
    SingularFactorization
        The matrix is singular.
    """
    A = sps.csr_matrix(system.matrix)
    b = np.asarray(system.rhs, dtype=float)
    n = len(b)
    if method == "auto":
        method = "cg" if system.spd else "direct"
    bnorm = np.linalg.norm(b)

    if method == "cg":
        diag = A.diagonal()
        if np.any(diag <= 0.0):
            raise SingularFactorization("matrix is not positive definite (non-positive diagonal)")
        if bnorm == 0.0:
            return SolveResult(np.zeros(n), 0.0, 0, "cg")
        count = [0]

        def _count(_):
            count[0] += 1

        precond = sps.diags(1.0 / diag)
        x, info = spla.cg(A, b, rtol=rtol, atol=0.0, maxiter=10 * n, M=precond, callback=_count)
        res = float(np.linalg.norm(b - A @ x) / bnorm)
        if info != 0 or res > 10 * rtol:
            raise NoConvergence(f"CG stopped after {count[0]} iterations, residual {res:.3e}")
        return SolveResult(x, res, count[0], "cg")

    if method != "direct":
        raise ValueError(f"unknown solver {method!r}")
    try:
        lu = spla.splu(A.tocsc())
    except RuntimeError as exc:
        raise SingularFactorization(str(exc)) from exc
    x = lu.solve(b)
    if not np.all(np.isfinite(x)):
        raise SingularFactorization("factorization produced non-finite values")
    res = float(np.linalg.norm(b - A @ x) / bnorm) if bnorm else float(np.linalg.norm(A @ x))
    return SolveResult(x, res, 1, "direct")


def inertia(system: LinearSystem) -> tuple[int, int, int]:
    """(positive, negative, zero) eigenvalue counts from a dense LDL^T.

    Intended for small symmetric systems.
    """
    if not system.symmetric:
        raise ValueError("inertia needs a symmetric matrix")
    _, d, _ = sla.ldl(system.matrix.toarray())
    ev = np.linalg.eigvalsh(d)
    tol = 1e-12 * np.abs(ev).max()
    return int((ev > tol).sum()), int((ev < -tol).sum()), int((np.abs(ev) <= tol).sum())


def nodal_field(system: LinearSystem, result: SolveResult) -> np.ndarray:
    """Full vertex field: solved interior values plus boundary data."""
    u = system.boundary_values.copy()
    u[system.node_index] = result.x
    return u


def mixed_solution(system: LinearSystem, result: SolveResult) -> MixedSolution:
    x = result.x
    return MixedSolution(
        F_h=x[system.blocks["face"]],
        p_h=x[system.blocks["cell"]],
        multiplier=float(x[system.blocks["multiplier"][0]]),
        offset=float(x[system.blocks["offset"][0]]),
    )


def solve_nodal(mesh, spec, forms=None, method="auto", rtol=1e-12, **kw):
    if forms is None:
        forms = build_problem_forms(mesh, spec, **kw)
    system = assemble_nodal(mesh, forms, spec)
    result = solve_system(system, method, rtol)
    return nodal_field(system, result), result, forms


def solve_mixed(mesh, spec, forms=None, method="auto", rtol=1e-12, **kw):
    if forms is None:
        forms = build_problem_forms(mesh, spec, **kw)
    system = assemble_mixed(mesh, forms, spec)
    result = solve_system(system, method, rtol)
    return mixed_solution(system, result), result, forms


def solve_advection(mesh, spec, forms=None, sd=False, method="auto", tau=None, rtol=1e-12,
                    **kw):
    if forms is None:
        forms = build_problem_forms(mesh, spec, **kw)
    system = assemble_advection(mesh, forms, spec, sd=sd, tau=tau)
    result = solve_system(system, method, rtol)
    return nodal_field(system, result), result, forms


def exact_nodal(mesh: PolyMesh, spec: ProblemSpec) -> np.ndarray:
    return interp_node(spec.exact.u, mesh)
