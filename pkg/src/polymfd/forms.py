"""Per-cell matrices of the face and nodal scalar products.

For a cell P with ``f_P`` faces and ``V_P`` vertices:

    N  (f_P x 3)    rows n_f^P^T K
    R  (f_P x 3)    rows |f| (x_f - x_P)^T
    W  (f_P x V_P)  face quadrature weights
    A = W^T N,  B = [V_i - x_P]  (V_P x 3)
    C, D            orthonormal complements of span(N) and span([1 | B])

    M_F = R K^-1 R^T / |P| + C U_F C^T     satisfies  M_F N = R
    M_N = A K^-1 A^T / |P| + D U_N D^T     satisfies  M_N B = A
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .dof import QuadratureWeights, build_quadrature, cell_quadrature
from .errors import NonPositive, RankDeficiency, RankDeficientN, SingularKTilde
from .mesh import PolyMesh

NULL_RTOL = 1e-10


@dataclass(frozen=True)
class StabilizationConfig:
    """Multipliers of the default stabilization ``U = scale * gamma * I``."""

    u_scale_F: float = 1.0
    u_scale_N: float = 1.0

    def __post_init__(self):
        if not (self.u_scale_F > 0 and self.u_scale_N > 0):
            raise ValueError("stabilization scales must be strictly positive")


@dataclass(frozen=True)
class MaterialSample:
    """Cellwise constant data: diffusion tensor, advection field and source."""

    K_tilde: np.ndarray
    beta_tilde: np.ndarray
    g_tilde: np.ndarray

    def __post_init__(self):
        K = self.K_tilde
        asym = np.abs(K - np.swapaxes(K, 1, 2)).max(initial=0.0)
        if asym > 1e-14 * max(np.abs(K).max(initial=0.0), 1.0):
            raise SingularKTilde(f"diffusion tensor is not symmetric (asymmetry {asym:.2e})")
        if len(K) and np.linalg.eigvalsh(K).min() <= 0.0:
            raise SingularKTilde("diffusion tensor is not positive definite")

    @property
    def kappa_bounds(self) -> tuple[float, float]:
        ev = np.linalg.eigvalsh(self.K_tilde)
        return float(ev.min()), float(ev.max())


def _as_tensor(K, x) -> np.ndarray:
    val = K(x) if callable(K) else K
    return np.asarray(val, dtype=float).reshape(3, 3)


def sample_material(mesh: PolyMesh, K=None, beta=None, g=None,
                    k_average: str = "centroid") -> MaterialSample:
    """Cellwise data sampled at centroids.

    ``K`` is a constant 3x3 array or a callable of one point.  ``beta`` is a
    constant 3-vector or a callable on (m, 3) points; ``g`` a scalar or a
    callable on (m, 3) points.  With ``k_average="subtet"`` the tensor is
    averaged with the cell quadrature instead.
    """
    nc = mesh.n_cells
    xc = mesh.cell_centroid
    if K is None:
        K = np.eye(3)
    if k_average == "centroid":
        Kt = np.array([_as_tensor(K, x) for x in xc])
    elif k_average == "subtet":
        Kt = np.empty((nc, 3, 3))
        for c in range(nc):
            pts, wts = cell_quadrature(mesh, c)
            Kt[c] = sum(w * _as_tensor(K, p) for p, w in zip(pts, wts)) / wts.sum()
        Kt = 0.5 * (Kt + np.swapaxes(Kt, 1, 2))
    else:
        raise ValueError(f"unknown averaging mode {k_average!r}")

    if beta is None:
        bt = np.zeros((nc, 3))
    elif callable(beta):
        bt = np.asarray(beta(xc), dtype=float).reshape(nc, 3)
    else:
        bt = np.tile(np.asarray(beta, dtype=float).reshape(1, 3), (nc, 1))

    if g is None:
        gt = np.zeros(nc)
    elif callable(g):
        gt = np.asarray(g(xc), dtype=float).reshape(nc)
    else:
        gt = np.full(nc, float(g))
    return MaterialSample(Kt, bt, gt)


@dataclass(frozen=True)
class LocalElementMatrices:
    """Local MFD matrices of one cell; rows follow the cell's face order and
    columns its sorted vertex list."""

    N: np.ndarray
    R: np.ndarray
    W: np.ndarray
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    M_F: np.ndarray
    M_N: np.ndarray
    K: np.ndarray
    volume: float


def build_NR(mesh: PolyMesh, c: int, K: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    nP = mesh.outward_normals(c)
    fc = mesh.cell_faces[c]
    N = nP @ K
    R = mesh.face_area[fc][:, None] * (mesh.face_centroid[fc] - mesh.cell_centroid[c])
    if np.linalg.matrix_rank(N) < 3:
        raise RankDeficientN(f"cell {c}: N has rank below 3")
    return N, R


def build_W(mesh: PolyMesh, c: int, quad: QuadratureWeights) -> np.ndarray:
    cv = mesh.cell_vertices[c]
    fc = mesh.cell_faces[c]
    W = np.zeros((len(fc), len(cv)))
    for row, f in enumerate(fc):
        cols = np.searchsorted(cv, mesh.faces[f])
        W[row, cols] = quad.face[f]
    return W


def build_AB(mesh: PolyMesh, c: int, N: np.ndarray, W: np.ndarray):
    A = W.T @ N
    B = mesh.vertices[mesh.cell_vertices[c]] - mesh.cell_centroid[c]
    return A, B


def null_basis(M: np.ndarray, kind: str) -> np.ndarray:
    """Orthonormal basis of the complement of the column span.

    ``kind="C"`` expects ``M = N`` (rank 3); ``kind="D"`` expects ``M = B``
    and complements ``[1 | B]`` (rank 4).

    Raises
    ------
    RankDeficiency
        If the input does not have the expected rank.
    """
    M = np.asarray(M, dtype=float)
    if kind == "D":
        M = np.column_stack([np.ones(len(M)), M])
        rank = 4
    elif kind == "C":
        rank = 3
    else:
        raise ValueError(f"unknown basis kind {kind!r}")
    if len(M) < rank:
        raise RankDeficiency(f"need at least {rank} rows, got {len(M)}")
    U, s, _ = np.linalg.svd(M, full_matrices=True)
    if s[rank - 1] <= NULL_RTOL * s[0]:
        raise RankDeficiency(f"matrix is rank deficient (expected rank {rank})")
    return U[:, rank:]


def _stabilized(Z: np.ndarray, K: np.ndarray, vol: float, Q: np.ndarray, scale: float):
    try:
        cho = sla.cho_factor(K)
    except np.linalg.LinAlgError as exc:
        raise SingularKTilde("cell diffusion tensor is singular or indefinite") from exc
    cons = Z @ sla.cho_solve(cho, Z.T) / vol
    gamma = np.trace(cons) / len(Z)
    M = cons + scale * gamma * (Q @ Q.T)
    return 0.5 * (M + M.T)


def build_MF(N, R, C, K, volume: float, u_scale: float = 1.0) -> np.ndarray:
    """Face mass matrix ``R K^-1 R^T / |P| + u_scale * gamma * C C^T`` with
    ``gamma = trace(R K^-1 R^T / |P|) / f_P``."""
    return _stabilized(R, K, volume, C, u_scale)


def build_MN(A, B, D, K, volume: float, u_scale: float = 1.0) -> np.ndarray:
    """Nodal stiffness ``A K^-1 A^T / |P| + u_scale * gamma * D D^T``."""
    return _stabilized(A, K, volume, D, u_scale)


def local_matrices(mesh: PolyMesh, c: int, K: np.ndarray, quad: QuadratureWeights,
                   cfg: StabilizationConfig | None = None) -> LocalElementMatrices:
    cfg = cfg or StabilizationConfig()
    vol = float(mesh.cell_volume[c])
    N, R = build_NR(mesh, c, K)
    W = build_W(mesh, c, quad)
    A, B = build_AB(mesh, c, N, W)
    C = null_basis(N, "C")
    D = null_basis(B, "D")
    M_F = build_MF(N, R, C, K, vol, cfg.u_scale_F)
    M_N = build_MN(A, B, D, K, vol, cfg.u_scale_N)
    return LocalElementMatrices(N, R, W, A, B, C, D, M_F, M_N, K, vol)


class Forms:
    """Local matrices for every cell together with the data used to build them."""

    def __init__(self, mesh: PolyMesh, material: MaterialSample | None = None,
                 quad: QuadratureWeights | None = None,
                 cfg: StabilizationConfig | None = None):
        self.mesh = mesh
        self.material = material if material is not None else sample_material(mesh)
        self.quad = quad if quad is not None else build_quadrature(mesh)
        self.cfg = cfg or StabilizationConfig()
        self.cells = [
            local_matrices(mesh, c, self.material.K_tilde[c], self.quad, self.cfg)
            for c in range(mesh.n_cells)
        ]

    def __getitem__(self, c: int) -> LocalElementMatrices:
        return self.cells[c]

    def __len__(self) -> int:
        return len(self.cells)


def build_forms(mesh: PolyMesh, K=None, cfg: StabilizationConfig | None = None,
                quad: QuadratureWeights | None = None, **material_kw) -> Forms:
    return Forms(mesh, sample_material(mesh, K, **material_kw), quad, cfg)


def cell_grad_matrix(mesh: PolyMesh, c: int) -> np.ndarray:
    """Local discrete gradient: cell edges x cell vertices."""
    cv = mesh.cell_vertices[c]
    ce = mesh.cell_edges[c]
    G = np.zeros((len(ce), len(cv)))
    rows = np.arange(len(ce))
    ends = np.searchsorted(cv, mesh.edges[ce])
    inv = 1.0 / mesh.edge_length[ce]
    G[rows, ends[:, 0]] = -inv
    G[rows, ends[:, 1]] = inv
    return G


def spectral_check(M: np.ndarray, mesh: PolyMesh, c: int, kind: str) -> tuple[float, float]:
    """Bounds ``(c_low, c_high)`` of the scaling equivalence of a local product.

    ``kind="F"``: extreme values of ``G^T M G / (|P| sum G_f^2)``.
    ``kind="N"``: extreme values of ``v^T M v / (|P| sum_e (grad v)_e^2)`` over
    ``v`` orthogonal to constants, from the generalized eigenproblem.

    Raises
    ------
    NonPositive
        If the lower bound is not strictly positive.
    """
    vol = mesh.cell_volume[c]
    if kind == "F":
        ev = np.linalg.eigvalsh(M) / vol
    elif kind == "N":
        G = cell_grad_matrix(mesh, c)
        Q = sla.null_space(np.ones((1, M.shape[0])))
        ev = sla.eigh(Q.T @ M @ Q, vol * (Q.T @ G.T @ G @ Q), eigvals_only=True)
    else:
        raise ValueError(f"unknown kind {kind!r}")
    lo, hi = float(ev.min()), float(ev.max())
    if not lo > 1e-12 * abs(hi):
        raise NonPositive(f"cell {c}: scalar product not positive (c_low = {lo:.3e})")
    return lo, hi
