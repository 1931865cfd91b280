"""Polyhedral meshes: topology, geometry, generators and validation.

A mesh is stored as a vertex array, a list of planar faces (vertex loops),
and a list of cells given by face indices plus orientation signs.  Each face
carries one fixed unit normal defined by the right-hand rule on its stored
loop; a cell sees the face through ``sign = n_f . n_f^P`` (+1 when the stored
normal already points out of the cell).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from itertools import permutations
from typing import Sequence

import numpy as np

from .errors import (
    DegenerateFace,
    InvalidParam,
    NegativeVolume,
    NonPlanarFace,
    OpenSurface,
)

PLANARITY_TOL = 1e-9
DEGENERACY_TOL = 1e-14
CLOSEDNESS_TOL = 1e-12
MOMENT_TOL = 1e-10


def _diameter(points: np.ndarray) -> float:
    diff = points[:, None, :] - points[None, :, :]
    return float(np.sqrt((diff**2).sum(-1)).max())


def _loop_area_vector(points: np.ndarray) -> np.ndarray:
    """Twice the vector area of a closed loop, summed about its vertex mean."""
    c = points.mean(axis=0)
    a = points - c
    return np.cross(a, np.roll(a, -1, axis=0)).sum(axis=0)


def _plane_deviation(points: np.ndarray) -> tuple[float, float]:
    """(max out-of-plane distance, diameter) of a vertex loop."""
    hf = _diameter(points)
    s = _loop_area_vector(points)
    norm = np.linalg.norm(s)
    if norm == 0.0:
        return 0.0, hf
    c = points.mean(axis=0)
    return float(np.abs((points - c) @ (s / norm)).max()), hf


def face_geometry(points) -> tuple[float, np.ndarray, np.ndarray]:
    """Area, centroid and unit normal of a planar polygon.

    The polygon is fanned into triangles about the mean of its vertices.
    The normal follows the right-hand rule of the vertex order.

    Raises
    ------
    DegenerateFace
        If the area is below ``1e-14 * h_f**2``.
    NonPlanarFace
        If a vertex is more than ``1e-9 * h_f`` away from the face plane.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) < 3:
        raise DegenerateFace("a face needs at least three 3D vertices")
    if len({tuple(p) for p in pts}) < 3:
        raise DegenerateFace("a face needs at least three distinct vertices")
    hf = _diameter(pts)
    c0 = pts.mean(axis=0)
    a = pts - c0
    b = np.roll(a, -1, axis=0)
    tri = 0.5 * np.cross(a, b)
    svec = tri.sum(axis=0)
    area = float(np.linalg.norm(svec))
    if area <= DEGENERACY_TOL * hf**2:
        raise DegenerateFace(f"face area {area:.3e} is degenerate")
    normal = svec / area
    dev = float(np.abs(a @ normal).max())
    if dev > PLANARITY_TOL * hf:
        raise NonPlanarFace(f"out-of-plane deviation {dev:.3e} exceeds tolerance")
    # signed triangle areas keep the centroid right for non-convex loops
    w = tri @ normal
    centroid = c0 + (w[:, None] * (a + b)).sum(axis=0) / (3.0 * w.sum())
    return area, centroid, normal


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


@dataclass
class MeshQualityReport:
    """Diagnostic shape ratios; never used as a hard gate."""

    subtet_count: np.ndarray
    min_shape_ratio: np.ndarray
    min_face_ratio: np.ndarray
    min_edge_ratio: np.ndarray

    @property
    def max_subtets(self) -> int:
        return int(self.subtet_count.max())

    @property
    def rho(self) -> float:
        return float(self.min_shape_ratio.min())


class PolyMesh:
    """Conforming polyhedral mesh with fixed face and edge orientations.

    Parameters
    ----------
    vertices : (nv, 3) array
    faces : sequence of vertex loops
    cells : sequence of (face indices, signs) pairs
    boundary_faces : optional explicit boundary flags; when omitted they are
        inferred from incidence counts.
    """

    def __init__(
        self,
        vertices,
        faces: Sequence[Sequence[int]],
        cells: Sequence[tuple[Sequence[int], Sequence[int]]],
        boundary_faces=None,
    ):
        self.vertices = np.array(vertices, dtype=float).reshape(-1, 3)
        self.vertices.flags.writeable = False
        self.faces = tuple(np.asarray(f, dtype=np.int64) for f in faces)
        self.cell_faces = tuple(np.asarray(c[0], dtype=np.int64) for c in cells)
        self.cell_signs = tuple(np.asarray(c[1], dtype=np.int64) for c in cells)

        nf = len(self.faces)
        self.face_area = np.empty(nf)
        self.face_centroid = np.empty((nf, 3))
        self.face_normal = np.empty((nf, 3))
        self.face_diameter = np.empty(nf)
        for i, loop in enumerate(self.faces):
            pts = self.vertices[loop]
            self.face_area[i], self.face_centroid[i], self.face_normal[i] = face_geometry(pts)
            self.face_diameter[i] = _diameter(pts)

        # edges, oriented from the lower to the higher vertex index
        edge_index: dict[tuple[int, int], int] = {}
        face_edges = []
        for loop in self.faces:
            ids = []
            for a, b in zip(loop, np.roll(loop, -1)):
                key = (int(min(a, b)), int(max(a, b)))
                if key not in edge_index:
                    edge_index[key] = len(edge_index)
                ids.append(edge_index[key])
            face_edges.append(np.array(ids, dtype=np.int64))
        self.edges = np.array(list(edge_index), dtype=np.int64).reshape(-1, 2)
        self.face_edges = tuple(face_edges)
        self.edge_length = np.linalg.norm(
            self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]], axis=1
        )

        nc = len(self.cell_faces)
        self.cell_vertices = tuple(
            np.unique(np.concatenate([self.faces[f] for f in cf])) for cf in self.cell_faces
        )
        self.cell_edges = tuple(
            np.unique(np.concatenate([self.face_edges[f] for f in cf])) for cf in self.cell_faces
        )
        self.cell_volume = np.empty(nc)
        self.cell_centroid = np.empty((nc, 3))
        self.cell_diameter = np.empty(nc)
        for c in range(nc):
            self.cell_volume[c], self.cell_centroid[c] = _volume_centroid(self, c)
            self.cell_diameter[c] = _diameter(self.vertices[self.cell_vertices[c]])

        self.face_incidence = np.zeros(nf, dtype=np.int64)
        for cf in self.cell_faces:
            np.add.at(self.face_incidence, cf, 1)
        if boundary_faces is None:
            self.boundary_face = self.face_incidence == 1
        else:
            self.boundary_face = np.asarray(boundary_faces, dtype=bool).copy()
        self.boundary_vertex = np.zeros(len(self.vertices), dtype=bool)
        self.boundary_edge = np.zeros(len(self.edges), dtype=bool)
        for f in np.flatnonzero(self.boundary_face):
            self.boundary_vertex[self.faces[f]] = True
            self.boundary_edge[self.face_edges[f]] = True

        for arr in (self.face_area, self.face_centroid, self.face_normal, self.cell_volume,
                    self.cell_centroid, self.boundary_face, self.boundary_vertex):
            arr.flags.writeable = False

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def n_cells(self) -> int:
        return len(self.cell_faces)

    @property
    def h(self) -> float:
        return float(self.cell_diameter.max())

    def outward_normals(self, c: int) -> np.ndarray:
        """Rows ``n_f^P`` for the faces of cell ``c`` in face_refs order."""
        return self.cell_signs[c][:, None] * self.face_normal[self.cell_faces[c]]

    def oriented_loops(self, c: int):
        """Vertex loops of cell ``c`` reordered so their normals point outward."""
        for f, s in zip(self.cell_faces[c], self.cell_signs[c]):
            loop = self.faces[f]
            yield loop if s > 0 else loop[::-1]

    @cached_property
    def subtets(self) -> tuple[np.ndarray, ...]:
        """Per cell, an array (k, 4, 3) of positively oriented sub-tetrahedra.

        Faces are fanned about their centroid (triangles are kept whole) and
        every triangle is joined to the cell centroid.
        """
        out = []
        for c in range(self.n_cells):
            xp = self.cell_centroid[c]
            tets = []
            for f, s in zip(self.cell_faces[c], self.cell_signs[c]):
                loop = self.faces[f] if s > 0 else self.faces[f][::-1]
                pts = self.vertices[loop]
                if len(pts) == 3:
                    tets.append([xp, pts[0], pts[1], pts[2]])
                else:
                    xf = self.face_centroid[f]
                    for a, b in zip(pts, np.roll(pts, -1, axis=0)):
                        tets.append([xp, xf, a, b])
            out.append(np.array(tets))
        return tuple(out)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PolyMesh):
            return NotImplemented
        return (
            np.array_equal(self.vertices, other.vertices)
            and len(self.faces) == len(other.faces)
            and all(np.array_equal(a, b) for a, b in zip(self.faces, other.faces))
            and len(self.cell_faces) == len(other.cell_faces)
            and all(np.array_equal(a, b) for a, b in zip(self.cell_faces, other.cell_faces))
            and all(np.array_equal(a, b) for a, b in zip(self.cell_signs, other.cell_signs))
            and np.array_equal(self.boundary_face, other.boundary_face)
        )

    __hash__ = None

    def __repr__(self) -> str:
        return (f"PolyMesh(vertices={self.n_vertices}, edges={self.n_edges}, "
                f"faces={self.n_faces}, cells={self.n_cells}, h={self.h:.4g})")


def _volume_centroid(mesh: PolyMesh, c: int) -> tuple[float, np.ndarray]:
    # signed fan tetrahedra about the vertex mean; no orientation checks here
    ref = mesh.vertices[mesh.cell_vertices[c]].mean(axis=0)
    vol = 0.0
    mom = np.zeros(3)
    for loop in mesh.oriented_loops(c):
        pts = mesh.vertices[loop] - ref
        for a, b in zip(pts[1:-1], pts[2:]):
            v = np.dot(pts[0], np.cross(a, b)) / 6.0
            vol += v
            mom += v * (pts[0] + a + b) / 4.0
    if vol == 0.0:
        return 0.0, ref
    return vol, ref + mom / vol


def cell_geometry(mesh: PolyMesh, c: int) -> tuple[float, np.ndarray]:
    """Volume and centroid of cell ``c`` with orientation checks.

    The volume equals ``(1/3) sum_f sign |f| x_f . n_f``.

    Raises
    ------
    OpenSurface
        If the signed face vector areas do not sum to zero.
    NegativeVolume
        If the cell is inside out.
    """
    fc = mesh.cell_faces[c]
    area = mesh.face_area[fc]
    nP = mesh.outward_normals(c)
    closure = np.linalg.norm((area[:, None] * nP).sum(axis=0))
    if closure > CLOSEDNESS_TOL * area.sum():
        raise OpenSurface(f"cell {c}: surface does not close (|sum|f|n_f| = {closure:.3e})")
    vol = float(np.sum(area * np.einsum("ij,ij->i", mesh.face_centroid[fc], nP)) / 3.0)
    if vol <= 0.0:
        raise NegativeVolume(f"cell {c}: volume {vol:.3e} is not positive")
    return vol, mesh.cell_centroid[c].copy()


def second_moment(mesh: PolyMesh, c: int) -> np.ndarray:
    """``sum_f sign |f| (x_f - x_P) n_f^T``; equals ``|P| I`` for a closed cell."""
    fc = mesh.cell_faces[c]
    d = mesh.face_centroid[fc] - mesh.cell_centroid[c]
    return (mesh.face_area[fc][:, None] * d).T @ mesh.outward_normals(c)


# ----------------------------------------------------------------------------
# construction from per-cell outward loops
# ----------------------------------------------------------------------------


def _canonical(loop: Sequence[int]) -> tuple[int, ...]:
    """Rotate to start at the smallest index and pick the direction with the
    smaller second entry, so both neighbours of a face agree on it."""
    loop = list(loop)
    k = loop.index(min(loop))
    fwd = loop[k:] + loop[:k]
    bwd = [fwd[0]] + fwd[1:][::-1]
    return tuple(fwd) if fwd[1] < bwd[1] else tuple(bwd)


def _split_if_nonplanar(vertices: np.ndarray, loop: list[int]) -> list[list[int]]:
    if len(loop) != 4:
        return [loop]
    canon = _canonical(loop)
    dev, hf = _plane_deviation(vertices[list(canon)])
    if dev <= PLANARITY_TOL * hf:
        return [loop]
    # diagonal through the smallest vertex index; same choice on both sides
    k = loop.index(min(loop))
    m, a, b, d = loop[k:] + loop[:k]
    return [[m, a, b], [m, b, d]]


def mesh_from_polyhedra(vertices, cell_loops, boundary_faces=None,
                        split_nonplanar: bool = True) -> PolyMesh:
    """Build a mesh from per-cell lists of outward vertex loops.

    Shared faces are detected by vertex set; the first occurrence fixes the
    global orientation and later ones receive sign -1 when reversed.
    Non-planar quadrilaterals are cut into two triangles.
    """
    vertices = np.asarray(vertices, dtype=float)
    face_ids: dict[tuple[int, ...], int] = {}
    faces: list[tuple[int, ...]] = []
    cells = []
    for loops in cell_loops:
        fids, signs = [], []
        for loop in loops:
            pieces = _split_if_nonplanar(vertices, list(loop)) if split_nonplanar else [list(loop)]
            for piece in pieces:
                key = tuple(sorted(piece))
                if key not in face_ids:
                    face_ids[key] = len(faces)
                    faces.append(tuple(piece))
                    fids.append(face_ids[key])
                    signs.append(1)
                else:
                    fid = face_ids[key]
                    fids.append(fid)
                    signs.append(1 if _same_direction(faces[fid], piece) else -1)
        cells.append((fids, signs))
    return PolyMesh(vertices, faces, cells, boundary_faces=boundary_faces)


def _same_direction(a: Sequence[int], b: Sequence[int]) -> bool:
    a = list(a)
    k = list(b).index(a[0])
    rb = list(b)[k:] + list(b)[:k]
    return rb == a


# ----------------------------------------------------------------------------
# generators on the unit cube
# ----------------------------------------------------------------------------

_HEX_FACES = (
    ((0, 0, 0), (0, 0, 1), (0, 1, 1), (0, 1, 0)),  # x = 0
    ((1, 0, 0), (1, 1, 0), (1, 1, 1), (1, 0, 1)),  # x = 1
    ((0, 0, 0), (1, 0, 0), (1, 0, 1), (0, 0, 1)),  # y = 0
    ((0, 1, 0), (0, 1, 1), (1, 1, 1), (1, 1, 0)),  # y = 1
    ((0, 0, 0), (0, 1, 0), (1, 1, 0), (1, 0, 0)),  # z = 0
    ((0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1)),  # z = 1
)

MESH_KINDS = ("tet", "hex", "perturbed-hex")


def _grid_vertices(n: int) -> np.ndarray:
    t = np.linspace(0.0, 1.0, n + 1)
    z, y, x = np.meshgrid(t, t, t, indexing="ij")
    return np.column_stack([x.ravel(), y.ravel(), z.ravel()])


def _jitter(vertices: np.ndarray, n: int, delta: float, seed) -> np.ndarray:
    rng = np.random.default_rng(seed)
    disp = rng.uniform(-1.0, 1.0, size=vertices.shape) * (delta / n)
    on_bnd = (vertices == 0.0) | (vertices == 1.0)
    disp[on_bnd] = 0.0
    return vertices + disp


def generate_mesh(kind: str, n: int, delta: float = 0.0, seed=0) -> PolyMesh:
    """Structured mesh of the unit cube.

    Parameters
    ----------
    kind : {"tet", "hex", "perturbed-hex"}
        ``tet`` splits each voxel into the six Kuhn tetrahedra.
    n : int
        Subdivisions per axis.
    delta : float
        Vertex jitter as a fraction of ``1/n``.  Boundary vertices only move
        inside their boundary facet.  ``hex`` requires ``delta == 0``.
    seed : int
        Seed of the jitter; equal seeds give bit-identical meshes.
    """
    if kind not in MESH_KINDS:
        raise InvalidParam(f"unknown mesh kind {kind!r}")
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise InvalidParam("n must be a positive integer")
    if not 0.0 <= delta < 0.5:
        raise InvalidParam("delta must lie in [0, 0.5)")
    if kind == "hex" and delta != 0.0:
        raise InvalidParam("use kind='perturbed-hex' for a jittered hexahedral mesh")

    verts = _grid_vertices(n)
    if delta > 0.0:
        verts = _jitter(verts, n, delta, seed)

    def vid(i, j, k):
        return i + (n + 1) * (j + (n + 1) * k)

    cell_loops = []
    for k in range(n):
        for j in range(n):
            for i in range(n):
                if kind == "tet":
                    cell_loops.extend(_kuhn_tets(verts, vid, i, j, k))
                else:
                    cell_loops.append([
                        [vid(i + a, j + b, k + c) for a, b, c in face] for face in _HEX_FACES
                    ])
    return mesh_from_polyhedra(verts, cell_loops)


def _kuhn_tets(verts, vid, i, j, k):
    out = []
    for perm in permutations(range(3)):
        corner = [0, 0, 0]
        path = [vid(i, j, k)]
        for ax in perm:
            corner[ax] += 1
            path.append(vid(i + corner[0], j + corner[1], k + corner[2]))
        out.append(_tet_loops(verts, path))
    return out


def _tet_loops(verts: np.ndarray, tet: Sequence[int]) -> list[list[int]]:
    loops = []
    for omit in range(4):
        tri = [tet[m] for m in range(4) if m != omit]
        p = verts[tri]
        nrm = np.cross(p[1] - p[0], p[2] - p[0])
        if np.dot(nrm, verts[tet[omit]] - p[0]) > 0.0:
            tri = [tri[0], tri[2], tri[1]]
        loops.append(tri)
    return loops


def tetra_mesh(vertices, tets) -> PolyMesh:
    """Mesh from a tetrahedral connectivity array."""
    vertices = np.asarray(vertices, dtype=float)
    return mesh_from_polyhedra(vertices, [_tet_loops(vertices, t) for t in tets],
                               split_nonplanar=False)


def unit_cube_mesh() -> PolyMesh:
    return generate_mesh("hex", 1)


def reference_tet_mesh() -> PolyMesh:
    v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=float)
    return tetra_mesh(v, [[0, 1, 2, 3]])


# ----------------------------------------------------------------------------
# validation and quality
# ----------------------------------------------------------------------------


def validate_mesh(mesh: PolyMesh) -> ValidationReport:
    """Check closedness, the second-moment identity, conformity and measures.

    All violations are collected; nothing is raised.
    """
    report = ValidationReport()
    bad = report.violations

    for f, loop in enumerate(mesh.faces):
        if len(set(loop.tolist())) < 3:
            bad.append(f"face {f}: fewer than 3 distinct vertices")
        if not mesh.face_area[f] > 0.0:
            bad.append(f"face {f}: non-positive area")

    seen: dict[tuple[int, ...], int] = {}
    for f, loop in enumerate(mesh.faces):
        key = tuple(sorted(loop.tolist()))
        if key in seen:
            bad.append(f"face {f}: duplicates face {seen[key]}")
        else:
            seen[key] = f

    for c in range(mesh.n_cells):
        fc = mesh.cell_faces[c]
        area = mesh.face_area[fc]
        nP = mesh.outward_normals(c)
        closure = np.linalg.norm((area[:, None] * nP).sum(axis=0))
        if closure > CLOSEDNESS_TOL * area.sum():
            bad.append(f"cell {c}: open surface, |sum sign|f|n_f| = {closure:.3e}")
        vol = mesh.cell_volume[c]
        if not vol > 0.0:
            bad.append(f"cell {c}: non-positive volume {vol:.3e}")
        else:
            resid = np.abs(second_moment(mesh, c) - vol * np.eye(3)).max()
            if resid > MOMENT_TOL * vol:
                bad.append(f"cell {c}: second-moment identity off by {resid / vol:.3e} (relative)")
        counts: dict[int, int] = {}
        for f in fc:
            for e in mesh.face_edges[f]:
                counts[int(e)] = counts.get(int(e), 0) + 1
        odd = [e for e, m in counts.items() if m != 2]
        if odd:
            bad.append(f"cell {c}: edges {odd[:5]} not shared by exactly two faces")
        if len(set(fc.tolist())) != len(fc):
            bad.append(f"cell {c}: repeated face")

    side: dict[int, list[int]] = {}
    for cf, cs in zip(mesh.cell_faces, mesh.cell_signs):
        for f, s in zip(cf, cs):
            side.setdefault(int(f), []).append(int(s))
    for f in range(mesh.n_faces):
        signs = side.get(f, [])
        if len(signs) == 0:
            bad.append(f"face {f}: not used by any cell")
        elif len(signs) == 1:
            if not mesh.boundary_face[f]:
                bad.append(f"face {f}: one incident cell but not flagged as boundary")
        elif len(signs) == 2:
            if mesh.boundary_face[f]:
                bad.append(f"face {f}: two incident cells but flagged as boundary")
            if signs[0] != -signs[1]:
                bad.append(f"face {f}: incident cells do not have opposite signs")
        else:
            bad.append(f"face {f}: {len(signs)} incident cells")

    # the boundary itself must be a closed manifold surface
    ecount = np.zeros(mesh.n_edges, dtype=np.int64)
    for f in np.flatnonzero(mesh.face_incidence == 1):
        np.add.at(ecount, mesh.face_edges[f], 1)
    odd = np.flatnonzero((ecount != 0) & (ecount != 2))
    if len(odd):
        bad.append(f"boundary surface not closed at edges {odd[:5].tolist()}")
    return report


def _tet_inradius_ratio(t: np.ndarray) -> float:
    vol = abs(np.dot(t[1] - t[0], np.cross(t[2] - t[0], t[3] - t[0]))) / 6.0
    area = 0.0
    for omit in range(4):
        p = np.delete(t, omit, axis=0)
        area += 0.5 * np.linalg.norm(np.cross(p[1] - p[0], p[2] - p[0]))
    return (3.0 * vol / area) / _diameter(t)


def quality_report(mesh: PolyMesh) -> MeshQualityReport:
    """Shape-regularity style ratios from the fan sub-tetrahedralization."""
    nc = mesh.n_cells
    count = np.empty(nc, dtype=np.int64)
    shape = np.empty(nc)
    fratio = np.empty(nc)
    eratio = np.empty(nc)
    for c, tets in enumerate(mesh.subtets):
        count[c] = len(tets)
        shape[c] = min(_tet_inradius_ratio(t) for t in tets)
        hp = mesh.cell_diameter[c]
        fratio[c] = mesh.face_diameter[mesh.cell_faces[c]].min() / hp
        eratio[c] = mesh.edge_length[mesh.cell_edges[c]].min() / hp
    return MeshQualityReport(count, shape, fratio, eratio)
