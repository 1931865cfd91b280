import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polymfd.errors import DegenerateFace, InvalidParam, NegativeVolume, NonPlanarFace, OpenSurface
from polymfd.mesh import (PolyMesh, cell_geometry, face_geometry, generate_mesh,
                          mesh_from_polyhedra, quality_report, second_moment, tetra_mesh,
                          validate_mesh)


# -- face_geometry ---------------------------------------------------------------

def test_unit_square_face():
    area, xf, n = face_geometry([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]])
    assert area == pytest.approx(1.0, abs=1e-15)
    np.testing.assert_allclose(xf, [0.5, 0.5, 0.0], atol=1e-15)
    np.testing.assert_allclose(n, [0, 0, 1], atol=1e-15)


def test_reference_triangle_face():
    area, xf, n = face_geometry([[0, 0, 0], [1, 0, 0], [0, 1, 0]])
    assert area == pytest.approx(0.5)
    np.testing.assert_allclose(xf, [1 / 3, 1 / 3, 0.0], atol=1e-15)
    np.testing.assert_allclose(n, [0, 0, 1], atol=1e-15)


def test_reversed_loop_flips_normal():
    _, _, n = face_geometry([[0, 1, 0], [1, 1, 0], [1, 0, 0], [0, 0, 0]])
    np.testing.assert_allclose(n, [0, 0, -1], atol=1e-15)


def test_collinear_face_is_degenerate():
    with pytest.raises(DegenerateFace):
        face_geometry([[0, 0, 0], [1, 0, 0], [2, 0, 0]])


def test_nonplanar_face():
    with pytest.raises(NonPlanarFace):
        face_geometry([[0, 0, 0], [1, 0, 0], [1, 1, 0.1], [0, 1, 0]])


def test_l_shaped_face_centroid():
    # area-weighted centroid of a non-convex planar polygon: two unit squares
    # [0,2]x[0,1] and [0,1]x[1,2]
    pts = [[0, 0, 0], [2, 0, 0], [2, 1, 0], [1, 1, 0], [1, 2, 0], [0, 2, 0]]
    area, xf, _ = face_geometry(pts)
    assert area == pytest.approx(3.0)
    np.testing.assert_allclose(xf, [2.5 / 3, 2.5 / 3, 0.0], atol=1e-14)


# -- cell_geometry ---------------------------------------------------------------

def test_unit_cube_cell(cube):
    vol, xc = cell_geometry(cube, 0)
    assert vol == pytest.approx(1.0, abs=1e-14)
    np.testing.assert_allclose(xc, [0.5, 0.5, 0.5], atol=1e-14)


def test_reference_tet_cell(ref_tet):
    vol, xc = cell_geometry(ref_tet, 0)
    assert vol == pytest.approx(1 / 6, abs=1e-15)
    np.testing.assert_allclose(xc, [0.25] * 3, atol=1e-15)


def test_flipped_face_breaks_closedness(cube):
    signs = cube.cell_signs[0].copy()
    signs[0] = -signs[0]
    bad = PolyMesh(cube.vertices, cube.faces, [(cube.cell_faces[0], signs)])
    with pytest.raises(OpenSurface):
        cell_geometry(bad, 0)
    assert not validate_mesh(bad).ok


def test_inward_orientation_is_negative_volume(cube):
    bad = PolyMesh(cube.vertices, cube.faces, [(cube.cell_faces[0], -cube.cell_signs[0])])
    with pytest.raises(NegativeVolume):
        cell_geometry(bad, 0)


def test_second_moment_of_cube_is_identity(cube):
    np.testing.assert_allclose(second_moment(cube, 0), np.eye(3), atol=1e-14)


# -- generators ------------------------------------------------------------------

def test_hex_counts():
    m = generate_mesh("hex", 2)
    assert (m.n_cells, m.n_vertices, m.n_faces, m.n_edges) == (8, 27, 36, 54)


def test_tet_counts():
    m = generate_mesh("tet", 1)
    assert (m.n_cells, m.n_vertices) == (6, 8)
    np.testing.assert_allclose(m.cell_volume, 1 / 6, rtol=1e-14)


def test_perturbed_hex_is_deterministic_and_valid():
    a = generate_mesh("perturbed-hex", 4, 0.2, seed=1)
    b = generate_mesh("perturbed-hex", 4, 0.2, seed=1)
    assert validate_mesh(a).ok
    assert np.array_equal(a.vertices, b.vertices)
    assert a == b
    c = generate_mesh("perturbed-hex", 4, 0.2, seed=2)
    assert not np.array_equal(a.vertices, c.vertices)


def test_perturbed_boundary_vertices_stay_on_facets():
    m = generate_mesh("perturbed-hex", 3, 0.3, seed=5)
    grid = generate_mesh("hex", 3)
    on = np.isclose(grid.vertices, 0.0) | np.isclose(grid.vertices, 1.0)
    np.testing.assert_array_equal(m.vertices[on], grid.vertices[on])


@pytest.mark.parametrize("args", [("hex", 0, 0.0), ("tet", 2, 0.5), ("perturbed-hex", 2, -0.1),
                                  ("hex", 2, 0.1), ("prism", 2, 0.0)])
def test_generator_rejects_bad_parameters(args):
    with pytest.raises(InvalidParam):
        generate_mesh(args[0], args[1], args[2])


@pytest.mark.parametrize("kind,n,delta", [("tet", 2, 0.0), ("hex", 3, 0.0),
                                          ("perturbed-hex", 3, 0.2), ("perturbed-hex", 2, 0.45)])
def test_generated_mesh_invariants(kind, n, delta):
    m = generate_mesh(kind, n, delta, seed=1)
    assert validate_mesh(m).ok
    assert m.cell_volume.sum() == pytest.approx(1.0, rel=1e-12)
    for c in range(m.n_cells):
        s = m.cell_signs[c]
        fc = m.cell_faces[c]
        closure = (s * m.face_area[fc]) @ m.face_normal[fc]
        assert np.abs(closure).max() <= 1e-12 * m.face_area[fc].sum()
        np.testing.assert_allclose(second_moment(m, c), m.cell_volume[c] * np.eye(3),
                                   atol=1e-10 * m.cell_volume[c])
    # interior faces: two cells with opposite signs; boundary faces: one
    total = np.zeros(m.n_faces)
    for fc, s in zip(m.cell_faces, m.cell_signs):
        np.add.at(total, fc, s)
    interior = ~m.boundary_face
    assert np.all(m.face_incidence[interior] == 2)
    assert np.all(total[interior] == 0)
    assert np.all(m.face_incidence[m.boundary_face] == 1)
    assert np.all(np.abs(np.linalg.norm(m.face_normal, axis=1) - 1) <= 1e-12)


def test_perturbed_faces_are_planar():
    m = generate_mesh("perturbed-hex", 3, 0.2, seed=1)
    for f, loop in enumerate(m.faces):
        pts = m.vertices[loop]
        dev = np.abs((pts - m.face_centroid[f]) @ m.face_normal[f]).max()
        assert dev <= 1e-9 * m.face_diameter[f]


def test_edges_and_boundary_flags():
    m = generate_mesh("hex", 2)
    assert np.all(m.edges[:, 0] < m.edges[:, 1])
    np.testing.assert_allclose(m.edge_length, 0.5)
    # 26 of the 27 grid vertices lie on the boundary
    assert m.boundary_vertex.sum() == 26
    assert m.boundary_face.sum() == 24


# -- validation ------------------------------------------------------------------

def test_dangling_face_is_reported(cube):
    bad = PolyMesh(cube.vertices, cube.faces, [(cube.cell_faces[0], cube.cell_signs[0])],
                   boundary_faces=np.zeros(cube.n_faces, dtype=bool))
    report = validate_mesh(bad)
    assert not report.ok
    assert any("face" in v for v in report.violations)


def test_validate_clean_mesh():
    assert validate_mesh(generate_mesh("hex", 2)).violations == []


def test_quality_report_ratios_in_unit_interval():
    q = quality_report(generate_mesh("perturbed-hex", 3, 0.2, seed=1))
    for arr in (q.min_shape_ratio, q.min_face_ratio, q.min_edge_ratio):
        arr = np.asarray(arr)
        assert np.all(arr > 0) and np.all(arr <= 1)
    assert np.all(np.asarray(q.subtet_count) >= 5)


# -- construction from polyhedra -------------------------------------------------

def test_mesh_from_polyhedra_shares_faces(cube):
    # two unit cubes side by side along x
    shifted = cube.vertices + [1.0, 0.0, 0.0]
    verts = np.unique(np.vstack([cube.vertices, shifted]), axis=0)
    index = {tuple(p): i for i, p in enumerate(verts)}
    loops = []
    for pts in (cube.vertices, shifted):
        loops.append([[index[tuple(pts[v])] for v in loop] for loop in cube.oriented_loops(0)])
    two = mesh_from_polyhedra(verts, loops)
    assert (two.n_cells, two.n_faces, two.n_vertices) == (2, 11, 12)
    assert validate_mesh(two).ok
    assert (~two.boundary_face).sum() == 1
    np.testing.assert_allclose(two.cell_volume, 1.0)


def test_tetra_mesh_orients_faces():
    v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 1, 1]], dtype=float)
    m = tetra_mesh(v, [[0, 1, 2, 3], [1, 2, 3, 4]])
    assert validate_mesh(m).ok
    assert m.n_faces == 7


@settings(max_examples=15, deadline=None)
@given(n=st.integers(1, 3), delta=st.floats(0.0, 0.45), seed=st.integers(0, 10_000))
def test_random_perturbations_stay_valid(n, delta, seed):
    m = generate_mesh("perturbed-hex", n, delta, seed=seed)
    assert validate_mesh(m).ok
    assert m.cell_volume.sum() == pytest.approx(1.0, rel=1e-12)
