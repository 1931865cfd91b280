import json

import numpy as np
import pytest

from polymfd.errors import ParseError, SchemaVersionMismatch
from polymfd.mesh import generate_mesh
from polymfd.mesh_io import (export_vtk, load_fields, load_mesh, mesh_to_dict, read_vtk_cell_count,
                             save_fields, save_mesh)


@pytest.mark.parametrize("kind,n,delta", [("tet", 1, 0.0), ("perturbed-hex", 3, 0.2)])
def test_round_trip(tmp_path, kind, n, delta):
    mesh = generate_mesh(kind, n, delta, seed=1)
    path = tmp_path / "mesh.json"
    save_mesh(mesh, path)
    back = load_mesh(path)
    assert back == mesh
    assert np.array_equal(back.vertices, mesh.vertices)
    save_mesh(back, tmp_path / "again.json")
    assert (tmp_path / "again.json").read_bytes() == path.read_bytes()


def test_schema_layout():
    data = mesh_to_dict(generate_mesh("hex", 1))
    assert data["version"] == 1
    assert len(data["cells"]) == 1 and sorted(abs(r) for r in data["cells"][0]) == list(range(1, 7))


def _write(tmp_path, data):
    path = tmp_path / "m.json"
    path.write_text(json.dumps(data))
    return path


def test_missing_cells_key(tmp_path):
    data = mesh_to_dict(generate_mesh("tet", 1))
    del data["cells"]
    with pytest.raises(ParseError, match="cells"):
        load_mesh(_write(tmp_path, data))


def test_version_mismatch(tmp_path):
    data = mesh_to_dict(generate_mesh("tet", 1))
    data["version"] = 2
    with pytest.raises(SchemaVersionMismatch):
        load_mesh(_write(tmp_path, data))


@pytest.mark.parametrize("field,value,match", [
    ("faces", [[0, 1]], r"faces\[0\]"),
    ("faces", [[0, 1, 99]], r"faces\[0\]"),
    ("cells", [[0]], r"cells\[0\]"),
    ("cells", [[1, 2, 3, 400]], r"cells\[0\]"),
    ("vertices", [[0, 0]], "vertices"),
])
def test_malformed_entries(tmp_path, field, value, match):
    data = mesh_to_dict(generate_mesh("tet", 1))
    data[field] = value
    with pytest.raises(ParseError, match=match):
        load_mesh(_write(tmp_path, data))


def test_invalid_json_reports_line(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"version": 1,\n "vertices": [[0, 0, 0],]\n}')
    with pytest.raises(ParseError, match="line 2"):
        load_mesh(path)


def test_vtk_export(tmp_path):
    mesh = generate_mesh("hex", 2)
    path = tmp_path / "m.vtk"
    export_vtk(mesh, path, point_data={"u": np.arange(27.0)},
               cell_data={"p": np.ones(8), "g": np.zeros((8, 3))})
    assert read_vtk_cell_count(path) == 8
    text = path.read_text().splitlines()
    types = text[text.index("CELL_TYPES 8") + 1:text.index("CELL_TYPES 8") + 9]
    assert types == ["42"] * 8
    # face stream of the first cell: 6 faces of 4 vertices each
    cells_at = next(i for i, line in enumerate(text) if line.startswith("CELLS"))
    stream = list(map(int, text[cells_at + 1].split()))
    assert stream[0] == len(stream) - 1 == 1 + 6 * 5 and stream[1] == 6
    assert "POINT_DATA 27" in text and "CELL_DATA 8" in text
    assert "VECTORS g double" in text


def test_vtk_rejects_bad_field_shape(tmp_path):
    with pytest.raises(ValueError):
        export_vtk(generate_mesh("hex", 1), tmp_path / "m.vtk", cell_data={"p": np.ones(3)})


def test_fields_round_trip(tmp_path):
    path = tmp_path / "f.json"
    u = np.array([0.1, 1 / 3, -2.5e-17])
    save_fields(path, node={"u_h": u}, cell={"p_h": np.array([np.pi])})
    back = load_fields(path)
    assert np.array_equal(back["node"]["u_h"], u)
    assert np.array_equal(back["cell"]["p_h"], [np.pi])
