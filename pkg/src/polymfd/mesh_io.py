"""Mesh and field files: JSON mesh schema and legacy ASCII VTK export.

JSON mesh layout::

    {"version": 1,
     "vertices": [[x, y, z], ...],
     "faces": [[v0, v1, ...], ...],
     "cells": [[+-(face_index + 1), ...], ...]}

The sign of a cell entry is the orientation of the face relative to the
cell's outward normal.  Boundary entities are inferred from incidence.
"""

from __future__ import annotations

import json
import math
import os
from typing import Mapping, Optional

import numpy as np

from .errors import ParseError, SchemaVersionMismatch
from .mesh import PolyMesh

SCHEMA_VERSION = 1
VTK_POLYHEDRON = 42


def mesh_to_dict(mesh: PolyMesh) -> dict:
    return {
        "version": SCHEMA_VERSION,
        "vertices": mesh.vertices.tolist(),
        "faces": [f.tolist() for f in mesh.faces],
        "cells": [
            [int(s) * (int(f) + 1) for f, s in zip(cf, sg)]
            for cf, sg in zip(mesh.cell_faces, mesh.cell_signs)
        ],
    }


def _field(data: Mapping, key: str):
    if key not in data:
        raise ParseError(f"missing required key {key!r}")
    return data[key]


def mesh_from_dict(data) -> PolyMesh:
    """Build a mesh from the JSON layout.

    Raises
    ------
    ParseError
        On a missing key or malformed entry; the message names the field.
    SchemaVersionMismatch
        If ``version`` is not the supported schema version.
    """
    if not isinstance(data, Mapping):
        raise ParseError("top level must be a JSON object")
    version = _field(data, "version")
    if version != SCHEMA_VERSION:
        raise SchemaVersionMismatch(f"unsupported schema version {version!r} "
                                    f"(expected {SCHEMA_VERSION})")
    raw_v = _field(data, "vertices")
    raw_f = _field(data, "faces")
    raw_c = _field(data, "cells")
    try:
        vertices = np.array(raw_v, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"vertices: {exc}") from None
    if vertices.ndim != 2 or vertices.shape[1] != 3 or not np.isfinite(vertices).all():
        raise ParseError("vertices: expected a list of finite [x, y, z] triples")
    nv = len(vertices)

    faces = []
    for i, loop in enumerate(raw_f):
        if not isinstance(loop, list) or len(loop) < 3:
            raise ParseError(f"faces[{i}]: expected at least 3 vertex indices")
        if not all(isinstance(v, int) and not isinstance(v, bool) and 0 <= v < nv for v in loop):
            raise ParseError(f"faces[{i}]: vertex index out of range or not an integer")
        faces.append(loop)

    cells = []
    for i, refs in enumerate(raw_c):
        if not isinstance(refs, list) or not refs:
            raise ParseError(f"cells[{i}]: expected a non-empty list of signed face references")
        ids, signs = [], []
        for r in refs:
            if not isinstance(r, int) or isinstance(r, bool) or r == 0 or abs(r) > len(faces):
                raise ParseError(f"cells[{i}]: invalid face reference {r!r}")
            ids.append(abs(r) - 1)
            signs.append(1 if r > 0 else -1)
        cells.append((ids, signs))
    return PolyMesh(vertices, faces, cells)


def save_mesh(mesh: PolyMesh, path) -> None:
    """Write ``mesh`` as JSON; coordinates keep full double precision."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(mesh_to_dict(mesh), fh, separators=(",", ":"))
        fh.write("\n")


def load_mesh(path) -> PolyMesh:
    """Read a JSON mesh written by :func:`save_mesh` (or by hand)."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{os.fspath(path)}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return mesh_from_dict(data)


def _vtk_values(values: np.ndarray) -> str:
    return "\n".join(repr(float(v)) for v in np.ravel(values))


def export_vtk(mesh: PolyMesh, path, point_data: Optional[Mapping] = None,
               cell_data: Optional[Mapping] = None, title: str = "polymfd") -> None:
    """Legacy ASCII unstructured grid with polyhedron cells.

    ``point_data`` and ``cell_data`` map names to scalar (n,) or vector
    (n, 3) arrays.
    """
    lines = ["# vtk DataFile Version 4.2", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {mesh.n_vertices} double"]
    lines += [" ".join(repr(float(x)) for x in p) for p in mesh.vertices]

    records = []
    for c in range(mesh.n_cells):
        stream = [len(mesh.cell_faces[c])]
        for loop in mesh.oriented_loops(c):
            stream.append(len(loop))
            stream.extend(int(v) for v in loop)
        records.append(stream)
    size = sum(len(r) + 1 for r in records)
    lines.append(f"CELLS {mesh.n_cells} {size}")
    lines += [" ".join(map(str, [len(r)] + r)) for r in records]
    lines.append(f"CELL_TYPES {mesh.n_cells}")
    lines += [str(VTK_POLYHEDRON)] * mesh.n_cells

    for header, count, data in (("POINT_DATA", mesh.n_vertices, point_data),
                                ("CELL_DATA", mesh.n_cells, cell_data)):
        if not data:
            continue
        lines.append(f"{header} {count}")
        for name, arr in data.items():
            arr = np.asarray(arr, dtype=float)
            if arr.shape == (count,):
                lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default", _vtk_values(arr)]
            elif arr.shape == (count, 3):
                lines += [f"VECTORS {name} double", _vtk_values(arr)]
            else:
                raise ValueError(f"field {name!r} has shape {arr.shape}, expected ({count},) "
                                 f"or ({count}, 3)")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_vtk_cell_count(path) -> int:
    """Number of cells declared by a legacy VTK file."""
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("CELLS "):
                return int(line.split()[1])
    raise ParseError(f"{os.fspath(path)}: no CELLS section")


def _jsonable(x):
    # non-finite floats are not valid JSON
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


def save_fields(path, **groups: Mapping[str, np.ndarray]) -> None:
    """Write named fields grouped by entity kind, e.g.
    ``save_fields(p, node={"u": u}, cell={"p": p})``."""
    out = {"version": SCHEMA_VERSION}
    for kind, fields in groups.items():
        out[kind] = {name: [_jsonable(float(v)) for v in np.ravel(arr)]
                     for name, arr in fields.items()}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(out, fh, separators=(",", ":"))
        fh.write("\n")


def load_fields(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    return {kind: {k: np.array(v, dtype=float) for k, v in fields.items()}
            for kind, fields in data.items() if kind != "version"}
