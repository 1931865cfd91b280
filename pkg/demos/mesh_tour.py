"""Generate, check and export a mesh, then run the same steps from the CLI.

Writes files into a temporary directory and lists them.

    python demos/mesh_tour.py
"""

import tempfile
from pathlib import Path

from polymfd import build_forms, generate_mesh, quality_report, validate_mesh
from polymfd.cli import main as cli
from polymfd.mesh_io import export_vtk, load_mesh, save_mesh


def main():
    mesh = generate_mesh("perturbed-hex", 3, 0.25, seed=4)
    print("valid:", validate_mesh(mesh).ok)
    q = quality_report(mesh)
    print(f"worst shape ratio {min(q.min_shape_ratio):.3f}, "
          f"worst face ratio {min(q.min_face_ratio):.3f}")

    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        save_mesh(mesh, tmp / "mesh.json")
        assert load_mesh(tmp / "mesh.json") == mesh
        forms = build_forms(mesh)
        export_vtk(mesh, tmp / "mesh.vtk", cell_data={"volume": mesh.cell_volume,
                                                      "n_faces": [len(L.N) for L in forms]})
        print("check exit code:", cli(["check", "--mesh", str(tmp / "mesh.json"),
                                       "--out", str(tmp / "mesh")]))
        print("solve exit code:", cli(["solve", "--method", "mixed", "--mesh", "hex:4",
                                       "--out", str(tmp / "run")]))
        for p in sorted(tmp.iterdir()):
            print(f"  {p.name:24} {p.stat().st_size:8d} bytes")


if __name__ == "__main__":
    main()
