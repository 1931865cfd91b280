import csv
import json

import numpy as np

from polymfd.cli import main
from polymfd.mesh import PolyMesh, generate_mesh
from polymfd.mesh_io import load_fields, load_mesh, save_mesh


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# -- generate-mesh ---------------------------------------------------------------

def test_generate_hex(tmp_path):
    out = tmp_path / "m.json"
    assert main(["generate-mesh", "--mesh", "hex:2", "--out", str(out)]) == 0
    assert load_mesh(out).n_cells == 8


def test_generate_bad_delta(tmp_path):
    assert main(["generate-mesh", "--mesh", "perturbed-hex:2:0.9", "--out",
                 str(tmp_path / "m.json")]) == 2


def test_generate_seed_repeat_is_byte_identical(tmp_path):
    paths = [tmp_path / "a.json", tmp_path / "b.json"]
    for p in paths:
        assert main(["generate-mesh", "--mesh", "perturbed-hex:3:0.2", "--seed", "7",
                     "--out", str(p)]) == 0
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_bad_mesh_spec_and_missing_file(tmp_path):
    assert main(["generate-mesh", "--mesh", "hex:two", "--out", str(tmp_path / "m")]) == 2
    assert main(["check", "--mesh", str(tmp_path / "none.json"), "--out",
                 str(tmp_path / "c")]) == 2


# -- check -----------------------------------------------------------------------

def test_check_healthy_mesh(tmp_path):
    assert main(["check", "--mesh", "hex:2", "--out", str(tmp_path / "c")]) == 0
    rows = _read_csv(tmp_path / "c_check.csv")
    assert len(rows) == 8
    assert all(r["status"] == "ok" for r in rows)
    assert max(float(r["residual_MF"]) for r in rows) <= 1e-10
    assert all(0 < float(r["c_low_N"]) <= float(r["c_high_N"]) for r in rows)


def test_check_flipped_face_sign(tmp_path, cube):
    signs = cube.cell_signs[0].copy()
    signs[2] = -signs[2]
    path = tmp_path / "bad.json"
    save_mesh(PolyMesh(cube.vertices, cube.faces, [(cube.cell_faces[0], signs)]), path)
    assert main(["check", "--mesh", str(path), "--out", str(tmp_path / "c")]) == 1
    # the CSV is written even when the check fails
    assert (tmp_path / "c_check.csv").exists()


def test_check_other_family_member(tmp_path):
    assert main(["check", "--mesh", "perturbed-hex:2:0.2", "--u-scale-f", "4",
                 "--u-scale-n", "4", "--out", str(tmp_path / "c")]) == 0


def test_check_rejects_nonpositive_scale(tmp_path):
    assert main(["check", "--mesh", "hex:2", "--u-scale-f", "0", "--out",
                 str(tmp_path / "c")]) == 2


# -- solve -----------------------------------------------------------------------

def test_solve_nodal(tmp_path):
    out = tmp_path / "run"
    assert main(["solve", "--method", "nodal", "--mesh", "tet:4", "--out", str(out)]) == 0
    summary = json.loads((tmp_path / "run_summary.json").read_text())
    assert summary["residual"] <= 1e-12
    assert summary["n_dofs"] == 27
    assert set(summary["errors"]) >= {"err_nodal", "err_grad", "err_post"}
    fields = load_fields(tmp_path / "run_fields.json")
    assert len(fields["node"]["u_h"]) == 125
    assert (tmp_path / "run.vtk").read_text().startswith("# vtk DataFile")


def test_solve_mixed_mean_zero(tmp_path):
    out = tmp_path / "run"
    assert main(["solve", "--method", "mixed", "--mesh", "tet:4", "--out", str(out)]) == 0
    summary = json.loads((tmp_path / "run_summary.json").read_text())
    assert summary["mean_zero"] is True
    assert abs(summary["mean_p"]) <= 1e-12
    assert summary["residual"] <= 1e-12


def test_solve_advect_with_sd(tmp_path):
    assert main(["solve", "--method", "advect", "--problem", "trig-advect", "--sd",
                 "--mesh", "hex:3", "--out", str(tmp_path / "run")]) == 0
    summary = json.loads((tmp_path / "run_summary.json").read_text())
    assert summary["method"] == "advect"


def test_solve_unknown_method(tmp_path):
    assert main(["solve", "--method", "spectral", "--mesh", "tet:2", "--out",
                 str(tmp_path / "run")]) == 2


def test_solve_inline_problem_from_config(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"mesh": {"kind": "hex", "n": 2}, "method": "nodal",
                               "problem": {"g": 1.0, "K": [[2, 0, 0], [0, 1, 0], [0, 0, 1]]}}))
    assert main(["solve", "--config", str(cfg), "--out", str(tmp_path / "run")]) == 0
    summary = json.loads((tmp_path / "run_summary.json").read_text())
    assert summary["errors"] == {}
    assert summary["problem"] == "inline"


def test_solver_failure_exits_3(tmp_path):
    # an unreachable tolerance makes the iterative solver give up
    assert main(["solve", "--mesh", "hex:3", "--solver", "cg", "--rtol", "1e-40", "--out",
                 str(tmp_path / "run")]) == 3


def test_config_rejects_unknown_key(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"mesh": "hex:2", "colour": "red"}))
    assert main(["solve", "--config", str(cfg), "--out", str(tmp_path / "run")]) == 2


def test_flags_override_config(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"mesh": "hex:2", "method": "nodal"}))
    assert main(["solve", "--config", str(cfg), "--method", "mixed", "--out",
                 str(tmp_path / "run")]) == 0
    assert json.loads((tmp_path / "run_summary.json").read_text())["method"] == "mixed"


# -- convergence -----------------------------------------------------------------

def test_convergence_nodal_tet(tmp_path):
    assert main(["convergence", "--method", "nodal", "--mesh", "tet", "--levels", "2,4,8",
                 "--out", str(tmp_path / "study")]) == 0
    rows = _read_csv(tmp_path / "study_convergence.csv")
    assert [int(r["n_cells"]) for r in rows] == [48, 384, 3072]
    assert rows[0]["rate_nodal"] == ""
    assert float(rows[-1]["rate_nodal"]) >= 1.8


def test_convergence_patch_is_exact(tmp_path):
    assert main(["convergence", "--method", "mixed", "--problem", "patch", "--mesh",
                 "perturbed-hex:2:0.2", "--levels", "2,3", "--out", str(tmp_path / "s")]) == 0
    rows = _read_csv(tmp_path / "s_convergence.csv")
    for row in rows:
        for key, value in row.items():
            if key.startswith("err_") and value:
                assert float(value) <= 1e-9
    last = rows[-1]
    assert all(last[k] == "exact" for k in last if k.startswith("rate_") and last[k])
    assert last["rate_flux"] == "exact"


def test_convergence_single_level(tmp_path):
    assert main(["convergence", "--mesh", "tet", "--levels", "2", "--out",
                 str(tmp_path / "s")]) == 2


def test_convergence_is_deterministic(tmp_path):
    args = ["convergence", "--method", "mixed", "--mesh", "perturbed-hex:2:0.2", "--seed", "3",
            "--levels", "2,3"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    assert ((tmp_path / "a_convergence.csv").read_bytes()
            == (tmp_path / "b_convergence.csv").read_bytes())


# -- environment -----------------------------------------------------------------

def test_thread_cap(tmp_path, monkeypatch):
    monkeypatch.setenv("POLYMFD_THREADS", "1")
    assert main(["check", "--mesh", "tet:1", "--out", str(tmp_path / "c")]) == 0
    monkeypatch.setenv("POLYMFD_THREADS", "many")
    assert main(["check", "--mesh", "tet:1", "--out", str(tmp_path / "c")]) == 2


def test_no_subcommand_is_usage_error():
    assert main([]) == 2


def test_generated_file_matches_library(tmp_path):
    out = tmp_path / "m.json"
    assert main(["generate-mesh", "--mesh", "perturbed-hex:2:0.1", "--seed", "4",
                 "--out", str(out)]) == 0
    lib = generate_mesh("perturbed-hex", 2, 0.1, seed=4)
    assert np.array_equal(load_mesh(out).vertices, lib.vertices)
