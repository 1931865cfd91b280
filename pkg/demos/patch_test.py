"""Patch test: both methods reproduce a linear solution on a distorted mesh.

The exact solution u = 1 + 2x - y + 3z is recovered to rounding error by the
nodal and the mixed method, for any member of the scalar-product family.

    python demos/patch_test.py
"""

import numpy as np

from polymfd import StabilizationConfig, generate_mesh
from polymfd.problems import patch_problem
from polymfd.study import solve_and_measure


def main():
    mesh = generate_mesh("perturbed-hex", 3, 0.2, seed=1)
    print(f"mesh: {mesh.n_cells} cells, {mesh.n_faces} faces, {mesh.n_vertices} vertices")
    for K in (np.eye(3), np.diag([10.0, 1.0, 1.0])):
        spec = patch_problem(K)
        for scale in (0.5, 1.0, 4.0):
            for method in ("nodal", "mixed"):
                rep = solve_and_measure(mesh, spec, method, StabilizationConfig(scale, scale))[0]
                worst = max(v for v in rep.errors().values() if v is not None)
                print(f"K diag {np.diag(K)}  u_scale {scale:3}  {method:5}  max error {worst:.1e}")


if __name__ == "__main__":
    main()
