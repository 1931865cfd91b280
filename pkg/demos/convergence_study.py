"""Refinement study for u = sin(pi x) sin(pi y) sin(pi z).

Prints the CSV rate table for the nodal and mixed methods on tetrahedral and
perturbed hexahedral meshes. Rates are log(e_coarse / e_fine) / log(h_coarse / h_fine).

    python demos/convergence_study.py [levels, default 2,4,8]
"""

import sys

from polymfd.problems import trig_problem
from polymfd.study import rate_table_csv, run_convergence


def main(levels=(2, 4, 8)):
    spec = trig_problem()
    for kind, delta in (("tet", 0.0), ("perturbed-hex", 0.2)):
        for method in ("nodal", "mixed"):
            reports = run_convergence(kind, levels, spec, method, delta=delta, seed=1)
            print(f"# {kind} {method}")
            print(rate_table_csv(reports))


if __name__ == "__main__":
    main(tuple(int(n) for n in sys.argv[1].split(",")) if len(sys.argv) > 1 else (2, 4, 8))
