"""Low-order mimetic finite difference methods on polyhedral meshes.

Nodal and mixed discretizations of ``-div(K grad u) + beta . grad u = g``
built from local scalar products that are exact on linear fields.
"""

from .dof import (QuadratureWeights, build_quadrature, discrete_div, discrete_grad,
                  interp_cell, interp_face, interp_node)
from .errors import *  # noqa: F401,F403
from .forms import (Forms, LocalElementMatrices, MaterialSample, StabilizationConfig,
                    build_AB, build_forms, build_MF, build_MN, build_NR, build_W, null_basis,
                    sample_material, spectral_check)
from .mesh import (PolyMesh, cell_geometry, face_geometry, generate_mesh, mesh_from_polyhedra,
                   quality_report, validate_mesh)
from .mesh_io import export_vtk, load_mesh, save_mesh
from .post import (CellLinearField, ErrorReport, compute_errors, convergence_rates,
                   postprocess_mixed, postprocess_nodal, reconstruct_gradient, reconstruct_vector)
from .problems import get_problem, manufactured
from .solve import (LinearSystem, MixedSolution, ProblemSpec, assemble_advection, assemble_mixed,
                    assemble_nodal, solve_advection, solve_mixed, solve_nodal, solve_system)
from .study import run_convergence

__version__ = "0.1.0"
