import numpy as np
import pytest

from polymfd.mesh import generate_mesh, reference_tet_mesh, unit_cube_mesh

K_FULL = np.array([[2.0, 0.5, 0.0], [0.5, 1.0, 0.2], [0.0, 0.2, 3.0]])
K_LIST = [np.eye(3), np.diag([10.0, 1.0, 1.0]), K_FULL]
U_SCALES = [0.5, 1.0, 4.0]


@pytest.fixture(scope="session")
def cube():
    return unit_cube_mesh()


@pytest.fixture(scope="session")
def ref_tet():
    return reference_tet_mesh()


@pytest.fixture(scope="session")
def sweep_meshes():
    """The three meshes of the algebraic-consistency sweep."""
    return {
        "tet2": generate_mesh("tet", 2),
        "hex3": generate_mesh("hex", 3),
        "phex3": generate_mesh("perturbed-hex", 3, 0.2, seed=1),
    }


@pytest.fixture(scope="session")
def phex3(sweep_meshes):
    return sweep_meshes["phex3"]


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
