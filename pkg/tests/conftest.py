import numpy as np
import pytest
import scipy.sparse as sp

from sparselg.fem import FemModel, Material, box_tet_mesh, build_system


def grid_laplacian(nx: int, ny: int, shift: float = 0.1) -> sp.csr_array:
    """5-point Laplacian on an nx x ny grid plus ``shift * I`` (SPD)."""
    def path(n):
        return sp.diags_array([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], offsets=[-1, 0, 1])

    A = sp.kron(sp.eye_array(ny), path(nx)) + sp.kron(path(ny), sp.eye_array(nx))
    return sp.csr_array(A + shift * sp.eye_array(nx * ny))


def random_spd(n: int, density: float, rng: np.random.Generator) -> sp.csr_array:
    B = sp.random_array((n, n), density=density, rng=rng, format="csr")
    return sp.csr_array(B @ B.T + n * 0.05 * sp.eye_array(n))


def desk_systems():
    """Global systems of small FEM meshes, each with at most 900 DOFs."""
    out = []
    specs = [
        ((0.1, 0.1, 0.1), (1, 1, 1), "arap", 1e5),
        ((0.2, 0.1, 0.1), (2, 1, 1), "arap", 1e6),
        ((0.1, 0.1, 0.1), (2, 2, 2), "corotational", 1e7),
        ((0.3, 0.1, 0.1), (3, 1, 1), "neohookean", 1e5),
        ((0.4, 0.1, 0.1), (4, 2, 2), "arap", 1e9),
        ((0.2, 0.2, 0.1), (3, 3, 1), "corotational", 1e6),
        ((0.1, 0.1, 0.1), (3, 3, 3), "neohookean", 1e4),
        ((0.4, 0.1, 0.1), (8, 2, 2), "arap", 1e8),
        ((0.2, 0.2, 0.2), (4, 4, 3), "corotational", 1e5),
        ((0.3, 0.2, 0.1), (5, 4, 3), "arap", 1e7),
    ]
    for size, res, kind, E in specs:
        mesh = box_tet_mesh(size, res)
        model = FemModel.from_mesh(mesh, Material(kind, 1000.0, E, 0.3))
        out.append(build_system(model, 0.01))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def acceptance_report():
    """Record ``(criterion, passed, detail)``; a summary line per criterion is printed at the end."""

    def record(criterion: int, passed: bool, detail: str) -> bool:
        ACCEPTANCE[criterion] = (bool(passed), detail)
        print(f"criterion {criterion}: {'PASS' if passed else 'FAIL'} - {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if passed else 'FAIL'} - {detail}")
