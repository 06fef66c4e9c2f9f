import numpy as np
import pytest

from segflow.mesh import TriMesh, build_uniform_mesh


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def unit_right_triangle():
    return TriMesh([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], [[0, 1, 2]], 1.0, 1.0)


def perturbed_mesh(n=16, amount=0.3, seed=0):
    """Uniform n x n mesh with interior vertices jittered by up to ``amount`` cells."""
    m = build_uniform_mesh(n, n, 1.0)
    v = m.vertices.copy()
    interior = (v[:, 0] > 0) & (v[:, 0] < n) & (v[:, 1] > 0) & (v[:, 1] < n)
    r = np.random.default_rng(seed)
    v[interior] += r.uniform(-amount, amount, size=(interior.sum(), 2))
    return TriMesh(v, m.triangles, n, n)


# acceptance summary: test_acceptance records one line per criterion
ACCEPTANCE = {}


def record_acceptance(number, passed, detail):
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'} ({detail})"
    ACCEPTANCE[number] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
