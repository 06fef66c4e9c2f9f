import numpy as np
import pytest

from segflow.fem import (ConvergenceError, StepAInfo, assemble_load, assemble_mass,
                         assemble_stiffness, divergence_rhs, gradient_p0, interpolate_p1,
                         solve_spd, step_a_solve, transfer_p0, transfer_p1)
from segflow.mesh import build_uniform_mesh
import scipy.sparse as sp

from conftest import perturbed_mesh

MESHES = {
    "uniform": lambda: build_uniform_mesh(9, 7, 1.0),
    "perturbed": lambda: perturbed_mesh(10, 0.3, 1),
}


def test_mass_unit_triangle(unit_right_triangle):
    m = assemble_mass(unit_right_triangle).toarray()
    expected = np.full((3, 3), 1.0 / 24.0) + np.eye(3) / 24.0
    assert np.abs(m - expected).max() <= 1e-14


def test_stiffness_unit_triangle(unit_right_triangle):
    a = assemble_stiffness(unit_right_triangle).toarray()
    expected = np.array([[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]])
    assert np.abs(a - expected).max() <= 1e-14


def test_mass_monomial_quadrature(unit_right_triangle):
    # integral of x over the unit right triangle is 1/6; x is P1 with nodal values (0, 1, 0)
    m = assemble_mass(unit_right_triangle)
    one = np.ones(3)
    x = np.array([0.0, 1.0, 0.0])
    assert one @ m @ x == pytest.approx(1.0 / 6.0, abs=1e-15)
    assert x @ m @ x == pytest.approx(1.0 / 12.0, abs=1e-15)


@pytest.mark.parametrize("make", MESHES.values(), ids=MESHES.keys())
def test_global_properties(make):
    mesh = make()
    m = assemble_mass(mesh)
    a = assemble_stiffness(mesh)
    assert m.sum() == pytest.approx(mesh.width * mesh.height, rel=1e-13)
    assert np.abs(a @ np.ones(mesh.n_vertices)).max() <= 1e-12
    assert abs(m - m.T).max() <= 1e-12 and abs(a - a.T).max() <= 1e-12
    x = mesh.vertices[:, 0]
    assert x @ (a @ x) == pytest.approx(mesh.width * mesh.height, rel=1e-12)


def test_mass_sum_independent_of_mesh():
    a = assemble_mass(build_uniform_mesh(12, 12, 1.0)).sum()
    b = assemble_mass(perturbed_mesh(12, 0.25, 9)).sum()
    assert a == pytest.approx(b, rel=1e-13)


def test_gradient_linear_and_constant():
    mesh = perturbed_mesh(8, 0.3, 2)
    x, y = mesh.vertices.T
    assert np.allclose(gradient_p0(mesh, 2 * x + 3 * y), [2.0, 3.0], atol=1e-12)
    assert np.all(gradient_p0(mesh, np.full(mesh.n_vertices, 4.0)) == 0.0)


def test_gradient_hat_function(unit_right_triangle):
    assert np.allclose(gradient_p0(unit_right_triangle, [0.0, 1.0, 0.0]), [[1.0, 0.0]])
    assert np.allclose(gradient_p0(unit_right_triangle, [1.0, 0.0, 0.0]), [[-1.0, -1.0]])


@pytest.mark.parametrize("make", MESHES.values(), ids=MESHES.keys())
def test_divergence_identity(make, rng):
    mesh = make()
    assert np.all(divergence_rhs(mesh, np.zeros((mesh.n_elements, 2))) == 0.0)
    psi = rng.normal(size=mesh.n_vertices)
    lhs = divergence_rhs(mesh, gradient_p0(mesh, psi)) + assemble_stiffness(mesh) @ psi
    assert np.abs(lhs).max() <= 1e-12


def test_load_vector_partition(rng):
    mesh = perturbed_mesh(6, 0.2, 4)
    q = rng.normal(size=mesh.n_elements)
    assert assemble_load(mesh, q).sum() == pytest.approx(np.sum(mesh.areas * q), rel=1e-12)


def test_solve_spd(rng):
    n = 40
    assert np.array_equal(solve_spd(sp.identity(n, format="csr"), np.arange(n, dtype=float)),
                          np.arange(n, dtype=float))
    mesh = build_uniform_mesh(8, 8, 1.0)
    a = (assemble_mass(mesh) + 0.5 * assemble_stiffness(mesh)).tocsr()
    x_star = rng.normal(size=mesh.n_vertices)
    rhs = a @ x_star
    x = solve_spd(a, rhs, tol=1e-8)
    assert np.linalg.norm(a @ x - rhs) <= 1e-8 * np.linalg.norm(rhs)
    assert np.allclose(x, x_star, atol=1e-6)
    assert np.all(solve_spd(a, np.zeros(mesh.n_vertices)) == 0.0)


def test_solve_spd_gives_up():
    mesh = build_uniform_mesh(10, 10, 1.0)
    a = (assemble_mass(mesh) + 10.0 * assemble_stiffness(mesh)).tocsr()
    with pytest.raises(ConvergenceError) as exc:
        solve_spd(a, np.random.default_rng(0).normal(size=mesh.n_vertices), tol=1e-14, maxiter=2)
    assert exc.value.iterations == 2


def test_step_a_preserves_constant():
    mesh = perturbed_mesh(12, 0.3, 5)
    zero_v = np.zeros((mesh.n_elements, 2))
    b = np.random.default_rng(1).normal(size=(mesh.n_elements, 2))
    for c in (-1.0, -0.3, 0.0, 0.7, 1.0):
        out = step_a_solve(mesh, np.full(mesh.n_vertices, c), np.zeros(mesh.n_elements),
                           b, b, mu=1.0, dt=10.0)
        assert np.abs(out - c).max() <= 1e-10
        out = step_a_solve(mesh, np.full(mesh.n_vertices, c), np.zeros(mesh.n_elements),
                           zero_v, zero_v, mu=1.0, dt=0.05)
        assert np.abs(out - c).max() <= 1e-10


def test_step_a_conserves_mass(rng):
    mesh = perturbed_mesh(12, 0.3, 6)
    m = assemble_mass(mesh)
    phi = 0.3 * rng.uniform(-1, 1, size=mesh.n_vertices)
    zero_v = np.zeros((mesh.n_elements, 2))
    out = step_a_solve(mesh, phi, np.zeros(mesh.n_elements), zero_v, zero_v, mu=1.0, dt=0.5,
                       max_inner=1)
    total = np.ones(mesh.n_vertices) @ (m @ phi)
    assert abs(np.ones(mesh.n_vertices) @ (m @ out) - total) <= 1e-10 * np.abs(m @ phi).sum()


def test_step_a_single_element_closed_form(unit_right_triangle):
    mesh = unit_right_triangle
    phi0 = np.array([0.2, -0.1, 0.05])
    sigma, mu, dt = 0.4, 2.0, 0.5
    zero_v = np.zeros((1, 2))
    out = step_a_solve(mesh, phi0, [sigma], zero_v, zero_v, mu=mu, dt=dt, max_inner=1)
    m = np.full((3, 3), 1.0 / 24.0) + np.eye(3) / 24.0
    a = np.array([[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]])
    rhs = m @ phi0 + dt * np.full(3, -sigma / mu / 6.0)
    assert np.allclose(out, np.linalg.solve(m + dt * a, rhs), atol=1e-9)


def test_step_a_clamps_and_reports():
    mesh = build_uniform_mesh(6, 6, 1.0)
    zero_v = np.zeros((mesh.n_elements, 2))
    info = StepAInfo(0, 0.0)
    out = step_a_solve(mesh, np.zeros(mesh.n_vertices) + 0.5, np.full(mesh.n_elements, -100.0),
                       zero_v, zero_v, mu=1.0, dt=1.0, alpha=1.0, info=info)
    assert out.max() == 1.0 and out.min() >= -1.0
    assert 1 <= info.inner_steps <= 5
    with pytest.raises(ValueError):
        step_a_solve(mesh, out, np.zeros(mesh.n_elements), zero_v, zero_v, mu=0.0, dt=1.0)


def test_transfer_linear_exact():
    src = build_uniform_mesh(10, 10, 1.0)
    dst = perturbed_mesh(10, 0.4, 8)
    f = lambda v: 1.5 * v[:, 0] - 0.25 * v[:, 1] + 3.0
    assert np.allclose(transfer_p1(src, f(src.vertices), dst), f(dst.vertices), atol=1e-12)
    assert np.allclose(transfer_p1(dst, f(dst.vertices), src), f(src.vertices), atol=1e-12)


def test_transfer_identity_and_projection(rng):
    src = build_uniform_mesh(10, 10, 1.0)
    dst = perturbed_mesh(10, 0.4, 8)
    phi = rng.normal(size=src.n_vertices)
    assert np.allclose(transfer_p1(src, phi, src), phi, atol=1e-13)
    once = transfer_p1(src, phi, dst)
    assert np.allclose(transfer_p1(dst, once, dst), once, atol=1e-13)
    w = rng.normal(size=(src.n_elements, 2))
    assert np.array_equal(transfer_p0(src, w, src), w)


def test_interpolate_points(rng):
    mesh = perturbed_mesh(6, 0.3, 3)
    pts = rng.uniform(0, 6, size=(100, 2))
    vals = interpolate_p1(mesh, 2.0 * mesh.vertices[:, 1] - mesh.vertices[:, 0], pts)
    assert np.allclose(vals, 2.0 * pts[:, 1] - pts[:, 0], atol=1e-12)
