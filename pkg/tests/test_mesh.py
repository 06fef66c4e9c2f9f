import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from segflow.mesh import (REF_AREA, REF_VERTICES, TriMesh, build_uniform_mesh, check_mesh,
                          element_geometry, locate_brute_force, locate_point, locate_points,
                          mesh_stats, patch, triangle_geometry)

from conftest import perturbed_mesh


def cross2(u, v):
    return u[0] * v[1] - u[1] * v[0]


def rotation(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def test_uniform_counts():
    m = build_uniform_mesh(200, 200, 1.0)
    assert m.n_elements == 80_000
    st_ = mesh_stats(m)
    assert st_.h_min == pytest.approx(1.0)
    assert st_.h_max == pytest.approx(np.sqrt(2.0))
    assert build_uniform_mesh(2, 2, 1.0).n_elements == 8


def test_uniform_mesh_valid():
    m = build_uniform_mesh(7, 5, 1.0)
    assert check_mesh(m) == []
    assert m.areas.sum() == pytest.approx(35.0)
    assert np.all(m.areas > 0)


def test_invalid_meshes_rejected():
    with pytest.raises(ValueError):
        TriMesh([[0, 0], [1, 0], [0, 1]], [[0, 2, 1]], 1, 1)   # clockwise
    with pytest.raises(ValueError):
        TriMesh([[0, 0], [1, 0], [0, 1], [5, 5]], [[0, 1, 2]], 1, 1)   # orphan vertex


def test_reference_triangle_identity():
    g = triangle_geometry(REF_VERTICES)
    assert np.allclose(g.jacobian, np.eye(2), atol=1e-14)
    assert g.stretching == pytest.approx(1.0)
    assert np.isclose(0.5 * abs(cross2(REF_VERTICES[1] - REF_VERTICES[0],
                                         REF_VERTICES[2] - REF_VERTICES[0])), REF_AREA)


def test_scaled_reference():
    g = triangle_geometry(REF_VERTICES @ np.diag([3.0, 1.0]))
    assert g.lambda1 == pytest.approx(3.0)
    assert g.lambda2 == pytest.approx(1.0)
    assert g.stretching == pytest.approx(3.0)
    assert abs(abs(g.r1[0]) - 1.0) < 1e-12


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 2 * np.pi), st.floats(0.01, 100), st.floats(-50, 50), st.floats(-50, 50))
def test_equilateral_is_isotropic(theta, scale, tx, ty):
    pts = scale * REF_VERTICES @ rotation(theta).T + [tx, ty]
    assert triangle_geometry(pts).stretching == pytest.approx(1.0, abs=1e-9)


def test_decomposition_reassembles(rng):
    for _ in range(50):
        pts = rng.uniform(0, 10, size=(3, 2))
        if cross2(pts[1] - pts[0], pts[2] - pts[0]) < 0:
            pts = pts[[0, 2, 1]]
        g = triangle_geometry(pts)
        big_r = np.vstack([g.r1, g.r2])
        b = big_r.T @ np.diag([g.lambda1, g.lambda2]) @ big_r
        assert np.allclose(b @ g.rotation, g.jacobian, rtol=1e-9, atol=1e-9 * np.abs(g.jacobian).max())
        assert np.allclose(g.rotation @ g.rotation.T, np.eye(2), atol=1e-12)
        images = REF_VERTICES @ g.jacobian.T + g.shift
        assert np.allclose(images, pts, atol=1e-9 * np.abs(pts).max())


def test_stretching_rigid_invariance(rng):
    for _ in range(50):
        pts = rng.uniform(0, 10, size=(3, 2))
        if cross2(pts[1] - pts[0], pts[2] - pts[0]) < 0:
            pts = pts[[0, 2, 1]]
        s0 = triangle_geometry(pts).stretching
        moved = pts @ rotation(rng.uniform(0, 2 * np.pi)).T + rng.uniform(-100, 100, 2)
        assert abs(triangle_geometry(moved).stretching - s0) <= 1e-10 * s0
        # vertex relabelling only changes the rotation factor
        assert triangle_geometry(pts[[1, 2, 0]]).stretching == pytest.approx(s0, rel=1e-10)


def test_uniform_mesh_stretching():
    m = build_uniform_mesh(4, 4, 1.0)
    rep = triangle_geometry([[0, 0], [1, 0], [1, 1]])
    sv = np.linalg.svd(rep.jacobian, compute_uv=False)
    assert mesh_stats(m).max_stretching == pytest.approx(sv[0] / sv[1], rel=1e-12)
    assert element_geometry(m, 0).stretching == pytest.approx(sv[0] / sv[1])
    with pytest.raises(IndexError):
        element_geometry(m, m.n_elements)


def brute_patch(mesh, k):
    own = set(mesh.triangles[k].tolist())
    return sorted(t for t in range(mesh.n_elements) if own & set(mesh.triangles[t].tolist()))


def test_patch_interior_and_corner():
    m = build_uniform_mesh(6, 6, 1.0)
    centre = int(np.argmin(np.linalg.norm(m.centroids - [3.3, 2.7], axis=1)))
    p = patch(m, centre)
    assert len(p.elements) == 13
    assert sorted(p.elements.tolist()) == brute_patch(m, centre)
    assert p.area == pytest.approx(m.areas[p.elements].sum())
    corner = int(np.argmin(np.linalg.norm(m.centroids, axis=1)))
    assert len(patch(m, corner).elements) < 13


def test_patch_symmetric():
    m = perturbed_mesh(8)
    pm = m.patch_matrix
    assert (pm != pm.T).nnz == 0
    for k in range(0, m.n_elements, 7):
        assert sorted(patch(m, k).elements.tolist()) == brute_patch(m, k)


def test_locate_centroid_and_vertex():
    m = build_uniform_mesh(5, 5, 1.0)
    k, bary = locate_point(m, m.centroids[17])
    assert k == 17 and np.allclose(bary, 1.0 / 3.0)
    k, bary = locate_point(m, m.vertices[8])
    assert np.isclose(bary.max(), 1.0) and np.isclose(np.sort(bary)[:2], 0.0).all()
    assert np.allclose(m.vertices[m.triangles[k]].T @ bary, m.vertices[8])


@pytest.mark.parametrize("mesh", [build_uniform_mesh(16, 16, 1.0), perturbed_mesh(16, 0.35, 3)],
                         ids=["uniform", "perturbed"])
def test_locator_matches_brute_force(mesh, rng):
    pts = rng.uniform(0, 16, size=(1200, 2))
    elem, bary = locate_points(mesh, pts)
    for p, k, b in zip(pts, elem, bary):
        kb, bb = locate_brute_force(mesh, p)
        # points on shared edges may legally land in either element
        assert k == kb or np.isclose(np.sort(b)[0], 0.0, atol=1e-9)
        assert np.allclose(mesh.vertices[mesh.triangles[k]].T @ b, p, atol=1e-10)
        assert b.min() >= 0.0


def test_locate_outside():
    with pytest.raises(ValueError):
        locate_point(build_uniform_mesh(3, 3, 1.0), (3.5, 1.0))


def test_check_mesh_reports_holes():
    m = build_uniform_mesh(3, 3, 1.0)
    holed = TriMesh(m.vertices, m.triangles[1:], 3, 3)
    assert check_mesh(holed)
