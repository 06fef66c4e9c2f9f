"""Conforming triangulations of the image rectangle and their anisotropic geometry.

Every element ``K`` is the image of the reference equilateral triangle
inscribed in the unit circle, with vertices ``(0, 1)``, ``(-sqrt(3)/2, -1/2)``
and ``(sqrt(3)/2, -1/2)``, under the affine map ``x = M_K xhat + w_K``.
Local vertex ``i`` of ``K`` is the image of reference vertex ``i``.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from ._tensor import sym_eig

SQRT3 = np.sqrt(3.0)
REF_VERTICES = np.array([[0.0, 1.0], [-SQRT3 / 2, -0.5], [SQRT3 / 2, -0.5]])
REF_AREA = 3.0 * SQRT3 / 4.0
_REF_EDGES = np.column_stack([REF_VERTICES[1] - REF_VERTICES[0], REF_VERTICES[2] - REF_VERTICES[0]])
_REF_EDGES_INV = np.linalg.inv(_REF_EDGES)

BARY_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Immutable triangulation of ``[0, width] x [0, height]``.

    Parameters
    ----------
    vertices : (N, 2) array of float
        Vertex coordinates in pixel units.
    triangles : (M, 3) array of int
        Vertex indices, counter-clockwise in the ``(x, y)`` frame.
    width, height : float
        Extent of the rectangular domain.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    width: float
    height: float

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float)
        t = np.array(self.triangles, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 2:
            raise ValueError("vertices must have shape (N, 2)")
        if t.ndim != 2 or t.shape[1] != 3 or len(t) == 0:
            raise ValueError("triangles must have shape (M, 3) with M >= 1")
        if t.min() < 0 or t.max() >= len(v):
            raise ValueError("triangle references a missing vertex")
        if len(np.unique(t)) != len(v):
            raise ValueError("every vertex must belong to at least one triangle")
        p = v[t]
        area2 = ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                 - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))
        if np.any(area2 <= 0):
            bad = int(np.flatnonzero(area2 <= 0)[0])
            raise ValueError(f"element {bad} is degenerate or negatively oriented")
        v.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        object.__setattr__(self, "width", float(self.width))
        object.__setattr__(self, "height", float(self.height))

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_elements(self):
        return len(self.triangles)

    @cached_property
    def areas(self):
        p = self.vertices[self.triangles]
        a = 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                   - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))
        a.setflags(write=False)
        return a

    @cached_property
    def centroids(self):
        return self.vertices[self.triangles].mean(axis=1)

    @cached_property
    def basis_gradients(self):
        """Gradients of the three P1 basis functions on each element, shape (M, 3, 2)."""
        p = self.vertices[self.triangles]
        two_a = 2.0 * self.areas
        g = np.empty((self.n_elements, 3, 2))
        for i in range(3):
            j, k = (i + 1) % 3, (i + 2) % 3
            g[:, i, 0] = (p[:, j, 1] - p[:, k, 1]) / two_a
            g[:, i, 1] = (p[:, k, 0] - p[:, j, 0]) / two_a
        g.setflags(write=False)
        return g

    @cached_property
    def _edge_data(self):
        t = self.triangles
        # local edge i is opposite local vertex i
        local = np.stack([t[:, [1, 2]], t[:, [2, 0]], t[:, [0, 1]]], axis=1).reshape(-1, 2)
        key = np.sort(local, axis=1)
        edges, inverse, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
        inverse = inverse.reshape(-1)
        if counts.max() > 2:
            raise ValueError("non-manifold edge shared by more than two elements")
        elem = np.repeat(np.arange(self.n_elements), 3)
        order = np.argsort(inverse, kind="stable")
        edge_elements = np.full((len(edges), 2), -1, dtype=np.int64)
        first = np.ones(len(order), dtype=bool)
        first[1:] = inverse[order][1:] != inverse[order][:-1]
        edge_elements[inverse[order][first], 0] = elem[order][first]
        edge_elements[inverse[order][~first], 1] = elem[order][~first]
        element_edges = inverse.reshape(-1, 3)
        return edges, edge_elements, element_edges

    @property
    def edges(self):
        """Unique edges as sorted vertex pairs, shape (E, 2)."""
        return self._edge_data[0]

    @property
    def edge_elements(self):
        """The one or two elements adjacent to each edge (``-1`` when absent)."""
        return self._edge_data[1]

    @property
    def element_edges(self):
        """Edge index of local edge ``i`` (opposite local vertex ``i``), shape (M, 3)."""
        return self._edge_data[2]

    @cached_property
    def neighbors(self):
        """Element across local edge ``i`` (``-1`` on the boundary), shape (M, 3)."""
        ee = self.edge_elements[self.element_edges]
        own = np.arange(self.n_elements)[:, None]
        return np.where(ee[..., 0] == own, ee[..., 1], ee[..., 0])

    @cached_property
    def boundary_edges(self):
        """Boolean flag per edge: ``True`` when the edge has a single element."""
        return self.edge_elements[:, 1] < 0

    @cached_property
    def edge_lengths(self):
        e = self.vertices[self.edges]
        return np.hypot(*(e[:, 1] - e[:, 0]).T)

    @cached_property
    def incidence(self):
        """Sparse element-by-vertex incidence matrix (CSR, 0/1 entries)."""
        m = self.n_elements
        rows = np.repeat(np.arange(m), 3)
        data = np.ones(3 * m)
        return sp.csr_matrix((data, (rows, self.triangles.reshape(-1))),
                             shape=(m, self.n_vertices))

    @cached_property
    def patch_matrix(self):
        """Sparse boolean matrix with ``P[K, T] = 1`` iff ``T`` touches ``K``."""
        inc = self.incidence
        p = (inc @ inc.T).tocsr()
        p.data[:] = 1.0
        p.sort_indices()
        return p

    @cached_property
    def patch_areas(self):
        return self.patch_matrix @ self.areas

    @cached_property
    def locator(self):
        return PointLocator(self)

    @cached_property
    def geometry(self):
        """Batched :class:`ElementGeometry` for every element."""
        return _geometry(self.vertices[self.triangles])


@dataclass(frozen=True)
class ElementGeometry:
    """Anisotropic description of one element (or a batch, leading axis = element).

    ``jacobian = deformation @ rotation`` (polar decomposition) and
    ``deformation = R^T diag(lambda1, lambda2) R`` with ``R^T = [r1, r2]``.
    """

    jacobian: np.ndarray
    shift: np.ndarray
    deformation: np.ndarray
    rotation: np.ndarray
    lambda1: np.ndarray
    lambda2: np.ndarray
    r1: np.ndarray
    r2: np.ndarray

    @property
    def stretching(self):
        return self.lambda1 / self.lambda2

    def __getitem__(self, k):
        return ElementGeometry(*(getattr(self, f)[k] for f in self.__dataclass_fields__))


def _geometry(p):
    """Element geometry from vertex coordinates of shape (M, 3, 2)."""
    e = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=-1)
    jac = e @ _REF_EDGES_INV
    shift = p[:, 0] - jac @ REF_VERTICES[0]
    mmt = jac @ np.swapaxes(jac, -1, -2)
    mu1, mu2, r1, r2 = sym_eig(np.stack([mmt[:, 0, 0], mmt[:, 0, 1], mmt[:, 1, 1]], axis=-1))
    if np.any(mu2 <= 0):
        raise ValueError("degenerate element: zero area")
    l1, l2 = np.sqrt(mu1), np.sqrt(mu2)
    outer1 = r1[:, :, None] * r1[:, None, :]
    outer2 = r2[:, :, None] * r2[:, None, :]
    b = l1[:, None, None] * outer1 + l2[:, None, None] * outer2
    binv = outer1 / l1[:, None, None] + outer2 / l2[:, None, None]
    z = binv @ jac
    return ElementGeometry(jac, shift, b, z, l1, l2, r1, r2)


def element_geometry(mesh, k):
    """Affine map, polar/spectral decomposition and stretching of element ``k``."""
    if not 0 <= k < mesh.n_elements:
        raise IndexError(f"element index {k} out of range")
    return mesh.geometry[k]


def triangle_geometry(points):
    """:class:`ElementGeometry` of a single triangle given its three vertices."""
    p = np.asarray(points, dtype=float).reshape(1, 3, 2)
    return _geometry(p)[0]


def build_uniform_mesh(width, height, spacing=1.0):
    """Structured mesh of ``[0, width] x [0, height]``: squares cut along one diagonal.

    ``spacing`` is adjusted per axis to the nearest value dividing the extent.
    """
    if not spacing > 0:
        raise ValueError("spacing must be > 0")
    nx = max(1, int(round(width / spacing)))
    ny = max(1, int(round(height / spacing)))
    xs = np.linspace(0.0, width, nx + 1)
    ys = np.linspace(0.0, height, ny + 1)
    gx, gy = np.meshgrid(xs, ys)
    vertices = np.column_stack([gx.ravel(), gy.ravel()])
    j, i = np.meshgrid(np.arange(ny), np.arange(nx), indexing="ij")
    v00 = (j * (nx + 1) + i).ravel()
    v10 = v00 + 1
    v01 = v00 + nx + 1
    v11 = v01 + 1
    tris = np.empty((2 * nx * ny, 3), dtype=np.int64)
    tris[0::2] = np.column_stack([v00, v10, v11])
    tris[1::2] = np.column_stack([v00, v11, v01])
    return TriMesh(vertices, tris, width, height)


@dataclass(frozen=True)
class Patch:
    """Elements touching ``K`` (``K`` included) and their total area."""

    elements: np.ndarray
    area: float


def patch(mesh, k):
    pm = mesh.patch_matrix
    elems = pm.indices[pm.indptr[k]:pm.indptr[k + 1]].copy()
    return Patch(elems, float(mesh.areas[elems].sum()))


@dataclass(frozen=True)
class MeshStats:
    n_el: int
    h_min: float
    h_max: float
    max_stretching: float


def mesh_stats(mesh):
    lengths = mesh.edge_lengths
    return MeshStats(mesh.n_elements, float(lengths.min()), float(lengths.max()),
                     float(mesh.geometry.stretching.max()))


# --------------------------------------------------------------------------
# point location

class PointLocator:
    """Uniform bucket grid over the domain for batched point location."""

    def __init__(self, mesh):
        self.mesh = mesh
        p = mesh.vertices[mesh.triangles]
        w, h = mesh.width, mesh.height
        m = mesh.n_elements
        cell = np.sqrt(w * h / m)
        self.nx = int(min(max(1, np.ceil(w / cell)), 4096))
        self.ny = int(min(max(1, np.ceil(h / cell)), 4096))
        self.cx = w / self.nx
        self.cy = h / self.ny
        pad = 1e-9 * max(w, h)
        lo = p.min(axis=1) - pad
        hi = p.max(axis=1) + pad
        i0 = np.clip(np.floor(lo[:, 0] / self.cx), 0, self.nx - 1).astype(np.int64)
        i1 = np.clip(np.floor(hi[:, 0] / self.cx), 0, self.nx - 1).astype(np.int64)
        j0 = np.clip(np.floor(lo[:, 1] / self.cy), 0, self.ny - 1).astype(np.int64)
        j1 = np.clip(np.floor(hi[:, 1] / self.cy), 0, self.ny - 1).astype(np.int64)
        wi = i1 - i0 + 1
        counts = wi * (j1 - j0 + 1)
        tri = np.repeat(np.arange(m), counts)
        offs = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
        wi_r = np.repeat(wi, counts)
        ci = np.repeat(i0, counts) + offs % wi_r
        cj = np.repeat(j0, counts) + offs // wi_r
        cid = cj * self.nx + ci
        order = np.argsort(cid, kind="stable")
        self.cell_tris = tri[order]
        self.cell_start = np.searchsorted(cid[order], np.arange(self.nx * self.ny + 1))
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        self.origin = p[:, 0]
        self.inv = np.stack([np.stack([e2[:, 1], -e2[:, 0]], -1),
                             np.stack([-e1[:, 1], e1[:, 0]], -1)], axis=1) / det[:, None, None]

    def _bary(self, tri, pts):
        d = pts - self.origin[tri]
        l1 = self.inv[tri, 0, 0] * d[:, 0] + self.inv[tri, 0, 1] * d[:, 1]
        l2 = self.inv[tri, 1, 0] * d[:, 0] + self.inv[tri, 1, 1] * d[:, 1]
        return np.column_stack([1.0 - l1 - l2, l1, l2])

    def locate(self, pts):
        """Containing element and barycentric coordinates for each point.

        Points on shared edges or vertices go to the lowest element index.
        """
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        n = len(pts)
        w, h = self.mesh.width, self.mesh.height
        tol = 1e-12 * max(w, h)
        out = ((pts[:, 0] < -tol) | (pts[:, 0] > w + tol) | (pts[:, 1] < -tol)
               | (pts[:, 1] > h + tol) | ~np.isfinite(pts).all(axis=1))
        if np.any(out):
            bad = pts[np.flatnonzero(out)[0]]
            raise ValueError(f"point {tuple(bad)} lies outside the mesh domain")
        ci = np.clip(np.floor(pts[:, 0] / self.cx), 0, self.nx - 1).astype(np.int64)
        cj = np.clip(np.floor(pts[:, 1] / self.cy), 0, self.ny - 1).astype(np.int64)
        cid = cj * self.nx + ci
        start = self.cell_start[cid]
        cnt = self.cell_start[cid + 1] - start
        q = np.repeat(np.arange(n), cnt)
        offs = np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt)
        cand = self.cell_tris[np.repeat(start, cnt) + offs]
        bary = self._bary(cand, pts[q])
        minb = bary.min(axis=1)
        inside = minb >= -BARY_TOL
        secondary = np.where(inside, cand.astype(float), -minb)
        order = np.lexsort((secondary, ~inside, q))
        qs = q[order]
        first = np.ones(len(qs), dtype=bool)
        first[1:] = qs[1:] != qs[:-1]
        sel = order[first]
        elem = np.full(n, -1, dtype=np.int64)
        coords = np.zeros((n, 3))
        elem[q[sel]] = cand[sel]
        coords[q[sel]] = bary[sel]
        good = np.zeros(n, dtype=bool)
        good[q[sel]] = inside[sel]
        for i in np.flatnonzero(~good):
            elem[i], coords[i] = self._brute(pts[i])
        coords = np.clip(coords, 0.0, None)
        coords /= coords.sum(axis=1, keepdims=True)
        return elem, coords

    def _brute(self, pt):
        tri = np.arange(self.mesh.n_elements)
        bary = self._bary(tri, np.broadcast_to(pt, (len(tri), 2)))
        minb = bary.min(axis=1)
        inside = np.flatnonzero(minb >= -BARY_TOL)
        if len(inside):
            k = inside[0]
        else:
            k = int(np.argmax(minb))
            if minb[k] < -1e-7:
                raise ValueError(f"point {tuple(pt)} is not covered by the mesh")
        return k, bary[k]


def locate_point(mesh, p):
    """Element index and barycentric coordinates of a single point."""
    elem, bary = mesh.locator.locate(np.asarray(p, dtype=float).reshape(1, 2))
    return int(elem[0]), bary[0]


def locate_points(mesh, pts):
    return mesh.locator.locate(pts)


def locate_brute_force(mesh, p):
    """Exhaustive scan over every element; reference for :class:`PointLocator`."""
    p = np.asarray(p, dtype=float)
    verts = mesh.vertices[mesh.triangles]
    e = np.stack([verts[:, 1] - verts[:, 0], verts[:, 2] - verts[:, 0]], axis=-1)
    l12 = np.linalg.solve(e, (p - verts[:, 0])[..., None])[..., 0]
    bary = np.column_stack([1.0 - l12.sum(axis=1), l12])
    hits = np.flatnonzero(bary.min(axis=1) >= -BARY_TOL)
    if len(hits) == 0:
        raise ValueError("point outside mesh")
    return int(hits[0]), bary[hits[0]]


def check_mesh(mesh, rel_tol=1e-8):
    """Return a list of violated :class:`TriMesh` validity conditions (empty if valid).

    Checks positive orientation, edge manifoldness, that boundary edges lie on
    the domain rectangle, and that the element areas sum to ``width * height``.
    """
    problems = []
    if np.any(mesh.areas <= 0):
        problems.append("non-positive element area")
    try:
        edges, bnd = mesh.edges, mesh.boundary_edges
    except ValueError as exc:
        return problems + [str(exc)]
    v = mesh.vertices
    w, h = mesh.width, mesh.height
    be = v[edges[bnd]]
    tol = 1e-9 * max(w, h)
    on_side = ((np.abs(be[:, :, 0]) <= tol).all(1) | (np.abs(be[:, :, 0] - w) <= tol).all(1)
               | (np.abs(be[:, :, 1]) <= tol).all(1) | (np.abs(be[:, :, 1] - h) <= tol).all(1))
    if not on_side.all():
        problems.append(f"{int((~on_side).sum())} boundary edges off the domain boundary")
    total = mesh.areas.sum()
    if abs(total - w * h) > rel_tol * w * h:
        problems.append(f"area {total!r} differs from domain area {w * h!r}")
    if v[:, 0].min() < -tol or v[:, 0].max() > w + tol or v[:, 1].min() < -tol or v[:, 1].max() > h + tol:
        problems.append("vertex outside the domain")
    return problems
