"""Optimal anisotropic metric, relaxation and element/vertex metric conversions.

Metrics are stored packed as ``(a, b, c)`` for ``[[a, b], [b, c]]``. An element
metric ``R^T diag(lambda1^-2, lambda2^-2) R`` measures the reference-scaled
element of semi-axes ``lambda1, lambda2``: its edges have metric length
``sqrt(3)`` (the side of the reference triangle).
"""

import numpy as np

from .._tensor import quad_form, sym_eig, sym_exp, sym_from_eig, sym_log
from ..mesh import REF_AREA
from .estimator import compute_G_all, patch_gradient_norm2, recover_gradient
from ..fem import gradient_p0

DEGENERATE_FLOOR = 1e-14


def _eig_normalised(G, patch_area):
    g = np.asarray(G, dtype=float)
    if g.shape[-2:] == (2, 2):
        g = np.stack([g[..., 0, 0], 0.5 * (g[..., 0, 1] + g[..., 1, 0]), g[..., 1, 1]], axis=-1)
    return sym_eig(g / np.asarray(patch_area, dtype=float)[..., None])


def anisotropy_functional(G, patch_area, s, r1, r2):
    """``J = s r1'(G/|Delta|)r1 + r2'(G/|Delta|)r2 / s``."""
    g = np.asarray(G, dtype=float)
    if g.shape[-2:] == (2, 2):
        g = np.stack([g[..., 0, 0], 0.5 * (g[..., 0, 1] + g[..., 1, 0]), g[..., 1, 1]], axis=-1)
    g = g / np.asarray(patch_area, dtype=float)[..., None]
    return s * quad_form(g, r1) + quad_form(g, r2) / s


def optimal_anisotropy(G, patch_area):
    """Minimiser ``(s*, r1*, r2*)`` of :func:`anisotropy_functional`.

    With ``theta1 >= theta2`` the eigenvalues of ``G / |Delta|`` and ``t1, t2``
    their eigenvectors: ``s* = sqrt(theta1 / theta2)``, ``r1* = t2``,
    ``r2* = t1``. A singular ``G`` gives ``s* = inf`` (``s* = 1`` if ``G = 0``).
    """
    th1, th2, t1, t2 = _eig_normalised(G, patch_area)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(th1 <= 0, 1.0, np.sqrt(th1 / np.maximum(th2, 0.0)))
    s = float(s) if np.ndim(s) == 0 else s
    return s, t2, t1


def element_metric_from_eig(l1, l2, r1):
    """Packed ``l1^-2 r1 r1' + l2^-2 r2 r2'``."""
    return sym_from_eig(1.0 / (l1 * l1), 1.0 / (l2 * l2), r1)


def optimal_eigenvalues(G, patch_area, grad_norm2, element_area, tau_star, cap=1000.0,
                        lambda_min=0.0, lambda_max=np.inf):
    """Optimal ``(lambda1*, lambda2*, r1*)`` per element.

    Elements where ``grad_norm2`` or ``theta1`` fall below the degeneracy
    floor get an isotropic size: ``lambda_max`` when finite, otherwise the
    current element size. ``lambda1*`` is limited by ``lambda_max`` and the
    stretching is capped by raising ``lambda2*`` to ``lambda1* / cap``.
    """
    if not tau_star > 0:
        raise ValueError("tau_star must be > 0")
    th1, th2, t1, t2 = _eig_normalised(G, patch_area)
    grad_norm2 = np.asarray(grad_norm2, dtype=float)
    scale = np.sqrt(tau_star * np.maximum(grad_norm2, 0.0) / (2.0 * REF_AREA))
    degenerate = (grad_norm2 < DEGENERATE_FLOOR) | (th1 < DEGENERATE_FLOOR)
    with np.errstate(divide="ignore", invalid="ignore"):
        l1 = np.where(th2 > 0, scale / np.sqrt(np.where(th2 > 0, th2, 1.0)), np.inf)
        l2 = scale / np.sqrt(np.where(degenerate, 1.0, th1))
    l1 = np.minimum(l1, lambda_max)
    l2 = np.minimum(l2, lambda_max)
    # singular G with unbounded lambda_max: the stretching cap sets lambda1
    l1 = np.where(np.isinf(l1), cap * l2, l1)
    l2 = np.maximum(l2, l1 / cap)
    if np.isfinite(lambda_max):
        iso = np.full_like(l1, lambda_max)
    else:
        iso = np.sqrt(np.asarray(element_area, dtype=float) / REF_AREA) * np.ones_like(l1)
    l1 = np.where(degenerate, iso, l1)
    l2 = np.where(degenerate, iso, l2)
    if lambda_min > 0:
        l1 = np.maximum(l1, lambda_min)
        l2 = np.maximum(l2, lambda_min)
        l2 = np.maximum(l2, l1 / cap)
    return l1, l2, t2


def optimal_metric(mesh, phi, tau_star, cap=1000.0, lambda_min=0.0, lambda_max=np.inf):
    """Per-element optimal metric ``R*^T diag(lambda1*^-2, lambda2*^-2) R*`` (packed, ``(M, 3)``)."""
    grad = gradient_p0(mesh, phi)
    rec = recover_gradient(mesh, phi, grad)
    G = compute_G_all(mesh, phi, grad, rec)
    gn2 = patch_gradient_norm2(mesh, phi, grad)
    l1, l2, r1 = optimal_eigenvalues(G, mesh.patch_areas, gn2, mesh.areas, tau_star, cap,
                                     lambda_min, lambda_max)
    return element_metric_from_eig(l1, l2, r1)


def mesh_element_metric(mesh):
    """Metric induced by the current elements (each element is unit in its own metric up to sqrt(3))."""
    g = mesh.geometry
    return element_metric_from_eig(g.lambda1, g.lambda2, g.r1)


def relax_metric(target, old, omega):
    """Convex combination ``omega target + (1 - omega) old``."""
    if not 0.0 <= omega <= 1.0:
        raise ValueError("omega must lie in [0, 1]")
    return omega * np.asarray(target, dtype=float) + (1.0 - omega) * np.asarray(old, dtype=float)


def vertex_metric(mesh, element_metric, log_euclidean=False):
    """Area-weighted average of the element metrics around each vertex.

    The default arithmetic mean of the tensors lets the finest requested size
    dominate; ``log_euclidean=True`` averages matrix logarithms instead, which
    shrinks towards the geometric mean of the sizes.
    """
    element_metric = np.asarray(element_metric, dtype=float)
    src = sym_log(element_metric) if log_euclidean else element_metric
    w = np.repeat(mesh.areas, 3)
    idx = mesh.triangles.reshape(-1)
    n = mesh.n_vertices
    den = np.bincount(idx, w, minlength=n)
    avg = np.column_stack([np.bincount(idx, w * np.repeat(src[:, j], 3), minlength=n)
                           for j in range(3)]) / den[:, None]
    return sym_exp(avg) if log_euclidean else avg


def metric_stretching(metric):
    l1, l2, _, _ = sym_eig(metric)
    return np.sqrt(l1 / l2)


def cap_metric(metric, cap):
    """Raise the smaller eigenvalue so that ``sqrt(eig_max / eig_min) <= cap``."""
    l1, l2, v1, _ = sym_eig(metric)
    l2 = np.maximum(l2, l1 / (cap * cap))
    return sym_from_eig(l1, l2, v1)


class MetricInterpolator:
    """Log-Euclidean P1 interpolation of a vertex metric defined on a background mesh."""

    def __init__(self, mesh, metric):
        self.mesh = mesh
        self.logs = sym_log(metric)

    def __call__(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        elem, bary = self.mesh.locator.locate(pts)
        return sym_exp(np.einsum("ni,nij->nj", bary, self.logs[self.mesh.triangles[elem]]))


def transfer_vertex_metric(src_mesh, metric, dst_mesh):
    """Vertex metric of ``src_mesh`` evaluated at the vertices of ``dst_mesh``."""
    return MetricInterpolator(src_mesh, metric)(dst_mesh.vertices)
