"""Anisotropic recovery-based error estimator for the P1 level-set function."""

from dataclasses import dataclass

import numpy as np

from .._tensor import quad_form, sym_to_matrix
from ..fem import gradient_p0


def _patch_pairs(mesh):
    pm = mesh.patch_matrix
    rows = np.repeat(np.arange(mesh.n_elements), np.diff(pm.indptr))
    return rows, pm.indices


def recover_gradient(mesh, phi, grad=None):
    """Area-weighted patch average of the elementwise gradient, shape ``(M, 2)``."""
    grad = gradient_p0(mesh, phi) if grad is None else grad
    weighted = mesh.areas[:, None] * grad
    return (mesh.patch_matrix @ weighted) / mesh.patch_areas[:, None]


def compute_G_all(mesh, phi, grad=None, recovered=None):
    """Packed ``(a, b, c)`` patch matrices ``sum_T |T| (P - grad_T)(P - grad_T)^T`` for every element.

    Each term is formed from the difference directly (no expansion of the
    square), so ``G`` vanishes to roundoff when the gradient is patch-constant.
    """
    grad = gradient_p0(mesh, phi) if grad is None else grad
    rec = recover_gradient(mesh, phi, grad) if recovered is None else recovered
    rows, cols = _patch_pairs(mesh)
    diff = rec[rows] - grad[cols]
    w = mesh.areas[cols]
    m = mesh.n_elements
    a = np.bincount(rows, w * diff[:, 0] * diff[:, 0], minlength=m)
    b = np.bincount(rows, w * diff[:, 0] * diff[:, 1], minlength=m)
    c = np.bincount(rows, w * diff[:, 1] * diff[:, 1], minlength=m)
    return np.column_stack([a, b, c])


def compute_G(mesh, phi, k):
    """Patch matrix ``G`` of element ``k`` as a 2x2 array."""
    pm = mesh.patch_matrix
    elems = pm.indices[pm.indptr[k]:pm.indptr[k + 1]]
    grad = gradient_p0(mesh, phi)
    area = mesh.areas[elems]
    rec = (area[:, None] * grad[elems]).sum(axis=0) / area.sum()
    diff = rec - grad[elems]
    return np.einsum("t,ti,tj->ij", area, diff, diff)


def patch_gradient_norm2(mesh, phi, grad=None):
    """Area-weighted patch mean of ``|grad phi|^2``."""
    grad = gradient_p0(mesh, phi) if grad is None else grad
    sq = mesh.areas * np.einsum("ki,ki->k", grad, grad)
    return (mesh.patch_matrix @ sq) / mesh.patch_areas


def local_estimate(geom, G, patch=None):
    """``eta_K^2 = (lambda1^2 r1'G r1 + lambda2^2 r2'G r2) / (lambda1 lambda2)``.

    ``geom`` may be a single :class:`ElementGeometry` or a batch; ``G`` is a
    2x2 matrix or packed ``(..., 3)``. ``patch`` is accepted for signature
    symmetry with :func:`local_estimate_rescaled`.
    """
    g = _packed(G)
    l1, l2 = geom.lambda1, geom.lambda2
    return (l1 * l1 * quad_form(g, geom.r1) + l2 * l2 * quad_form(g, geom.r2)) / (l1 * l2)


def local_estimate_rescaled(geom, G, patch_area):
    """Same quantity written as ``l1 l2 |hat Delta| [s r1'(G/|Delta|)r1 + r2'(G/|Delta|)r2 / s]``.

    The pulled-back patch area is ``|hat Delta| = |Delta| / (l1 l2)``.
    """
    patch_area = np.asarray(patch_area, dtype=float)
    g = _packed(G) / patch_area[..., None]
    l1, l2 = geom.lambda1, geom.lambda2
    s = l1 / l2
    ref_patch = patch_area / (l1 * l2)
    return l1 * l2 * ref_patch * (s * quad_form(g, geom.r1) + quad_form(g, geom.r2) / s)


def _packed(G):
    G = np.asarray(G, dtype=float)
    if G.shape[-2:] == (2, 2):
        return np.stack([G[..., 0, 0], 0.5 * (G[..., 0, 1] + G[..., 1, 0]), G[..., 1, 1]], axis=-1)
    return G


@dataclass(frozen=True, eq=False)
class EstimateReport:
    eta2_local: np.ndarray
    eta2: float
    G: np.ndarray
    grad_norm2: np.ndarray

    def G_matrix(self, k):
        return sym_to_matrix(self.G[k])


def estimate(mesh, phi):
    """Local and global estimator together with the patch matrices."""
    grad = gradient_p0(mesh, phi)
    G = compute_G_all(mesh, phi, grad)
    eta2 = local_estimate(mesh.geometry, G)
    return EstimateReport(eta2, float(eta2.sum()), G, patch_gradient_norm2(mesh, phi, grad))
