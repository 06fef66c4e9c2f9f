"""Closed-form helpers for batches of 2x2 symmetric tensors.

A symmetric tensor ``[[a, b], [b, c]]`` is stored as the last axis
``(a, b, c)`` of an array of shape ``(..., 3)``.
"""

import numpy as np


def sym_eig(t):
    """Eigen-decomposition of symmetric 2x2 tensors.

    Parameters
    ----------
    t : array_like, shape (..., 3)
        Packed tensors ``(a, b, c)``.

    Returns
    -------
    l1, l2 : ndarray
        Eigenvalues with ``l1 >= l2``.
    v1, v2 : ndarray, shape (..., 2)
        Orthonormal eigenvectors; ``v2`` is ``v1`` rotated by +90 degrees.
    """
    t = np.asarray(t, dtype=float)
    a, b, c = t[..., 0], t[..., 1], t[..., 2]
    m = 0.5 * (a + c)
    r = np.hypot(0.5 * (a - c), b)
    l1 = m + r
    det = a * c - b * b
    # m - r cancels badly for strongly anisotropic tensors; det / l1 does not
    with np.errstate(divide="ignore", invalid="ignore"):
        l2 = np.where(np.abs(l1) > 0, det / np.where(l1 == 0, 1.0, l1), m - r)
    l2 = np.minimum(l2, l1)
    theta = 0.5 * np.arctan2(2.0 * b, a - c)
    ct, st = np.cos(theta), np.sin(theta)
    v1 = np.stack([ct, st], axis=-1)
    v2 = np.stack([-st, ct], axis=-1)
    return l1, l2, v1, v2


def sym_from_eig(l1, l2, v1):
    """Assemble packed tensors ``l1 v1 v1^T + l2 v2 v2^T`` with ``v2 = rot90(v1)``."""
    l1 = np.asarray(l1, dtype=float)
    l2 = np.asarray(l2, dtype=float)
    v1 = np.asarray(v1, dtype=float)
    x, y = v1[..., 0], v1[..., 1]
    a = l1 * x * x + l2 * y * y
    b = (l1 - l2) * x * y
    c = l1 * y * y + l2 * x * x
    return np.stack([a, b, c], axis=-1)


def sym_log(t):
    l1, l2, v1, _ = sym_eig(t)
    return sym_from_eig(np.log(l1), np.log(l2), v1)


def sym_exp(t):
    l1, l2, v1, _ = sym_eig(t)
    return sym_from_eig(np.exp(l1), np.exp(l2), v1)


def sym_to_matrix(t):
    t = np.asarray(t, dtype=float)
    out = np.empty(t.shape[:-1] + (2, 2))
    out[..., 0, 0] = t[..., 0]
    out[..., 0, 1] = out[..., 1, 0] = t[..., 1]
    out[..., 1, 1] = t[..., 2]
    return out


def matrix_to_sym(m):
    m = np.asarray(m, dtype=float)
    return np.stack([m[..., 0, 0], 0.5 * (m[..., 0, 1] + m[..., 1, 0]), m[..., 1, 1]], axis=-1)


def quad_form(t, v):
    """``v^T T v`` for packed tensors ``t`` and vectors ``v`` (broadcasting)."""
    t = np.asarray(t, dtype=float)
    v = np.asarray(v, dtype=float)
    x, y = v[..., 0], v[..., 1]
    return t[..., 0] * x * x + 2.0 * t[..., 1] * x * y + t[..., 2] * y * y


def stretching(t):
    """``sqrt(eig_max / eig_min)``: aspect ratio of the unit ellipse of a metric."""
    l1, l2, _, _ = sym_eig(t)
    with np.errstate(divide="ignore"):
        return np.sqrt(l1 / l2)
