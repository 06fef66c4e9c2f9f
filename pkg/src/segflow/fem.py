"""P1 finite elements: assembly, the implicit level-set update and field transfer.

Scalar P1 fields are ``(n_vertices,)`` arrays and piecewise-constant vector
fields are ``(n_elements, 2)`` arrays, both tied implicitly to a :class:`TriMesh`.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


class ConvergenceError(RuntimeError):
    """Raised when an iterative solve does not reach its tolerance."""

    def __init__(self, message, iterations, residual):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


def _assemble(mesh, local):
    """Scatter per-element ``(M, 3, 3)`` matrices into a CSR matrix."""
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).reshape(-1)
    cols = np.tile(t, (1, 3)).reshape(-1)
    n = mesh.n_vertices
    a = sp.coo_matrix((local.reshape(-1), (rows, cols)), shape=(n, n)).tocsr()
    a.sum_duplicates()
    a.sort_indices()
    return a


_MASS_REF = (np.ones((3, 3)) + np.eye(3)) / 12.0


def assemble_mass(mesh):
    """Consistent P1 mass matrix, element blocks ``|K|/12 [[2,1,1],[1,2,1],[1,1,2]]``."""
    return _assemble(mesh, mesh.areas[:, None, None] * _MASS_REF)


def assemble_stiffness(mesh):
    """P1 stiffness matrix ``int grad(phi_i) . grad(phi_j)`` (Neumann, semi-definite)."""
    g = mesh.basis_gradients
    local = mesh.areas[:, None, None] * (g @ np.swapaxes(g, 1, 2))
    return _assemble(mesh, local)


def assemble_load(mesh, q):
    """Load vector ``int phi_i q`` for piecewise-constant ``q`` (one value per element)."""
    q = np.asarray(q, dtype=float)
    contrib = np.repeat((mesh.areas * q / 3.0)[:, None], 3, axis=1)
    return np.bincount(mesh.triangles.reshape(-1), contrib.reshape(-1), minlength=mesh.n_vertices)


def gradient_p0(mesh, phi):
    """Elementwise gradient of the P1 field ``phi``, shape ``(M, 2)``."""
    v = np.asarray(phi, dtype=float)[mesh.triangles]
    g = mesh.basis_gradients
    # basis gradients sum to zero, so differences make constants exact
    return (g[:, 1] * (v[:, 1] - v[:, 0])[:, None]) + (g[:, 2] * (v[:, 2] - v[:, 0])[:, None])


def divergence_rhs(mesh, w):
    """Weak divergence ``-sum_K |K| grad(phi_i)|_K . w_K`` of a P0 vector field."""
    w = np.asarray(w, dtype=float)
    contrib = -mesh.areas[:, None] * np.einsum("kij,kj->ki", mesh.basis_gradients, w)
    return np.bincount(mesh.triangles.reshape(-1), contrib.reshape(-1), minlength=mesh.n_vertices)


def solve_spd(a, rhs, tol=1e-8, x0=None, maxiter=None):
    """Jacobi-preconditioned conjugate gradients.

    Returns ``x`` with ``||a x - rhs|| <= tol ||rhs||``; raises
    :class:`ConvergenceError` after ``maxiter`` (default ``10 n``) iterations.
    """
    rhs = np.asarray(rhs, dtype=float)
    n = len(rhs)
    maxiter = 10 * n if maxiter is None else maxiter
    bnorm = np.linalg.norm(rhs)
    if bnorm == 0.0:
        return np.zeros(n)
    diag = a.diagonal()
    if np.any(diag <= 0):
        raise ValueError("matrix diagonal must be strictly positive")
    dinv = 1.0 / diag
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = rhs - a @ x
    target = tol * bnorm
    rnorm = np.linalg.norm(r)
    if rnorm <= target:
        return x
    z = dinv * r
    p = z.copy()
    rz = r @ z
    for it in range(1, maxiter + 1):
        ap = a @ p
        alpha = rz / (p @ ap)
        x += alpha * p
        r -= alpha * ap
        rnorm = np.linalg.norm(r)
        if rnorm <= target:
            return x
        z = dinv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise ConvergenceError(f"CG did not converge in {maxiter} iterations "
                           f"(relative residual {rnorm / bnorm:.3e})", maxiter, rnorm / bnorm)


@dataclass
class StepAInfo:
    inner_steps: int
    relative_change: float


def step_a_solve(mesh, phi, s, d, b, mu, dt, alpha=1.0, max_inner=5, inner_tol=1e-3,
                 matrices=None, info=None):
    """Backward-Euler march of the level-set evolution towards its steady state.

    Solves ``(M + dt A) phi_new = M phi_old + dt [load(-s / mu) + div_rhs(b - d)]``
    until the relative change drops to ``inner_tol`` or ``max_inner`` steps are
    taken, then clamps to ``[-alpha, alpha]``.

    Parameters
    ----------
    s : (M,) array
        Source term per element.
    d, b : (M, 2) arrays
        Split variable and Bregman vector.
    matrices : tuple, optional
        Precomputed ``(mass, stiffness)`` for ``mesh``.
    info : StepAInfo, optional
        Filled with the number of inner steps and the final relative change.
    """
    if not mu > 0 or not dt > 0:
        raise ValueError("mu and dt must be > 0")
    mass, stiff = matrices if matrices is not None else (assemble_mass(mesh), assemble_stiffness(mesh))
    system = (mass + dt * stiff).tocsr()
    forcing = dt * (assemble_load(mesh, -np.asarray(s, dtype=float) / mu)
                    + divergence_rhs(mesh, np.asarray(b) - np.asarray(d)))
    cur = np.array(phi, dtype=float)
    change = np.inf
    steps = 0
    total_area = mass.sum()
    for steps in range(1, max_inner + 1):
        rhs = mass @ cur + forcing
        new = solve_spd(system, rhs, x0=cur)
        # 1'(M + dt A) = 1'M, so a constant shift restores the discrete
        # integral balance that the CG tolerance leaves slightly off
        new += (rhs.sum() - (mass @ new).sum()) / total_area
        ref = np.linalg.norm(cur)
        diff = np.linalg.norm(new - cur)
        change = diff / ref if ref > 0 else (0.0 if diff == 0 else np.inf)
        cur = new
        if change <= inner_tol:
            break
    if info is not None:
        info.inner_steps = steps
        info.relative_change = float(change)
    return np.clip(cur, -alpha, alpha)


def interpolate_p1(mesh, phi, pts):
    """Evaluate the P1 field ``phi`` at points ``pts`` of shape ``(n, 2)``."""
    elem, bary = mesh.locator.locate(pts)
    return np.einsum("ni,ni->n", bary, np.asarray(phi, dtype=float)[mesh.triangles[elem]])


def transfer_p1(src_mesh, phi, dst_mesh):
    """Interpolate a P1 field onto the vertices of ``dst_mesh``."""
    return interpolate_p1(src_mesh, phi, dst_mesh.vertices)


def transfer_p0(src_mesh, w, dst_mesh):
    """Piecewise-constant transfer: each destination element takes the value of the
    source element containing its centroid."""
    elem, _ = src_mesh.locator.locate(dst_mesh.centroids)
    return np.asarray(w)[elem].copy()


transfer_field = transfer_p1
