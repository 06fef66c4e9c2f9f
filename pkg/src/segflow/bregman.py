"""Split Bregman iteration for two-phase level-set segmentation on a fixed mesh."""

from dataclasses import dataclass, field, fields, replace
import time

import numpy as np

from . import energy
from .fem import assemble_mass, assemble_stiffness, gradient_p0, step_a_solve
from .imageio import edge_detector

MODELS = ("bayes", "rsfe")
STOP_RULES = ("levelset", "delta_p")


@dataclass(frozen=True)
class SolverConfig:
    """Parameters of the split Bregman solver.

    ``mu=None`` resolves to the model default: 1 for ``bayes`` and 1e-3 for
    ``rsfe``. ``dt`` is the artificial time step of the level-set evolution in
    pixel-length squared.
    """

    model: str = "bayes"
    nu: float = 1.0
    mu: float | None = None
    beta: float = 100.0
    eps: float = 1e-2
    alpha: float = 1.0
    tau: float = 1.0
    zeta: float = 1e-8
    sigma: float = 8.0
    mu_i: float = 1e-5
    mu_e: float = 1e-5
    dt: float = 0.05
    eta_star: float = 0.5e-2
    max_iters: int = 200
    stop_rule: str = "levelset"
    rsfe_source_sum: bool = False

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"model: expected one of {MODELS}, got {self.model!r}")
        if self.mu is None:
            object.__setattr__(self, "mu", 1.0 if self.model == "bayes" else 1e-3)
        for name in ("nu", "mu", "beta", "eps", "alpha", "tau", "zeta", "sigma", "mu_i", "mu_e", "dt"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not np.isfinite(v) or v <= 0:
                raise ValueError(f"{name}: must be a finite number > 0, got {v!r}")
        if not 0 < self.eta_star < 1:
            raise ValueError(f"eta_star: must lie in (0, 1), got {self.eta_star!r}")
        if isinstance(self.max_iters, bool) or not isinstance(self.max_iters, int) or self.max_iters < 1:
            raise ValueError(f"max_iters: must be an integer >= 1, got {self.max_iters!r}")
        if self.stop_rule not in STOP_RULES:
            raise ValueError(f"stop_rule: expected one of {STOP_RULES}, got {self.stop_rule!r}")
        if self.stop_rule == "delta_p" and self.model != "bayes":
            raise ValueError("stop_rule: 'delta_p' is only defined for the bayes model")

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def with_(self, **changes):
        return replace(self, **changes)


@dataclass
class IterationRecord:
    k: int
    residual: float
    energy: float
    n_el: int
    seconds: float = 0.0
    adapted: bool = False


@dataclass
class BregmanState:
    """Solver state; ``phi`` is P1 on ``mesh``, ``d`` and ``b`` are P0 on ``mesh``."""

    mesh: object
    phi: np.ndarray
    d: np.ndarray
    b: np.ndarray
    k: int = 0
    history: list = field(default_factory=list)
    converged: bool = False
    meshes: list = field(default_factory=list)
    delta_p: np.ndarray | None = None
    pdfs: tuple | None = None
    adapt_seconds: list = field(default_factory=list)
    rsfe: object = None

    @property
    def n_adapt(self):
        return sum(r.adapted for r in self.history)


def shrink(f, gamma):
    """Vector soft-thresholding ``f / |f| max(|f| - gamma, 0)`` with ``shrink(0) = 0``.

    ``f`` has shape ``(..., 2)``; ``gamma`` broadcasts against ``f[..., 0]``.
    """
    f = np.asarray(f, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma < 0):
        raise ValueError("gamma must be >= 0")
    norm = np.hypot(f[..., 0], f[..., 1])
    scale = np.maximum(norm - gamma, 0.0) / np.where(norm > 0, norm, 1.0)
    return f * scale[..., None]


def step_b(mesh, phi, b, g, nu, mu):
    """Shrinkage update ``d = shrink(b + grad phi, nu g / mu)`` with ``g`` at centroids.

    ``g`` is a callable sampler or per-element values.
    """
    g_elem = energy._g_elements(mesh, g)
    return shrink(np.asarray(b) + gradient_p0(mesh, phi), (nu / mu) * g_elem)


def step_c(mesh, b, phi, d):
    """Bregman update ``b + grad phi - d``."""
    return np.asarray(b) + gradient_p0(mesh, phi) - np.asarray(d)


def mass_norm(mass, v):
    return float(np.sqrt(max(v @ (mass @ v), 0.0)))


def _strict_stop(diff, ref, eta):
    # a change of exactly eta * ref keeps iterating
    if ref == 0.0:
        return diff == 0.0
    return diff < eta * ref


def stopping_check(state, phi_new, cfg, delta_new=None, mass=None):
    """``True`` when the iteration should stop.

    The level-set rule compares mass-weighted L2 norms on ``state.mesh``; the
    ``delta_p`` rule compares pixel-grid L2 norms of successive likelihood
    discrepancies. Both stop only when the change is strictly below
    ``eta_star`` times the reference.
    """
    if cfg.stop_rule == "delta_p":
        if delta_new is None or state.delta_p is None:
            return False
        diff = float(np.linalg.norm(delta_new - state.delta_p))
        ref = float(np.linalg.norm(state.delta_p))
        return _strict_stop(diff, ref, cfg.eta_star)
    mass = assemble_mass(state.mesh) if mass is None else mass
    diff = mass_norm(mass, np.asarray(phi_new) - state.phi)
    ref = mass_norm(mass, state.phi)
    return _strict_stop(diff, ref, cfg.eta_star)


def dice(a, b):
    """Dice coefficient ``2 |A n B| / (|A| + |B|)`` of two boolean masks (1 if both empty)."""
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    total = a.sum() + b.sum()
    return 1.0 if total == 0 else 2.0 * float(np.logical_and(a, b).sum()) / float(total)


# --------------------------------------------------------------------------
# initial level sets

def phi_from_shape(mesh, inside, alpha=1.0):
    """``alpha * sign`` of a shape indicator evaluated at the mesh vertices.

    ``inside(x, y)`` returns a boolean array; inside maps to ``+alpha``.
    """
    x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
    return np.where(np.asarray(inside(x, y), dtype=bool), alpha, -alpha).astype(float)


def circle_phi(mesh, cx, cy, r, alpha=1.0):
    return phi_from_shape(mesh, lambda x, y: (x - cx) ** 2 + (y - cy) ** 2 < r * r, alpha)


def rect_phi(mesh, x0, y0, x1, y1, alpha=1.0):
    return phi_from_shape(mesh, lambda x, y: (x > x0) & (x < x1) & (y > y0) & (y < y1), alpha)


def mask_phi(mesh, mask, alpha=1.0):
    """Initial level set from a pixel mask (nearest pixel of each vertex)."""
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape

    def inside(x, y):
        i = np.clip(np.floor(x).astype(int), 0, w - 1)
        j = np.clip(np.floor(y).astype(int), 0, h - 1)
        return mask[j, i]

    return phi_from_shape(mesh, inside, alpha)


# --------------------------------------------------------------------------
# main loop

class _Model:
    """Source term, energy and stopping quantity of the chosen data model."""

    def __init__(self, cfg, img):
        self.cfg = cfg
        self.img = img
        self.g = edge_detector(img, cfg.beta)
        self.labels = None
        self.moved = False

    def update(self, mesh, phi):
        """Recompute region statistics from ``phi``; returns per-element source."""
        cfg = self.cfg
        labels = energy.classify_pixels(mesh, phi, self.img)
        if getattr(self, "labels", None) is not None and not np.array_equal(labels, self.labels):
            self.moved = True
        self.labels = labels
        if cfg.model == "bayes":
            self.pdf_i = energy.estimate_pdf(self.img, labels, energy.INTERIOR, cfg.tau, cfg.zeta)
            self.pdf_e = energy.estimate_pdf(self.img, labels, energy.EXTERIOR, cfg.tau, cfg.zeta)
            grid = energy.source_bayes(self.img, self.pdf_i, self.pdf_e)
        else:
            self.fields = energy.rsfe_fields(self.img, labels, cfg.sigma)
            grid = energy.source_rsfe(self.fields, cfg.mu_i, cfg.mu_e, cfg.rsfe_source_sum)
        return energy.element_values(mesh, grid)

    def delta_p(self):
        return energy.delta_p(self.img, self.pdf_i, self.pdf_e)

    def energy(self, mesh, phi):
        cfg = self.cfg
        if cfg.model == "bayes":
            return energy.functional_bayes(mesh, phi, self.img, self.pdf_i, self.pdf_e, cfg.nu, self.g)
        return energy.functional_rsfe(mesh, phi, self.img, self.fields, cfg.mu_i, cfg.mu_e,
                                      cfg.nu, self.g)


def run_split_bregman(cfg, img, mesh, phi0, adapter=None, callback=None):
    """Split Bregman segmentation of ``img`` starting from the P1 level set ``phi0``.

    Parameters
    ----------
    cfg : SolverConfig
    img : GreyImage
    mesh : TriMesh
        Must cover the image domain.
    phi0 : (N,) array
        Initial level set with values in ``[-alpha, alpha]`` changing sign.
    adapter : object, optional
        Called as ``adapter(k, mesh, phi, d, b)`` after Step A of every
        iteration; returns ``None`` or a new ``(mesh, phi, d, b)``.
    callback : callable, optional
        Receives the state after every iteration.

    Returns
    -------
    BregmanState
        ``converged`` is ``False`` when ``max_iters`` was reached.
    """
    phi0 = np.asarray(phi0, dtype=float)
    if phi0.shape != (mesh.n_vertices,):
        raise ValueError("phi0 must hold one value per mesh vertex")
    if np.any(np.abs(phi0) > cfg.alpha):
        raise ValueError("phi0 must take values in [-alpha, alpha]")
    if not (phi0.max() > 0 and phi0.min() < 0):
        raise ValueError("phi0 must change sign (non-trivial initial contour)")
    if mesh.width < img.width or mesh.height < img.height:
        raise ValueError("mesh does not cover the image domain")

    model = _Model(cfg, img)
    state = BregmanState(mesh, phi0.copy(), gradient_p0(mesh, phi0), np.zeros((mesh.n_elements, 2)),
                         meshes=[mesh])
    s = model.update(mesh, state.phi)
    if cfg.stop_rule == "delta_p":
        state.delta_p = model.delta_p()
    mats = (assemble_mass(mesh), assemble_stiffness(mesh))

    for k in range(cfg.max_iters):
        t0 = time.perf_counter()
        mesh = state.mesh
        phi_new = step_a_solve(mesh, state.phi, s, state.d, state.b, cfg.mu, cfg.dt,
                               alpha=cfg.alpha, matrices=mats)
        diff = mass_norm(mats[0], phi_new - state.phi)
        ref = mass_norm(mats[0], state.phi)
        residual = diff / ref if ref > 0 else (0.0 if diff == 0 else np.inf)
        stop = _strict_stop(diff, ref, cfg.eta_star)

        d, b = state.d, state.b
        adapted = False
        if adapter is not None:
            ta = time.perf_counter()
            out = adapter(k, mesh, phi_new, d, b)
            if out is not None:
                mesh, phi_new, d, b = out
                mats = (assemble_mass(mesh), assemble_stiffness(mesh))
                state.meshes.append(mesh)
                state.adapt_seconds.append(time.perf_counter() - ta)
                adapted = True

        g_elem = energy._g_elements(mesh, model.g)
        d = shrink(b + gradient_p0(mesh, phi_new), (cfg.nu / cfg.mu) * g_elem)
        b = step_c(mesh, b, phi_new, d)
        state.mesh, state.phi, state.d, state.b = mesh, phi_new, d, b
        state.k = k + 1

        s = model.update(mesh, phi_new)
        if cfg.stop_rule == "delta_p":
            dp = model.delta_p()
            diff = float(np.linalg.norm(dp - state.delta_p))
            ref = float(np.linalg.norm(state.delta_p))
            residual = diff / ref if ref > 0 else (0.0 if diff == 0 else np.inf)
            # delta_p only changes when pixels change sign; it carries no
            # information until the contour has moved at least once
            stop = model.moved and _strict_stop(diff, ref, cfg.eta_star)
            state.delta_p = dp
        e = model.energy(mesh, phi_new)
        state.pdfs = (model.pdf_i, model.pdf_e) if cfg.model == "bayes" else None
        state.history.append(IterationRecord(k, float(residual), e, mesh.n_elements,
                                             time.perf_counter() - t0, adapted))
        if callback is not None:
            callback(state)
        if stop:
            state.converged = True
            break
    state.rsfe = getattr(model, "fields", None)
    return state
