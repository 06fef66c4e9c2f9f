"""Data-fidelity models: Bayesian intensity PDFs and region-scalable local fitting.

Region labels are boolean pixel grids (``True`` = interior, ``phi > 0``).
Source grids are per-pixel arrays; :func:`element_values` turns them into one
value per mesh element.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .fem import gradient_p0

N_LEVELS = 256
INTERIOR = "interior"
EXTERIOR = "exterior"


def heaviside_eps(phi, eps):
    """Regularised Heaviside ``1/2 + arctan(phi / eps) / pi``."""
    if not eps > 0:
        raise ValueError("eps must be > 0")
    return 0.5 + np.arctan(np.asarray(phi, dtype=float) / eps) / np.pi


def grey_bins(values):
    """Round intensities to the nearest grey level in ``0..255`` (halves round up)."""
    return np.clip(np.floor(np.asarray(values, dtype=float) + 0.5), 0, N_LEVELS - 1).astype(np.int64)


@dataclass(frozen=True, eq=False)
class RegionPdf:
    """Kernel density estimate over the 256 grey levels of one region."""

    density: np.ndarray
    zeta: float
    region: str

    def __post_init__(self):
        d = np.array(self.density, dtype=float)
        if d.shape != (N_LEVELS,) or np.any(d < 0):
            raise ValueError("density must be 256 non-negative values")
        if not self.zeta > 0:
            raise ValueError("zeta must be > 0")
        if self.region not in (INTERIOR, EXTERIOR):
            raise ValueError(f"region must be {INTERIOR!r} or {EXTERIOR!r}")
        d.setflags(write=False)
        object.__setattr__(self, "density", d)

    def floored(self):
        """``max(density, zeta)`` on every grey level."""
        return np.maximum(self.density, self.zeta)

    def __call__(self, intensity):
        """Evaluate the floored density at (rounded) intensities."""
        return self.floored()[grey_bins(intensity)]


# --------------------------------------------------------------------------
# pixels <-> mesh

def _pixel_cache(mesh, shape):
    cache = mesh.__dict__.setdefault("_pixel_locations", {})
    if shape not in cache:
        h, w = shape
        if mesh.width < w or mesh.height < h:
            raise ValueError("mesh does not cover the image domain")
        x, y = np.meshgrid(np.arange(w) + 0.5, np.arange(h) + 0.5)
        elem, bary = mesh.locator.locate(np.column_stack([x.ravel(), y.ravel()]))
        cache[shape] = (elem, bary)
    return cache[shape]


def phi_at_pixels(mesh, phi, shape):
    """P1 field ``phi`` evaluated at every pixel centre, shaped ``(height, width)``."""
    elem, bary = _pixel_cache(mesh, tuple(shape))
    vals = np.einsum("ni,ni->n", bary, np.asarray(phi, dtype=float)[mesh.triangles[elem]])
    return vals.reshape(shape)


def classify_pixels(mesh, phi, img):
    """Interior mask: ``phi(centre) > 0``; zero goes to the exterior."""
    return phi_at_pixels(mesh, phi, img.shape) > 0.0


def _nearest(grid, x, y):
    h, w = grid.shape
    i = np.clip(np.floor(y).astype(np.int64), 0, h - 1)
    j = np.clip(np.floor(x).astype(np.int64), 0, w - 1)
    return grid[i, j]


def element_values(mesh, grid, min_pixels=4):
    """One value of a pixel grid per element.

    The grid is read as piecewise constant over the pixels. Elements containing
    at least ``min_pixels`` pixel centres get the mean over those pixels; the
    others average the pixels hit by the centroid and by the three points
    ``(4 v_a + v_b + v_c) / 6``. Interpolating between pixels instead would move
    the zero crossing of a source with unequal magnitudes on the two sides.
    """
    grid = np.asarray(grid, dtype=float)
    elem, _ = _pixel_cache(mesh, grid.shape)
    counts = np.bincount(elem, minlength=mesh.n_elements)
    sums = np.bincount(elem, grid.ravel(), minlength=mesh.n_elements)
    v = mesh.vertices[mesh.triangles]
    pts = [mesh.centroids] + [(4.0 * v[:, a] + v[:, b] + v[:, c]) / 6.0
                              for a, b, c in ((0, 1, 2), (1, 2, 0), (2, 0, 1))]
    out = np.mean([_nearest(grid, p[:, 0], p[:, 1]) for p in pts], axis=0)
    big = counts >= min_pixels
    out[big] = sums[big] / counts[big]
    return out


# --------------------------------------------------------------------------
# Bayesian model

def gaussian_kernel_1d(tau):
    t = np.arange(-(N_LEVELS - 1), N_LEVELS, dtype=float)
    return np.exp(-t * t / (2.0 * tau * tau)) / (np.sqrt(2.0 * np.pi) * tau)


def estimate_pdf(img, labels, region, tau, zeta):
    """Gaussian kernel density estimate of the grey levels inside ``region``.

    Parameters
    ----------
    labels : (H, W) bool array
        Interior mask.
    region : {"interior", "exterior"}
    tau : float
        Kernel standard deviation in grey levels.
    zeta : float
        Floor used when the density is evaluated.
    """
    if not tau > 0:
        raise ValueError("tau must be > 0")
    labels = np.asarray(labels, dtype=bool)
    mask = labels if region == INTERIOR else ~labels
    hist = np.bincount(grey_bins(img.intensity[mask]), minlength=N_LEVELS).astype(float)
    if hist.sum() == 0:
        return RegionPdf(np.full(N_LEVELS, 1.0 / N_LEVELS), zeta, region)
    dens = np.convolve(hist, gaussian_kernel_1d(tau), mode="valid")
    return RegionPdf(dens / dens.sum(), zeta, region)


def source_bayes(img, pdf_i, pdf_e):
    """Per-pixel source ``-log p_I(U) + log p_E(U)`` (positive where the exterior fits better)."""
    return -np.log(pdf_i(img.intensity)) + np.log(pdf_e(img.intensity))


def delta_p(img, pdf_i, pdf_e):
    """Per-pixel likelihood discrepancy ``|p_I(U) - p_E(U)|``."""
    return np.abs(pdf_i(img.intensity) - pdf_e(img.intensity))


def weighted_tv(mesh, phi, g_elem):
    """``sum_K |K| g_K |grad phi|_K``."""
    grad = gradient_p0(mesh, phi)
    return float(np.sum(mesh.areas * g_elem * np.hypot(grad[:, 0], grad[:, 1])))


def _g_elements(mesh, g):
    if callable(g):
        c = mesh.centroids
        return np.asarray(g(c), dtype=float)
    return np.broadcast_to(np.asarray(g, dtype=float), (mesh.n_elements,))


def functional_bayes(mesh, phi, img, pdf_i, pdf_e, nu, g):
    """Negative log-likelihood of each region plus ``nu`` times the weighted TV of ``phi``.

    ``g`` is an edge-detector sampler or per-element values.
    """
    labels = classify_pixels(mesh, phi, img)
    u = img.intensity
    data = -np.log(pdf_i(u[labels])).sum() - np.log(pdf_e(u[~labels])).sum()
    return float(data) + nu * weighted_tv(mesh, phi, _g_elements(mesh, g))


# --------------------------------------------------------------------------
# region-scalable fitting

@dataclass(frozen=True, eq=False)
class RsfeFields:
    f_i: np.ndarray
    f_e: np.ndarray
    e_i: np.ndarray
    e_e: np.ndarray
    sigma: float


def _smooth(a, sigma):
    return ndimage.gaussian_filter(a, sigma, mode="constant", cval=0.0, truncate=4.0)


def rsfe_fields(img, labels, sigma):
    """Local Gaussian-weighted region means ``f`` and fitting discrepancies ``e``."""
    if not sigma > 0:
        raise ValueError("sigma must be > 0")
    u = img.intensity
    chi = np.asarray(labels, dtype=float)
    k1 = _smooth(np.ones_like(u), sigma)
    ku = _smooth(u, sigma)
    ku2 = _smooth(u * u, sigma)
    fallback = ku / k1
    lo, hi = u.min(), u.max()
    out = []
    for c in (chi, 1.0 - chi):
        num = _smooth(c * u, sigma)
        den = _smooth(c, sigma)
        ok = den > 1e-12
        f = np.where(ok, num / np.where(ok, den, 1.0), fallback)
        f = np.clip(f, lo, hi)
        e = np.maximum(ku2 - 2.0 * f * ku + f * f * k1, 0.0)
        out.append((f, e))
    (f_i, e_i), (f_e, e_e) = out
    return RsfeFields(f_i, f_e, e_i, e_e, float(sigma))


def source_rsfe(fields, mu_i, mu_e, literal_sum=False):
    """``mu_I e_I - mu_E e_E``; with ``literal_sum`` the sign-definite ``mu_I e_I + mu_E e_E``."""
    if not (mu_i > 0 and mu_e > 0):
        raise ValueError("mu_i and mu_e must be > 0")
    if literal_sum:
        return mu_i * fields.e_i + mu_e * fields.e_e
    return mu_i * fields.e_i - mu_e * fields.e_e


def functional_rsfe(mesh, phi, img, fields, mu_i, mu_e, nu, g):
    """Region-restricted local fitting energy plus ``nu`` times the weighted TV."""
    labels = classify_pixels(mesh, phi, img)
    data = mu_i * fields.e_i[labels].sum() + mu_e * fields.e_e[~labels].sum()
    return float(data) + nu * weighted_tv(mesh, phi, _g_elements(mesh, g))


def pdf_table(pdf_i, pdf_e):
    """Rows ``(kappa, p_I, p_E)`` of the raw (unfloored) densities."""
    return np.column_stack([np.arange(N_LEVELS), pdf_i.density, pdf_e.density])

