"""Synthetic test images with analytic ground-truth masks."""

import numpy as np

from .imageio import GreyImage


def _centres(width, height):
    return np.meshgrid(np.arange(width) + 0.5, np.arange(height) + 0.5)


def disk_image(width=64, height=64, cx=28.0, cy=34.0, r=14.0, inside=50.0, outside=200.0):
    """Constant disk on a constant background.

    Returns
    -------
    img : GreyImage
    mask : (height, width) bool array
        Pixels whose centre lies strictly inside the disk.
    """
    x, y = _centres(width, height)
    mask = (x - cx) ** 2 + (y - cy) ** 2 < r * r
    return GreyImage(np.where(mask, inside, outside)), mask


def variance_square_image(size=64, lo=16, hi=48, mean=177.0, var_out=0.05, var_in=0.4, seed=0):
    """Equal-mean image whose inner square differs from the background only in variance.

    Variances refer to ``[0, 1]``-normalised intensities; values are clipped to ``[0, 1]``.
    """
    rng = np.random.default_rng(seed)
    base = mean / 255.0
    n_out = rng.normal(0.0, np.sqrt(var_out), size=(size, size))
    n_in = rng.normal(0.0, np.sqrt(var_in), size=(size, size))
    mask = np.zeros((size, size), dtype=bool)
    mask[lo:hi, lo:hi] = True
    u = np.clip(base + np.where(mask, n_in, n_out), 0.0, 1.0)
    return GreyImage(u * 255.0), mask
