"""Grey-level images: netpbm I/O, noise synthesis and continuous sampling.

Pixel ``(i, j)`` (column ``i``, row ``j``) has its centre at
``(i + 0.5, j + 0.5)``; ``y`` grows downwards and the image domain is
``[0, width] x [0, height]`` in pixel units.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

NOISE_KINDS = ("gaussian", "salt_pepper", "speckle")


class ImageFormatError(ValueError):
    """Malformed netpbm file; ``offset`` is the byte position of the problem."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


@dataclass(frozen=True, eq=False)
class GreyImage:
    """Pixel grid of intensities in ``[0, 255]``, indexed ``intensity[row, col]``."""

    intensity: np.ndarray

    def __post_init__(self):
        arr = np.array(self.intensity, dtype=float)
        if arr.ndim != 2:
            raise ValueError("intensity must be a 2-D grid")
        h, w = arr.shape
        if w < 2 or h < 2:
            raise ValueError(f"image must be at least 2x2 pixels, got {w}x{h}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("intensity contains non-finite values")
        if arr.min() < 0.0 or arr.max() > 255.0:
            raise ValueError("intensity values must lie in [0, 255]")
        arr.setflags(write=False)
        object.__setattr__(self, "intensity", arr)

    @property
    def width(self):
        return self.intensity.shape[1]

    @property
    def height(self):
        return self.intensity.shape[0]

    @property
    def shape(self):
        return self.intensity.shape

    def __eq__(self, other):
        if not isinstance(other, GreyImage):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.intensity, other.intensity)

    def pixel_centers(self):
        """Return ``(x, y)`` arrays of pixel-centre coordinates, shaped like the grid."""
        x = np.arange(self.width) + 0.5
        y = np.arange(self.height) + 0.5
        return np.meshgrid(x, y)


@dataclass(frozen=True)
class NoiseSpec:
    """Noise model.

    ``level`` is the variance of the normal perturbation on ``[0, 1]``-normalised
    intensities for ``gaussian`` and ``speckle``, and the corrupted-pixel
    density for ``salt_pepper``.
    """

    kind: str
    level: float
    seed: int = 0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}; expected one of {NOISE_KINDS}")
        if not self.level > 0:
            raise ValueError("noise level must be > 0")
        if self.kind == "salt_pepper" and self.level > 1:
            raise ValueError("salt_pepper density must be <= 1")
        if int(self.seed) < 0:
            raise ValueError("seed must be a non-negative integer")


# --------------------------------------------------------------------------
# netpbm

def _tokens(data, start, count):
    """Read ``count`` whitespace-separated header tokens, skipping ``#`` comments."""
    out = []
    pos = start
    n = len(data)
    while len(out) < count:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos >= n:
            raise ImageFormatError("unexpected end of header", pos)
        if data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        tok_start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        tok = data[tok_start:pos]
        if not tok.isdigit():
            raise ImageFormatError(f"invalid header token {tok!r}", tok_start)
        out.append((int(tok), tok_start))
    return out, pos


def load_image(path):
    """Read a PGM (P2/P5) or PPM (P3/P6) file with ``maxval`` 255.

    Colour images are reduced to luminance ``0.299 R + 0.587 G + 0.114 B``.
    """
    data = Path(path).read_bytes()
    magic = data[:2]
    if magic not in (b"P2", b"P5", b"P3", b"P6"):
        raise ImageFormatError(f"unsupported magic number {magic!r}", 0)
    header, pos = _tokens(data, 2, 3)
    (w, _), (h, _), (maxval, maxval_off) = header
    if w < 1 or h < 1:
        raise ImageFormatError("image dimensions must be positive", 2)
    if maxval != 255:
        raise ImageFormatError(f"maxval must be 255, got {maxval}", maxval_off)
    channels = 3 if magic in (b"P3", b"P6") else 1
    count = w * h * channels

    if magic in (b"P5", b"P6"):
        if pos >= len(data) or not data[pos:pos + 1].isspace():
            raise ImageFormatError("missing whitespace after maxval", pos)
        start = pos + 1
        payload = data[start:start + count]
        if len(payload) < count:
            raise ImageFormatError(
                f"truncated payload: expected {count} bytes, found {len(payload)}",
                start + len(payload))
        values = np.frombuffer(payload, dtype=np.uint8).astype(float)
    else:
        body = data[pos:]
        fields = body.split()
        if len(fields) < count:
            raise ImageFormatError(
                f"truncated payload: expected {count} samples, found {len(fields)}", len(data))
        try:
            values = np.array([int(f) for f in fields[:count]], dtype=float)
        except ValueError:
            bad = next(f for f in fields[:count] if not f.isdigit())
            raise ImageFormatError(f"invalid sample {bad!r}", pos + body.find(bad)) from None
        if values.max(initial=0) > 255:
            raise ImageFormatError("sample exceeds maxval", pos)

    if channels == 3:
        rgb = values.reshape(h, w, 3)
        grid = 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]
        grid = np.clip(grid, 0.0, 255.0)
    else:
        grid = values.reshape(h, w)
    return GreyImage(grid)


def save_image(img, path):
    """Write ``img`` as a binary P5 file, rounding intensities to the nearest integer."""
    # floor(x + 0.5): 127.5 -> 128 rather than numpy's half-to-even
    data = np.floor(img.intensity + 0.5).clip(0, 255).astype(np.uint8)
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + data.tobytes())


def save_mask(mask, path):
    """Write a boolean mask as P5 with ``True -> 255``."""
    mask = np.asarray(mask, dtype=bool)
    save_image(GreyImage(np.where(mask, 255.0, 0.0)), path)


# --------------------------------------------------------------------------
# noise

def add_noise(img, spec):
    """Return a noisy copy of ``img``; a pure function of ``(img, spec)``."""
    rng = np.random.default_rng(int(spec.seed))
    u = img.intensity / 255.0
    if spec.kind == "gaussian":
        n = rng.normal(0.0, np.sqrt(spec.level), size=u.shape)
        out = np.clip(u + n, 0.0, 1.0) * 255.0
    elif spec.kind == "speckle":
        n = rng.normal(0.0, np.sqrt(spec.level), size=u.shape)
        out = np.clip(u * (1.0 + n), 0.0, 1.0) * 255.0
    else:
        out = img.intensity.copy()
        count = int(round(spec.level * out.size))
        flat = out.reshape(-1)
        idx = rng.choice(out.size, size=count, replace=False)
        flat[idx] = np.where(rng.random(count) < 0.5, 0.0, 255.0)
    return GreyImage(out)


def salt_pepper_mask(shape, spec):
    """Indices corrupted by :func:`add_noise` for a ``salt_pepper`` spec."""
    rng = np.random.default_rng(int(spec.seed))
    size = int(np.prod(shape))
    count = int(round(spec.level * size))
    return rng.choice(size, size=count, replace=False)


# --------------------------------------------------------------------------
# continuous sampling

def bilinear(grid, x, y):
    """Bilinear interpolation of a pixel grid at points ``(x, y)``.

    Values are attached to pixel centres; within the half-pixel band along
    the border the nearest centre row/column is used (clamped extrapolation).
    """
    grid = np.asarray(grid, dtype=float)
    h, w = grid.shape
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    u = np.clip(x - 0.5, 0.0, w - 1.0)
    v = np.clip(y - 0.5, 0.0, h - 1.0)
    i0 = np.minimum(np.floor(u).astype(int), w - 2)
    j0 = np.minimum(np.floor(v).astype(int), h - 2)
    fu = u - i0
    fv = v - j0
    g00 = grid[j0, i0]
    g10 = grid[j0, i0 + 1]
    g01 = grid[j0 + 1, i0]
    g11 = grid[j0 + 1, i0 + 1]
    return (g00 * (1 - fu) * (1 - fv) + g10 * fu * (1 - fv)
            + g01 * (1 - fu) * fv + g11 * fu * fv)


def _check_domain(shape, x, y):
    h, w = shape
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any((x < 0) | (x > w) | (y < 0) | (y > h)) or np.any(~np.isfinite(x + y)):
        raise ValueError(f"sample point outside the image domain [0, {w}] x [0, {h}]")
    return x, y


def sample_intensity(img, p):
    """Continuous intensity ``U`` at ``p = (x, y)`` (also accepts an ``(n, 2)`` array)."""
    p = np.asarray(p, dtype=float)
    x, y = _check_domain(img.shape, p[..., 0], p[..., 1])
    out = bilinear(img.intensity, x, y)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class EdgeDetector:
    """Per-pixel values of ``g = 1 / (1 + beta |grad U|^2)`` with a bilinear sampler."""

    values: np.ndarray
    beta: float

    def __call__(self, p):
        p = np.asarray(p, dtype=float)
        x, y = _check_domain(self.values.shape, p[..., 0], p[..., 1])
        out = bilinear(self.values, x, y)
        return float(out) if out.ndim == 0 else out


def edge_detector(img, beta):
    """Edge-stopping function of ``img`` on ``[0, 1]``-normalised intensities.

    The gradient uses central differences in the interior and one-sided
    differences on the border, with unit pixel spacing.
    """
    if not beta > 0:
        raise ValueError("beta must be > 0")
    u = img.intensity / 255.0
    gy, gx = np.gradient(u)
    g = 1.0 / (1.0 + beta * (gx * gx + gy * gy))
    g.setflags(write=False)
    return EdgeDetector(g, float(beta))
