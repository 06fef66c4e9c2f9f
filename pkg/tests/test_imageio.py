import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from segflow.imageio import (GreyImage, ImageFormatError, NoiseSpec, add_noise, edge_detector,
                             load_image, salt_pepper_mask, sample_intensity, save_image, save_mask)


def write(tmp_path, name, data):
    p = tmp_path / name
    p.write_bytes(data)
    return p


def test_p2_decode(tmp_path):
    img = load_image(write(tmp_path, "a.pgm", b"P2\n2 2\n255\n0 255 128 64"))
    assert np.array_equal(img.intensity, [[0, 255], [128, 64]])


def test_p5_matches_p2(tmp_path):
    a = load_image(write(tmp_path, "a.pgm", b"P2\n2 2\n255\n0 255 128 64"))
    b = load_image(write(tmp_path, "b.pgm", b"P5\n2 2\n255\n" + bytes([0, 255, 128, 64])))
    assert a == b


def test_header_comments(tmp_path):
    img = load_image(write(tmp_path, "c.pgm", b"P2\n# made by hand\n2 # width\n2\n255\n1 2 3 4\n"))
    assert np.array_equal(img.intensity, [[1, 2], [3, 4]])


def test_p3_white_is_255(tmp_path):
    img = load_image(write(tmp_path, "w.ppm", b"P3\n2 2\n255\n" + b"255 255 255 " * 4))
    assert np.allclose(img.intensity, 255.0)


def test_p6_luminance(tmp_path):
    payload = bytes([255, 0, 0, 0, 255, 0, 0, 0, 255, 10, 10, 10])
    img = load_image(write(tmp_path, "c.ppm", b"P6\n2 2\n255\n" + payload))
    assert np.allclose(img.intensity.ravel(), [0.299 * 255, 0.587 * 255, 0.114 * 255, 10.0])


@pytest.mark.parametrize("data, offset", [
    (b"P7\n2 2\n255\n", 0),
    (b"P2\n2 2\n65535\n0 1 2 3", 7),
    (b"P5\n2 2\n255\n\x00\x01", 13),
    (b"P2\n2 x\n255\n", 5),
])
def test_format_errors_report_offset(tmp_path, data, offset):
    with pytest.raises(ImageFormatError) as exc:
        load_image(write(tmp_path, "bad.pgm", data))
    assert exc.value.offset == offset


def test_rounding_on_save(tmp_path):
    p = tmp_path / "r.pgm"
    save_image(GreyImage([[127.6, 127.4], [127.5, 0.0]]), p)
    assert p.read_bytes()[-4:] == bytes([128, 127, 128, 0])


def test_one_pixel_wide_image_rejected():
    with pytest.raises(ValueError):
        GreyImage(np.zeros((5, 1)))
    with pytest.raises(ValueError):
        GreyImage(np.full((2, 2), 256.0))


@settings(max_examples=30, deadline=None)
@given(arrays(np.uint8, st.tuples(st.integers(2, 9), st.integers(2, 9))))
def test_roundtrip(tmp_path_factory, grid):
    p = tmp_path_factory.mktemp("rt") / "x.pgm"
    img = GreyImage(grid.astype(float))
    save_image(img, p)
    assert load_image(p) == img


def test_save_mask(tmp_path):
    p = tmp_path / "m.pgm"
    save_mask(np.array([[True, False], [False, True]]), p)
    assert np.array_equal(load_image(p).intensity, [[255, 0], [0, 255]])


# noise ---------------------------------------------------------------------

def test_noise_is_pure():
    img = GreyImage(np.full((32, 32), 120.0))
    spec = NoiseSpec("gaussian", 0.05, seed=7)
    assert add_noise(img, spec) == add_noise(img, spec)
    assert not add_noise(img, spec) == add_noise(img, NoiseSpec("gaussian", 0.05, seed=8))


def test_tiny_gaussian_level_is_identity():
    img = GreyImage(np.full((16, 16), 100.0))
    out = add_noise(img, NoiseSpec("gaussian", 1e-30, seed=3))
    assert np.allclose(out.intensity, img.intensity, atol=1e-9)


def test_salt_pepper_count():
    img = GreyImage(np.full((200, 200), 128.0))
    spec = NoiseSpec("salt_pepper", 0.05, seed=4)
    out = add_noise(img, spec)
    idx = salt_pepper_mask(img.shape, spec)
    assert len(idx) == 2000 and len(np.unique(idx)) == 2000
    flat = out.intensity.ravel()
    assert np.all(np.isin(flat[idx], [0.0, 255.0]))
    untouched = np.ones(flat.size, dtype=bool)
    untouched[idx] = False
    assert np.all(flat[untouched] == 128.0)
    assert np.count_nonzero(flat != 128.0) == 2000


def test_gaussian_statistics():
    level = 0.01
    img = GreyImage(np.full((256, 256), 127.5))
    out = add_noise(img, NoiseSpec("gaussian", level, seed=11))
    diff = (out.intensity - img.intensity) / 255.0
    assert abs(diff.mean()) <= 3.0 * np.sqrt(level / diff.size)
    assert abs(diff.var() / level - 1.0) <= 0.10


def test_speckle_keeps_black():
    img = GreyImage(np.array([[0.0, 200.0], [0.0, 200.0]]))
    out = add_noise(img, NoiseSpec("speckle", 0.5, seed=2))
    assert np.all(out.intensity[:, 0] == 0.0)


@pytest.mark.parametrize("kind, level", [("poisson", 0.1), ("gaussian", 0.0), ("salt_pepper", 1.5)])
def test_bad_noise_spec(kind, level):
    with pytest.raises(ValueError):
        NoiseSpec(kind, level)


# sampling --------------------------------------------------------------------

def test_sample_at_centres(rng):
    grid = rng.uniform(0, 255, size=(5, 7))
    img = GreyImage(grid)
    for j in range(5):
        for i in range(7):
            assert sample_intensity(img, (i + 0.5, j + 0.5)) == pytest.approx(grid[j, i], abs=1e-12)


def test_sample_midpoint():
    img = GreyImage([[0.0, 100.0], [0.0, 100.0]])
    assert sample_intensity(img, (1.0, 0.5)) == pytest.approx(50.0)


def test_sample_corner_of_constant_image():
    assert sample_intensity(GreyImage(np.full((3, 3), 42.0)), (0.0, 0.0)) == 42.0


def test_sample_outside_domain():
    with pytest.raises(ValueError):
        sample_intensity(GreyImage(np.zeros((3, 3))), (3.5, 1.0))


@settings(max_examples=50, deadline=None)
@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(0.5, 9.5), st.floats(0.5, 7.5))
def test_affine_field_reproduced(a, b, x, y):
    xs, ys = np.meshgrid(np.arange(10) + 0.5, np.arange(8) + 0.5)
    grid = 100.0 + a * xs + b * ys
    img = GreyImage(grid)
    assert sample_intensity(img, (x, y)) == pytest.approx(100.0 + a * x + b * y, abs=1e-9)


# edge detector ---------------------------------------------------------------

def test_edge_detector_constant():
    g = edge_detector(GreyImage(np.full((4, 4), 30.0)), 100.0)
    assert np.all(g.values == 1.0)
    assert g((1.3, 2.2)) == 1.0


def test_edge_detector_half_value():
    # slope 0.1 per pixel on the normalised scale -> |grad U|^2 = 0.01
    xs = np.arange(6, dtype=float)
    grid = np.tile(0.1 * xs * 255.0, (3, 1))
    g = edge_detector(GreyImage(grid), 100.0)
    assert np.allclose(g.values, 0.5)


def test_edge_detector_step():
    grid = np.zeros((3, 4))
    grid[:, 2:] = 255.0
    g = edge_detector(GreyImage(grid), 100.0).values
    # central difference across the step: (1 - 0) / 2
    assert g[1, 1] == pytest.approx(1.0 / (1.0 + 100.0 * 0.25))
    assert g[1, 2] == pytest.approx(1.0 / (1.0 + 100.0 * 0.25))
    assert g[1, 0] == 1.0
    assert np.all((g > 0) & (g <= 1))
