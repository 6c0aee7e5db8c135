import numpy as np
import pytest
from PIL import Image

from cmfd.image_io import (
    GrayImage,
    ImageFormatError,
    load_image,
    read_mask,
    save_image,
    to_gray,
    write_float_map,
    write_mask,
    write_overlay,
)


def _rgb(tmp_path, color, name="c.png"):
    p = tmp_path / name
    Image.fromarray(np.full((4, 5, 3), color, dtype=np.uint8)).save(p)
    return p


def test_white_and_red(tmp_path):
    assert np.all(load_image(_rgb(tmp_path, (255, 255, 255))).luminance == pytest.approx(255.0))
    red = load_image(_rgb(tmp_path, (255, 0, 0), "r.png"))
    np.testing.assert_allclose(red.luminance, 76.245)
    assert (red.width, red.height) == (5, 4)


def test_gray_png_unchanged(tmp_path):
    arr = np.arange(20, dtype=np.uint8).reshape(4, 5) * 12
    Image.fromarray(arr).save(tmp_path / "g.png")
    np.testing.assert_array_equal(load_image(tmp_path / "g.png").luminance, arr)


def test_jpeg_loads(tmp_path):
    Image.fromarray(np.full((8, 8, 3), 100, dtype=np.uint8)).save(tmp_path / "j.jpg")
    assert load_image(tmp_path / "j.jpg").luminance.shape == (8, 8)


def test_to_gray_idempotent():
    g = to_gray(np.random.default_rng(0).integers(0, 256, (6, 7, 3)))
    np.testing.assert_array_equal(to_gray(g), g)


def test_missing_and_undecodable(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_image(tmp_path / "nope.png")
    (tmp_path / "junk.png").write_bytes(b"not an image")
    with pytest.raises(ImageFormatError):
        load_image(tmp_path / "junk.png")


def test_gray_image_immutable_and_validated():
    g = GrayImage(np.zeros((3, 3)))
    with pytest.raises(ValueError):
        g.luminance[0, 0] = 1.0
    with pytest.raises(ValueError):
        GrayImage(np.zeros((0, 3)))


def test_mask_round_trip(tmp_path):
    m = np.random.default_rng(1).random((30, 40)) > 0.5
    write_mask(m, tmp_path / "m.png")
    np.testing.assert_array_equal(read_mask(tmp_path / "m.png"), m)
    write_mask(np.zeros((5, 5), bool), tmp_path / "z.png")
    assert np.asarray(Image.open(tmp_path / "z.png")).max() == 0
    write_mask(np.ones((5, 5), bool), tmp_path / "o.png")
    assert np.asarray(Image.open(tmp_path / "o.png")).min() == 255


def test_mask_unwritable(tmp_path):
    with pytest.raises(OSError):
        write_mask(np.zeros((2, 2), bool), tmp_path / "no" / "m.png")


def test_overlay_and_float_map(tmp_path):
    img = GrayImage(np.full((4, 4), 100.0))
    m = np.zeros((4, 4), bool)
    m[0, 0] = True
    write_overlay(img, m, tmp_path / "ov.png")
    ov = np.asarray(Image.open(tmp_path / "ov.png"))
    assert ov.shape == (4, 4, 3)
    assert tuple(ov[1, 1]) == (100, 100, 100) and ov[0, 0, 0] > 100
    write_float_map(np.array([[-1.0, 1.0], [np.nan, 0.0]]), tmp_path / "f.png")
    np.testing.assert_array_equal(np.asarray(Image.open(tmp_path / "f.png")), [[0, 255], [0, 128]])


def test_save_image_round_trip(tmp_path):
    lum = np.random.default_rng(2).integers(0, 256, (9, 11)).astype(float)
    save_image(GrayImage(lum), tmp_path / "s.png")
    np.testing.assert_array_equal(load_image(tmp_path / "s.png").luminance, lum)
