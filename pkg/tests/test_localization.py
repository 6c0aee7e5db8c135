import numpy as np
import pytest

from conftest import textured_image
from cmfd import bundled
from cmfd.affine import AffineTransform
from cmfd.evaluation import AttackSpec, apply_attack
from cmfd.image_io import GrayImage
from cmfd.localization import (
    bilinear,
    build_detection_map,
    correlation_at,
    correlations,
    nearest_cluster,
    window_offsets,
)
from cmfd.pipeline import detect


@pytest.fixture(scope="module")
def tex():
    return GrayImage(textured_image(np.random.default_rng(11), 96, 96))


def test_identity_correlation_is_one(tex):
    ident = AffineTransform()
    for p in [(10, 10), (40, 57), (80, 20)]:
        assert correlation_at(tex, p, ident) == pytest.approx(1.0, abs=1e-6)


def test_negated_contrast():
    lum = textured_image(np.random.default_rng(3), 64, 64)
    lum[:, 32:] = 255.0 - lum[:, :32]
    img = GrayImage(lum)
    # right half is the negative of the left half, shifted by 32 px
    assert correlation_at(img, (12, 30), AffineTransform(tx=32.0)) == pytest.approx(-1.0, abs=1e-6)


def test_flat_window_is_nan(tex):
    lum = np.array(tex.luminance)
    lum[:20, :20] = 50.0
    assert np.isnan(correlation_at(GrayImage(lum), (8, 8), AffineTransform(tx=40.0)))


def test_bilinear_exact_at_integers_and_midpoints():
    lum = np.arange(12, dtype=float).reshape(3, 4)
    np.testing.assert_array_equal(bilinear(lum, np.array([0.0, 3.0]), np.array([0.0, 2.0])), [0, 11])
    assert bilinear(lum, np.array([0.5]), np.array([0.5]))[0] == pytest.approx(2.5)
    assert bilinear(lum, np.array([-5.0]), np.array([10.0]))[0] == 8.0  # clamped


def test_window_offsets_validated():
    assert window_offsets(7).shape == (49, 2)
    with pytest.raises(ValueError):
        window_offsets(4)


def test_nearest_cluster_ties_and_unusable():
    c = np.array([[0.0, 0.0], [4.0, 0.0], [2.0, 0.0]])
    own = nearest_cluster(c, np.array([True, True, False]), 5, 1)
    assert own.tolist() == [[0, 0, 0, 1, 1]]
    assert (nearest_cluster(c, np.zeros(3, bool), 3, 2) == -1).all()


def test_threshold_above_one_gives_empty_mask(tex):
    d = build_detection_map(tex, [[48, 48]], [AffineTransform()], binarize_threshold=1.01)
    assert not d.mask.any()


def test_mask_monotone_in_threshold(tex):
    h = AffineTransform.from_params(0.2, 1.0, 1.0, 5.0, -3.0)
    masks = [build_detection_map(tex, [[48, 48]], [h], binarize_threshold=t).mask
             for t in (0.2, 0.4, 0.6, 0.8)]
    for lo, hi in zip(masks, masks[1:]):
        assert not (hi & ~lo).any()


def test_no_usable_cluster_gives_empty_map(tex):
    d = build_detection_map(tex, [[48, 48]], [AffineTransform(1, 2, 2, 4)])
    assert not d.mask.any() and np.isnan(d.corr).all()


@pytest.fixture(scope="module")
def forged_a5():
    spec = AttackSpec(1.0, 1.0, 40.0, bundled.DEFAULT_SOURCE_RECT, bundled.DEFAULT_DEST, "A5")
    return apply_attack(bundled.original(), spec), spec


def test_true_transform_correlates_inside_region(forged_a5):
    (img, _, tr), spec = forged_a5
    x, y, w, h = spec.source_rect
    ys, xs = np.mgrid[y + 5:y + h - 5, x + 5:x + w - 5]
    pts = np.stack([xs.ravel(), ys.ravel()], axis=1).astype(float)
    r = correlations(img.luminance, pts, tr, window_offsets(7))
    assert np.nanmean(r) >= 0.9


def test_clean_image_mask_coverage():
    res = detect(bundled.original())
    assert res.mask.mean() < 0.01


def test_threads_identical(forged_a5):
    (img, _, tr), spec = forged_a5
    c = [spec.source_center, spec.dest_center]
    a = build_detection_map(img, c, [tr, tr.inverse()], threads=1)
    b = build_detection_map(img, c, [tr, tr.inverse()], threads=4)
    np.testing.assert_array_equal(a.corr, b.corr)
    np.testing.assert_array_equal(a.mask, b.mask)
    assert a.mask.any()
