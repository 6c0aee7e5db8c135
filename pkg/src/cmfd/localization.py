"""Per-pixel correlation map and binary detection mask."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .affine import AffineTransform, decompose_affine  # noqa: F401  (re-export)
from .image_io import GrayImage

log = logging.getLogger(__name__)

_ROWS_PER_TASK = 32
# windows whose summed squared deviation falls below this are treated as flat
_FLAT_EPS = 1e-9


@dataclass
class DetectionMap:
    """``corr`` holds NaN where the correlation is undefined (flat window)."""

    corr: np.ndarray
    mask: np.ndarray

    @property
    def height(self) -> int:
        return self.corr.shape[0]

    @property
    def width(self) -> int:
        return self.corr.shape[1]


def bilinear(lum: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Sample ``lum`` at real coordinates with edge clamping."""
    h, w = lum.shape
    xs = np.clip(xs, 0.0, w - 1.0)
    ys = np.clip(ys, 0.0, h - 1.0)
    x0 = np.floor(xs).astype(np.intp)
    y0 = np.floor(ys).astype(np.intp)
    fx = xs - x0
    fy = ys - y0
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    top = lum[y0, x0] * (1 - fx) + lum[y0, x1] * fx
    bot = lum[y1, x0] * (1 - fx) + lum[y1, x1] * fx
    return top * (1 - fy) + bot * fy


def window_offsets(window: int) -> np.ndarray:
    if window < 1 or window % 2 == 0:
        raise ValueError(f"window must be a positive odd size, got {window}")
    r = window // 2
    oy, ox = np.mgrid[-r:r + 1, -r:r + 1]
    return np.stack([ox.ravel(), oy.ravel()], axis=1).astype(np.float64)


def _ncc(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = a - a.mean(axis=1, keepdims=True)
    b = b - b.mean(axis=1, keepdims=True)
    saa = np.einsum("ij,ij->i", a, a)
    sbb = np.einsum("ij,ij->i", b, b)
    sab = np.einsum("ij,ij->i", a, b)
    flat = (saa <= _FLAT_EPS) | (sbb <= _FLAT_EPS)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = sab / np.sqrt(saa * sbb)
    return np.where(flat, np.nan, np.clip(r, -1.0, 1.0))


def correlations(lum: np.ndarray, pts: np.ndarray, h: AffineTransform, offsets: np.ndarray) -> np.ndarray:
    """Correlation for each pixel in ``pts`` (``N x 2`` of x, y) under one transform.

    Window A sits around the pixel and is resampled through the inverse of the
    linear part, so its j-th sample lines up with offset j around ``H x``,
    where window B is taken.
    """
    inv_lin = np.linalg.inv(h.linear)
    src_off = offsets @ inv_lin.T  # W x 2
    dst = h.apply(pts)
    a = bilinear(lum, pts[:, :1] + src_off[None, :, 0], pts[:, 1:] + src_off[None, :, 1])
    b = bilinear(lum, dst[:, :1] + offsets[None, :, 0], dst[:, 1:] + offsets[None, :, 1])
    return _ncc(a, b)


def correlation_at(img: GrayImage, pixel, h: AffineTransform, window: int = 7) -> float:
    """Correlation at a single ``(x, y)`` pixel; NaN when undefined."""
    pts = np.asarray(pixel, dtype=np.float64).reshape(1, 2)
    return float(correlations(img.luminance, pts, h, window_offsets(window))[0])


def nearest_cluster(centers: np.ndarray, usable: np.ndarray, width: int, height: int) -> np.ndarray:
    """``H x W`` index of the nearest usable centre; lower index wins ties, -1 if none."""
    idx = np.flatnonzero(usable)
    if idx.size == 0:
        return -np.ones((height, width), dtype=int)
    ys, xs = np.mgrid[0:height, 0:width]
    d = np.stack([(xs - centers[i, 0]) ** 2 + (ys - centers[i, 1]) ** 2 for i in idx])
    return idx[np.argmin(d, axis=0)]


def build_detection_map(img: GrayImage, centers, transforms, usable=None,
                        binarize_threshold: float = 0.6, window: int = 7,
                        threads: int = 1) -> DetectionMap:
    """Correlation map under each pixel's nearest-cluster transform, then threshold.

    Pixels reaching the threshold are marked together with their image under
    the chosen transform (rounded), so both copies of a duplicated region show up.
    """
    lum = img.luminance
    hgt, wid = lum.shape
    centers = np.asarray(centers, dtype=np.float64)
    transforms = list(transforms)
    if usable is None:
        usable = np.ones(len(transforms), dtype=bool)
    usable = np.array(usable, dtype=bool)
    for i, t in enumerate(transforms):
        if t.is_degenerate():
            usable[i] = False

    corr = np.full((hgt, wid), np.nan)
    mask = np.zeros((hgt, wid), dtype=bool)
    if not usable.any():
        log.warning("no usable cluster transform; returning an empty mask")
        return DetectionMap(corr, mask)

    owner = nearest_cluster(centers, usable, wid, hgt)
    offsets = window_offsets(window)

    def rows_task(r0):
        r1 = min(r0 + _ROWS_PER_TASK, hgt)
        ys, xs = np.mgrid[r0:r1, 0:wid]
        own = owner[r0:r1].ravel()
        pts = np.stack([xs.ravel(), ys.ravel()], axis=1).astype(np.float64)
        out = np.full(len(pts), np.nan)
        for i in np.unique(own):
            sel = own == i
            out[sel] = correlations(lum, pts[sel], transforms[i], offsets)
        corr[r0:r1] = out.reshape(r1 - r0, wid)

    starts = range(0, hgt, _ROWS_PER_TASK)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            list(pool.map(rows_task, starts))
    else:
        for r0 in starts:
            rows_task(r0)

    src = np.nan_to_num(corr, nan=-np.inf) >= binarize_threshold
    mask |= src
    ys, xs = np.nonzero(src)
    if len(xs):
        pts = np.stack([xs, ys], axis=1).astype(np.float64)
        own = owner[ys, xs]
        for i in np.unique(own):
            sel = own == i
            dst = np.rint(transforms[i].apply(pts[sel])).astype(int)
            ok = (dst[:, 0] >= 0) & (dst[:, 0] < wid) & (dst[:, 1] >= 0) & (dst[:, 1] < hgt)
            mask[dst[ok, 1], dst[ok, 0]] = True
    return DetectionMap(corr, mask)
