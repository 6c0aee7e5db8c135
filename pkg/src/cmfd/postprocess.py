"""Mask cleanup: drop tiny components, close, fill enclosed holes."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

_EIGHT = np.ones((3, 3), dtype=bool)


def disk(radius: int) -> np.ndarray:
    r = int(radius)
    yy, xx = np.mgrid[-r:r + 1, -r:r + 1]
    return xx ** 2 + yy ** 2 <= r * r


def remove_small_regions(mask, min_fraction: float = 0.001) -> np.ndarray:
    """Remove 8-connected components with area strictly below ``min_fraction`` of the image."""
    if not 0.0 <= min_fraction < 1.0:
        raise ValueError("min_fraction must lie in [0, 1)")
    m = np.asarray(mask, dtype=bool)
    if not m.any():
        return m.copy()
    labels, n = ndimage.label(m, structure=_EIGHT)
    areas = np.bincount(labels.ravel(), minlength=n + 1)
    keep = areas >= min_fraction * m.size
    keep[0] = False
    return keep[labels]


def morphological_smooth(mask, radius: int = 3) -> np.ndarray:
    """Closing with a disc of ``radius`` followed by hole filling.

    The mask is padded by the radius first so the closing does not eat into
    regions touching the image border.
    """
    if radius < 1:
        raise ValueError("radius must be >= 1")
    m = np.asarray(mask, dtype=bool)
    if not m.any():
        return m.copy()
    pad = radius + 1
    padded = np.pad(m, pad)
    closed = ndimage.binary_closing(padded, structure=disk(radius))[pad:-pad, pad:-pad]
    return ndimage.binary_fill_holes(closed | m)


def clean_mask(mask, min_fraction: float = 0.001, radius: int = 3) -> np.ndarray:
    return morphological_smooth(remove_small_regions(mask, min_fraction), radius)
