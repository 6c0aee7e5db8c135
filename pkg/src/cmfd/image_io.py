"""Image loading, grayscale conversion and mask/overlay output."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

# ITU-R BT.601 luma weights
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


class ImageFormatError(ValueError):
    """Raised when a file exists but cannot be decoded as an image."""


@dataclass(frozen=True)
class GrayImage:
    """Immutable luminance raster, values in [0, 255], indexed ``[row, col]``."""

    luminance: np.ndarray

    def __post_init__(self):
        lum = np.array(self.luminance, dtype=np.float64, copy=True)
        if lum.ndim != 2 or lum.shape[0] == 0 or lum.shape[1] == 0:
            raise ValueError(f"luminance must be a nonempty 2D array, got shape {lum.shape}")
        lum.setflags(write=False)
        object.__setattr__(self, "luminance", lum)

    @property
    def width(self) -> int:
        return self.luminance.shape[1]

    @property
    def height(self) -> int:
        return self.luminance.shape[0]

    def to_uint8(self) -> np.ndarray:
        return np.clip(np.rint(self.luminance), 0, 255).astype(np.uint8)


def to_gray(pixels: np.ndarray) -> np.ndarray:
    """Convert an ``HxW``, ``HxWx3`` or ``HxWx4`` array to float luminance.

    Alpha is ignored. Already-gray input is returned unchanged (as float).
    """
    arr = np.asarray(pixels, dtype=np.float64)
    if arr.ndim == 2:
        return arr.copy()
    if arr.ndim == 3 and arr.shape[2] in (3, 4):
        return arr[..., :3] @ LUMA_WEIGHTS
    if arr.ndim == 3 and arr.shape[2] in (1, 2):
        return arr[..., 0].copy()
    raise ValueError(f"unsupported pixel array shape {arr.shape}")


def load_image(path) -> GrayImage:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such image file: {path}")
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode in ("L", "I", "F"):
                pixels = np.asarray(im, dtype=np.float64)
            elif im.mode == "LA":
                pixels = np.asarray(im.getchannel("L"), dtype=np.float64)
            else:
                pixels = np.asarray(im.convert("RGB"), dtype=np.float64)
    except UnidentifiedImageError as exc:
        raise ImageFormatError(f"cannot decode image {path}: {exc}") from exc
    return GrayImage(to_gray(pixels))


def save_image(img: GrayImage, path) -> None:
    """Write a grayscale PNG (luminance rounded to 8 bits)."""
    Image.fromarray(img.to_uint8(), mode="L").save(Path(path), format="PNG")


def _mask_array(mask) -> np.ndarray:
    arr = getattr(mask, "mask", mask)
    return np.asarray(arr, dtype=bool)


def write_mask(mask, path) -> None:
    """Write a binary PNG with forged pixels 255 and clean pixels 0.

    ``mask`` is a boolean array or anything with a ``mask`` attribute
    (e.g. a :class:`~cmfd.localization.DetectionMap`).
    """
    arr = _mask_array(mask)
    Image.fromarray(np.where(arr, 255, 0).astype(np.uint8), mode="L").save(Path(path), format="PNG")


def read_mask(path) -> np.ndarray:
    with Image.open(Path(path)) as im:
        return np.asarray(im.convert("L")) > 127


def write_overlay(img: GrayImage, mask, path, color=(255, 0, 0), alpha: float = 0.45) -> None:
    """Alpha-blend ``mask`` in ``color`` over the grayscale image and save as RGB PNG."""
    arr = _mask_array(mask)
    base = np.repeat(img.luminance[..., None], 3, axis=2)
    tint = np.asarray(color, dtype=np.float64)
    out = np.where(arr[..., None], (1 - alpha) * base + alpha * tint, base)
    Image.fromarray(np.clip(np.rint(out), 0, 255).astype(np.uint8), mode="RGB").save(Path(path), format="PNG")


def write_float_map(values: np.ndarray, path, lo: float = -1.0, hi: float = 1.0) -> None:
    """Save a real-valued map linearly rescaled from ``[lo, hi]`` to ``[0, 255]``; NaN maps to 0."""
    v = np.nan_to_num(np.asarray(values, dtype=np.float64), nan=lo)
    scaled = (np.clip(v, lo, hi) - lo) / (hi - lo) * 255.0
    Image.fromarray(np.rint(scaled).astype(np.uint8), mode="L").save(Path(path), format="PNG")
