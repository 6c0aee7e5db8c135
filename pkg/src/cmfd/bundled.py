"""Images shipped with the package (see scripts/make_bundled_images.py)."""

from __future__ import annotations

from pathlib import Path

from .image_io import GrayImage, load_image

DATA_DIR = Path(__file__).resolve().parent / "data"

# placement of the copied block used with the bundled original; every catalogue
# attack keeps the paste inside the image and off the source block
DEFAULT_SOURCE_RECT = (200, 180, 110, 110)
DEFAULT_DEST = (60, 330)


def original() -> GrayImage:
    """The 512x512 textured original."""
    return load_image(DATA_DIR / "original.png")


def clean_paths() -> list:
    return sorted((DATA_DIR / "clean").glob("*.png"))


def clean_images() -> list:
    """``(name, GrayImage)`` for every bundled clean image, sorted by name."""
    return [(p.stem, load_image(p)) for p in clean_paths()]


def forgery_path() -> Path:
    return DATA_DIR / "forgery_A5.png"
