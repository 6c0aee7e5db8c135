"""Regenerate the images shipped in ``src/cmfd/data`` from scikit-image's samples.

* ``original.png``: the 512x512 cameraman, the textured original for the attack benchmark.
* ``clean/*.png``: grayscale crops of every photograph-like sample image. Each
  source gives its central 384x384 crop, plus the top-left crop when that lies at
  least 96 px away from the centre one. No image is chosen by how the detector
  behaves on it.
* ``forgery_A5.png`` / ``forgery_A5_truth.png`` / ``forgery_A5.json``: one
  synthetic forgery of the original, for quick CLI checks.

Run: python3 scripts/make_bundled_images.py
"""

import json
import os
from pathlib import Path

import numpy as np
from skimage import data, io

from cmfd.bundled import DATA_DIR, DEFAULT_DEST, DEFAULT_SOURCE_RECT
from cmfd.evaluation import catalogue_attacks, apply_attack
from cmfd.image_io import GrayImage, save_image, to_gray, write_mask

SOURCES = [
    "astronaut.png", "brick.png", "camera.png", "cell.png", "chelsea.png", "clock_motion.png",
    "coffee.png", "coins.png", "color.png", "grass.png", "gravel.png", "horse.png",
    "hubble_deep_field.jpg", "ihc.png", "moon.png", "motorcycle_left.png",
    "motorcycle_right.png", "page.png", "phantom.png", "retina.jpg", "rocket.jpg", "text.png",
]
CROP = 384
MIN_SHIFT = 96


def crops(a):
    h, w = a.shape
    cy, cx = max((h - CROP) // 2, 0), max((w - CROP) // 2, 0)
    out = [("c", a[cy:cy + CROP, cx:cx + CROP])]
    if max(cy, cx) >= MIN_SHIFT:
        out.append(("tl", a[:CROP, :CROP]))
    return out


def main():
    src_dir = Path(os.path.dirname(data.__file__))
    clean = DATA_DIR / "clean"
    clean.mkdir(parents=True, exist_ok=True)
    for old in clean.glob("*.png"):
        old.unlink()
    n = 0
    for name in SOURCES:
        lum = np.round(to_gray(io.imread(src_dir / name)).astype(np.float64))
        for tag, c in crops(lum):
            save_image(GrayImage(np.clip(c, 0, 255)), clean / f"{Path(name).stem}_{tag}.png")
            n += 1
    print(f"{n} clean images in {clean}")

    original = GrayImage(data.camera()[:512, :512].astype(np.float64))
    save_image(original, DATA_DIR / "original.png")
    spec = next(s for s in catalogue_attacks(DEFAULT_SOURCE_RECT, DEFAULT_DEST) if s.name == "A5")
    forged, truth_mask, truth = apply_attack(original, spec)
    save_image(forged, DATA_DIR / "forgery_A5.png")
    write_mask(truth_mask, DATA_DIR / "forgery_A5_truth.png")
    (DATA_DIR / "forgery_A5.json").write_text(
        json.dumps({"attack": spec.to_dict(), "H": truth.to_dict()}, indent=2) + "\n")


if __name__ == "__main__":
    main()
