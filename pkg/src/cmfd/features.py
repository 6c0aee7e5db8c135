"""Keypoint detection / description and the keypoint CSV interchange format.

Detection wraps OpenCV's SIFT (DoG extrema, dominant orientation, 4x4x8
gradient histograms). On top of that this module enforces the conventions
the rest of the pipeline relies on: border exclusion, deduplication of
orientation twins, unit-norm descriptors and a deterministic ordering.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

from .image_io import GrayImage

DESCRIPTOR_SIZE = 128
CSV_HEADER = ["x", "y", "scale", "orientation"] + [f"d{i}" for i in range(DESCRIPTOR_SIZE)]


class KeypointFormatError(ValueError):
    """Malformed keypoint CSV; the message names the offending line."""


@dataclass(frozen=True)
class Keypoint:
    x: float
    y: float
    scale: float
    orientation: float


@dataclass
class SiftConfig:
    """Detector settings. These are OpenCV's SIFT defaults."""

    n_octave_layers: int = 3
    contrast_threshold: float = 0.04
    edge_threshold: float = 10.0
    sigma: float = 1.6
    border: int = 16
    min_size: int = 16


@dataclass
class DescriptorSet:
    keypoints: list = field(default_factory=list)
    descriptors: np.ndarray = field(default_factory=lambda: np.zeros((0, DESCRIPTOR_SIZE)))

    def __post_init__(self):
        self.descriptors = np.asarray(self.descriptors, dtype=np.float64).reshape(-1, DESCRIPTOR_SIZE)
        if len(self.keypoints) != self.descriptors.shape[0]:
            raise ValueError(
                f"{len(self.keypoints)} keypoints but {self.descriptors.shape[0]} descriptor rows"
            )

    def __len__(self) -> int:
        return len(self.keypoints)

    @property
    def positions(self) -> np.ndarray:
        """``N x 2`` array of (x, y)."""
        if not self.keypoints:
            return np.zeros((0, 2))
        return np.array([(k.x, k.y) for k in self.keypoints], dtype=np.float64)

    @property
    def homogeneous(self) -> np.ndarray:
        """``N x 3`` array of (x, y, 1)."""
        pos = self.positions
        return np.hstack([pos, np.ones((len(pos), 1))])


def detect_and_describe(img: GrayImage, config: SiftConfig | None = None) -> DescriptorSet:
    cfg = config or SiftConfig()
    if img.width < cfg.min_size or img.height < cfg.min_size:
        return DescriptorSet()

    sift = cv2.SIFT_create(
        nfeatures=0,
        nOctaveLayers=cfg.n_octave_layers,
        contrastThreshold=cfg.contrast_threshold,
        edgeThreshold=cfg.edge_threshold,
        sigma=cfg.sigma,
    )
    raw_kps, raw_des = sift.detectAndCompute(img.to_uint8(), None)
    if raw_des is None or len(raw_kps) == 0:
        return DescriptorSet()

    best = {}
    for kp, des in zip(raw_kps, raw_des):
        x, y = float(kp.pt[0]), float(kp.pt[1])
        if not (cfg.border <= x < img.width - cfg.border and cfg.border <= y < img.height - cfg.border):
            continue
        norm = float(np.linalg.norm(des))
        if norm == 0.0:
            continue
        key = (x, y, float(kp.size))
        # keep the strongest response; first seen wins on equal response
        if key not in best or kp.response > best[key][0]:
            theta = math.radians(kp.angle) % (2 * math.pi)
            best[key] = (kp.response, Keypoint(x, y, float(kp.size), theta), des / norm)

    ordered = sorted(best.values(), key=lambda r: (r[1].y, r[1].x, r[1].scale, r[1].orientation))
    if not ordered:
        return DescriptorSet()
    return DescriptorSet(
        keypoints=[r[1] for r in ordered],
        descriptors=np.vstack([r[2] for r in ordered]).astype(np.float64),
    )


def save_keypoints(ds: DescriptorSet, path) -> None:
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for kp, des in zip(ds.keypoints, ds.descriptors):
            writer.writerow([repr(float(v)) for v in (kp.x, kp.y, kp.scale, kp.orientation, *des)])


def load_keypoints(path) -> DescriptorSet:
    path = Path(path)
    keypoints, rows = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if lineno == 1:
                if [c.strip() for c in row] != CSV_HEADER:
                    raise KeypointFormatError(f"{path}:1: bad header")
                continue
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4 + DESCRIPTOR_SIZE:
                raise KeypointFormatError(
                    f"{path}:{lineno}: expected {4 + DESCRIPTOR_SIZE} fields, got {len(row)}"
                )
            try:
                vals = [float(c) for c in row]
            except ValueError as exc:
                raise KeypointFormatError(f"{path}:{lineno}: {exc}") from exc
            keypoints.append(Keypoint(*vals[:4]))
            rows.append(vals[4:])
    des = np.array(rows, dtype=np.float64) if rows else np.zeros((0, DESCRIPTOR_SIZE))
    return DescriptorSet(keypoints=keypoints, descriptors=des)
