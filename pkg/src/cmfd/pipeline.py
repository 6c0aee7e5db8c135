"""End-to-end detection: keypoints, g2NN, joint optimisation, correlation, cleanup."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import cv2
import numpy as np

from .affine import DecompositionError, decompose_affine
from .features import DescriptorSet, SiftConfig, detect_and_describe
from .image_io import GrayImage
from .localization import DetectionMap, build_detection_map
from .matching import MatchSet, g2nn_match
from .optimizer import OptimizationResult, OptimizerConfig, optimize
from .postprocess import clean_mask

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1


@dataclass
class PipelineConfig:
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    sift: SiftConfig = field(default_factory=SiftConfig)
    g2nn_threshold: float = 0.7
    min_spatial_dist: float = 10.0
    corr_threshold: float = 0.6
    window: int = 7
    min_region: float = 0.001
    morph_radius: int = 3
    # three pairs fit any affine exactly, so a cluster needs a fourth to carry evidence
    min_cluster_points: int = 4
    seed: int = 0
    threads: int = 1


@dataclass
class DetectionResult:
    descriptors: DescriptorSet
    matches: MatchSet
    optimization: OptimizationResult | None
    usable: np.ndarray
    detection: DetectionMap
    mask: np.ndarray

    @property
    def is_forged(self) -> bool:
        return bool(self.mask.any())

    @property
    def state(self):
        return None if self.optimization is None else self.optimization.phase2

    def clusters(self) -> list:
        """Usable clusters with their transform entries and decomposition."""
        st = self.state
        if st is None:
            return []
        sizes = st.cluster_sizes()
        out = []
        for i in np.flatnonzero(self.usable):
            h = st.transforms[i]
            rec = {
                "index": int(i),
                "center": [float(st.V[i, 0]), float(st.V[i, 1])],
                "points": int(sizes[i]),
                "H": h.to_dict(),
            }
            try:
                theta, sx, sy, tx, ty = decompose_affine(h)
                rec.update(theta=math.degrees(theta), sx=sx, sy=sy, tx=tx, ty=ty)
            except DecompositionError:
                rec.update(theta=None, sx=None, sy=None, tx=h.tx, ty=h.ty)
            out.append(rec)
        return out

    def to_json(self) -> dict:
        return {
            "version": SCHEMA_VERSION,
            "is_forged": self.is_forged,
            "keypoint_count": len(self.descriptors),
            "match_count": len(self.matches),
            "active_match_count": 0 if self.state is None else int(self.state.active.sum()),
            "forged_pixels": int(self.mask.sum()),
            "clusters": self.clusters(),
        }


def usable_clusters(result: OptimizationResult, min_points: int) -> np.ndarray:
    st = result.phase2
    sizes = st.cluster_sizes()
    ok = ~st.empty & ~st.degenerate & (sizes >= min_points)
    for i, h in enumerate(st.transforms):
        if h.is_degenerate():
            ok[i] = False
    return ok


def detect(img: GrayImage, cfg: PipelineConfig | None = None,
           descriptors: DescriptorSet | None = None, trace=None) -> DetectionResult:
    cfg = cfg or PipelineConfig()
    cv2.setNumThreads(max(int(cfg.threads), 1))
    ds = descriptors if descriptors is not None else detect_and_describe(img, cfg.sift)
    matches = g2nn_match(ds, cfg.g2nn_threshold, cfg.optimizer.K, cfg.min_spatial_dist, cfg.threads)
    log.info("%d keypoints, %d matched points", len(ds), len(matches))

    shape = (img.height, img.width)
    empty_map = DetectionMap(np.full(shape, np.nan), np.zeros(shape, dtype=bool))
    if len(matches) < 3:
        return DetectionResult(ds, matches, None, np.zeros(0, dtype=bool), empty_map,
                               np.zeros(shape, dtype=bool))

    opt = optimize(matches, ds, cfg.optimizer, seed=cfg.seed, trace=trace)
    usable = usable_clusters(opt, cfg.min_cluster_points)
    st = opt.phase2
    dmap = build_detection_map(img, st.V, st.transforms, usable, cfg.corr_threshold,
                               cfg.window, cfg.threads)
    mask = clean_mask(dmap.mask, cfg.min_region, cfg.morph_radius)
    return DetectionResult(ds, matches, opt, usable, dmap, mask)
