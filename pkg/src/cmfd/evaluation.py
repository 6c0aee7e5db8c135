"""Synthetic copy-move attacks and image / pixel / transform-level scoring."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .affine import AffineTransform, DecompositionError, decompose_affine
from .image_io import GrayImage, load_image
from .localization import bilinear

log = logging.getLogger(__name__)

# (name, sx, sy, theta in degrees)
ATTACK_CATALOGUE = [
    ("A1", 1.0, 1.0, 0.0),
    ("A2", 1.0, 1.0, 10.0),
    ("A3", 1.0, 1.0, 20.0),
    ("A4", 1.0, 1.0, 30.0),
    ("A5", 1.0, 1.0, 40.0),
    ("A6", 1.0, 1.0, 50.0),
    ("A7", 1.2, 1.2, 0.0),
    ("A8", 1.3, 1.3, 0.0),
    ("A9", 0.8, 0.8, 0.0),
    ("A10", 0.75, 0.85, 0.0),
    ("A11", 0.85, 0.75, 0.0),
    ("A12", 1.2, 1.2, 30.0),
    ("A13", 0.8, 0.8, 30.0),
    ("A14", 0.75, 0.85, 35.0),
    ("A15", 1.4, 1.2, 35.0),
]

PARAMS = ("theta", "sx", "sy", "tx", "ty")


class AttackError(ValueError):
    """The attack does not fit inside the image."""


@dataclass
class AttackSpec:
    """Copy ``source_rect`` (x, y, w, h), rotate by ``theta`` degrees and scale
    about its centre, and paste it so the centre moves by ``dest - (x, y)``.
    For an untransformed copy ``dest`` is the top-left corner of the paste."""

    sx: float
    sy: float
    theta: float
    source_rect: tuple
    dest: tuple
    name: str = ""

    def __post_init__(self):
        if self.sx <= 0 or self.sy <= 0:
            raise ValueError("scale factors must be positive")
        self.source_rect = tuple(int(v) for v in self.source_rect)
        self.dest = tuple(float(v) for v in self.dest)

    @property
    def source_center(self) -> np.ndarray:
        x, y, w, h = self.source_rect
        return np.array([x + (w - 1) / 2.0, y + (h - 1) / 2.0])

    @property
    def dest_center(self) -> np.ndarray:
        x, y, _, _ = self.source_rect
        return self.source_center + (np.array(self.dest) - np.array([x, y], dtype=float))

    def transform(self) -> AffineTransform:
        """Exact source -> destination map."""
        lin = AffineTransform.from_params(math.radians(self.theta), self.sx, self.sy)
        t = self.dest_center - lin.linear @ self.source_center
        return AffineTransform(lin.a11, lin.a12, lin.a21, lin.a22, float(t[0]), float(t[1]))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["source_rect"] = list(self.source_rect)
        d["dest"] = list(self.dest)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AttackSpec":
        return cls(sx=d["sx"], sy=d["sy"], theta=d["theta"], source_rect=tuple(d["source_rect"]),
                   dest=tuple(d["dest"]), name=d.get("name", ""))


def catalogue_attacks(source_rect, dest) -> list:
    """The fifteen rotation/scale scenarios, all with the same placement."""
    return [AttackSpec(sx, sy, th, source_rect, dest, name) for name, sx, sy, th in ATTACK_CATALOGUE]


def load_manifest(path) -> list:
    return [AttackSpec.from_dict(d) for d in json.loads(Path(path).read_text())]


def save_manifest(attacks, path) -> None:
    Path(path).write_text(json.dumps([a.to_dict() for a in attacks], indent=1))


def attack_regions(shape, spec: AttackSpec):
    """Boolean masks of the source rectangle and of the pasted footprint.

    A pixel belongs to the paste when its centre maps back inside the source
    rectangle (pixel-centre sampling of the half-coverage rule).
    """
    hgt, wid = shape
    x0, y0, w, h = spec.source_rect
    if w <= 0 or h <= 0 or x0 < 0 or y0 < 0 or x0 + w > wid or y0 + h > hgt:
        raise AttackError(f"source rect {spec.source_rect} outside {wid}x{hgt} image")
    tr = spec.transform()
    corners = np.array([[x0 - 0.5, y0 - 0.5], [x0 + w - 0.5, y0 - 0.5],
                        [x0 - 0.5, y0 + h - 0.5], [x0 + w - 0.5, y0 + h - 0.5]])
    moved = tr.apply(corners)
    eps = 1e-9
    if (moved[:, 0].min() < -0.5 - eps or moved[:, 1].min() < -0.5 - eps
            or moved[:, 0].max() > wid - 0.5 + eps or moved[:, 1].max() > hgt - 0.5 + eps):
        raise AttackError(f"attack {spec.name or spec} moves the region outside the image")

    source = np.zeros(shape, dtype=bool)
    source[y0:y0 + h, x0:x0 + w] = True

    ys, xs = np.mgrid[0:hgt, 0:wid]
    q = _back_project(tr, spec, xs.ravel().astype(float), ys.ravel().astype(float))
    inside = ((q[:, 0] >= x0 - 0.5) & (q[:, 0] < x0 + w - 0.5)
              & (q[:, 1] >= y0 - 0.5) & (q[:, 1] < y0 + h - 0.5))
    return source, inside.reshape(shape)


def _back_project(tr: AffineTransform, spec: AttackSpec, xs, ys) -> np.ndarray:
    inv = np.linalg.inv(tr.linear)
    rel = np.stack([xs, ys], axis=1) - spec.dest_center
    return rel @ inv.T + spec.source_center


def apply_attack(img: GrayImage, spec: AttackSpec):
    """Return ``(forged, truth_mask, truth_transform)``."""
    source, pasted = attack_regions((img.height, img.width), spec)
    tr = spec.transform()
    ys, xs = np.nonzero(pasted)
    q = _back_project(tr, spec, xs.astype(float), ys.astype(float))
    lum = np.array(img.luminance)
    lum[ys, xs] = bilinear(img.luminance, q[:, 0], q[:, 1])
    return GrayImage(lum), source | pasted, tr


# ------------------------------------------------------------------- scoring

def _rate(num: int, den: int):
    return None if den == 0 else num / den


def score_image_level(decisions):
    """``decisions`` is a list of ``(is_forged_truth, is_forged_predicted)``.

    Returns ``(tpr, fpr)``; either is None when its denominator is empty.
    """
    decisions = list(decisions)
    if not decisions:
        raise ValueError("no decisions to score")
    tp = sum(1 for t, p in decisions if t and p)
    fn = sum(1 for t, p in decisions if t and not p)
    fp = sum(1 for t, p in decisions if not t and p)
    tn = sum(1 for t, p in decisions if not t and not p)
    return _rate(tp, tp + fn), _rate(fp, fp + tn)


def pixel_confusion(truth_mask, predicted_mask):
    t = np.asarray(truth_mask, dtype=bool)
    p = np.asarray(predicted_mask, dtype=bool)
    if t.shape != p.shape:
        raise ValueError(f"mask shapes differ: {t.shape} vs {p.shape}")
    tp = int(np.sum(t & p))
    fn = int(np.sum(t & ~p))
    fp = int(np.sum(~t & p))
    tn = int(np.sum(~t & ~p))
    return tp, fp, tn, fn


def score_pixel_level(truth_mask, predicted_mask):
    tp, fp, tn, fn = pixel_confusion(truth_mask, predicted_mask)
    return _rate(tp, tp + fn), _rate(fp, fp + tn)


def angle_difference(a_deg: float, b_deg: float) -> float:
    """Absolute angular difference wrapped to [0, 180]."""
    d = abs(a_deg - b_deg) % 360.0
    return min(d, 360.0 - d)


def about_pivot(h: AffineTransform, pivot) -> AffineTransform:
    """Same map written in coordinates centred on ``pivot``; its translation is ``h(pivot) - pivot``."""
    c = np.asarray(pivot, dtype=np.float64)
    t = h.apply(c) - c
    return AffineTransform(h.a11, h.a12, h.a21, h.a22, float(t[0]), float(t[1]))


def score_transform(truth: AffineTransform, estimated: AffineTransform, pivot=None) -> dict:
    """Absolute per-parameter errors: theta in degrees, scales, translation in pixels.

    With ``pivot`` the translations compared are the displacements of that
    point rather than of the image origin.
    """
    if pivot is not None:
        truth, estimated = about_pivot(truth, pivot), about_pivot(estimated, pivot)
    t = decompose_affine(truth)
    e = decompose_affine(estimated)
    return {
        "theta": angle_difference(math.degrees(t[0]), math.degrees(e[0])),
        "sx": abs(t[1] - e[1]),
        "sy": abs(t[2] - e[2]),
        "tx": abs(t[3] - e[3]),
        "ty": abs(t[4] - e[4]),
    }


def select_estimate(result, source_mask, pasted_mask):
    """Pick the estimated source -> destination transform from a detection.

    Usable clusters centred in the source region contribute their transform,
    those centred in the paste contribute its inverse; the one owning the
    most active points wins.
    """
    st = result.state
    if st is None:
        return None
    hgt, wid = source_mask.shape
    sizes = st.cluster_sizes()
    best = None
    for i in np.flatnonzero(result.usable):
        cx, cy = int(round(st.V[i, 0])), int(round(st.V[i, 1]))
        if not (0 <= cx < wid and 0 <= cy < hgt):
            continue
        h = st.transforms[i]
        if source_mask[cy, cx]:
            cand = h
        elif pasted_mask[cy, cx]:
            try:
                cand = h.inverse()
            except DecompositionError:
                continue
        else:
            continue
        if best is None or sizes[i] > best[0]:
            best = (sizes[i], cand)
    return None if best is None else best[1]


# ----------------------------------------------------------------- benchmark

@dataclass
class EvalReport:
    tpr: float | None
    fpr: float | None
    pixel_tpr: float | None
    pixel_fpr: float | None
    mae: dict
    images: list = field(default_factory=list)
    attack_table: list = field(default_factory=list)

    def to_json(self) -> dict:
        from .pipeline import SCHEMA_VERSION

        return {
            "version": SCHEMA_VERSION,
            "summary": {
                "tpr": self.tpr,
                "fpr": self.fpr,
                "pixel_tpr": self.pixel_tpr,
                "pixel_fpr": self.pixel_fpr,
                "mae": self.mae,
            },
            "attacks": self.attack_table,
            "images": self.images,
        }


def _mean(values):
    vals = [v for v in values if v is not None]
    return float(np.mean(vals)) if vals else None


def evaluate_forgery(img: GrayImage, spec: AttackSpec, cfg) -> dict:
    """Forge ``img`` with ``spec``, run detection and score it."""
    from .pipeline import detect

    forged, truth, tr = apply_attack(img, spec)
    source, pasted = attack_regions((img.height, img.width), spec)
    res = detect(forged, cfg)
    pivot = spec.source_center
    ptpr, pfpr = score_pixel_level(truth, res.mask)
    rec = {
        "attack": spec.name,
        "truth_forged": True,
        "predicted": res.is_forged,
        "pixel_tpr": ptpr,
        "pixel_fpr": pfpr,
        "keypoints": len(res.descriptors),
        "matches": len(res.matches),
        "truth": dict(zip(PARAMS, _params_deg(about_pivot(tr, pivot)))),
        "estimate": None,
        "errors": None,
    }
    est = select_estimate(res, source, pasted)
    if est is not None:
        try:
            rec["estimate"] = dict(zip(PARAMS, _params_deg(about_pivot(est, pivot))))
            rec["errors"] = score_transform(tr, est, pivot)
        except DecompositionError:
            pass
    return rec


def _params_deg(h: AffineTransform):
    th, sx, sy, tx, ty = decompose_affine(h)
    return (math.degrees(th), sx, sy, tx, ty)


def evaluate_clean(img: GrayImage, cfg) -> dict:
    from .pipeline import detect

    res = detect(img, cfg)
    return {
        "attack": None,
        "truth_forged": False,
        "predicted": res.is_forged,
        "pixel_tpr": None,
        "pixel_fpr": score_pixel_level(np.zeros_like(res.mask), res.mask)[1],
        "keypoints": len(res.descriptors),
        "matches": len(res.matches),
    }


def summarize(records: list) -> EvalReport:
    decisions = [(r["truth_forged"], r["predicted"]) for r in records if "error" not in r]
    tpr, fpr = score_image_level(decisions) if decisions else (None, None)
    forged = [r for r in records if r["truth_forged"] and "error" not in r]
    mae = {p: _mean([r["errors"][p] for r in forged if r.get("errors")]) for p in PARAMS}
    mae["missing"] = sum(1 for r in forged if not r.get("errors"))
    table = []
    for r in forged:
        row = {"image": r.get("name"), "attack": r["attack"]}
        for p in PARAMS:
            row[p] = {
                "true": r["truth"][p],
                "estimate": None if r["estimate"] is None else r["estimate"][p],
                "error": None if r["errors"] is None else r["errors"][p],
            }
        table.append(row)
    return EvalReport(
        tpr=tpr,
        fpr=fpr,
        pixel_tpr=_mean([r["pixel_tpr"] for r in forged]),
        pixel_fpr=_mean([r["pixel_fpr"] for r in forged]),
        mae=mae,
        images=records,
        attack_table=table,
    )


def run_benchmark(originals_dir, attacks, cfg=None, seed: int | None = None,
                  include_clean: bool = True) -> EvalReport:
    """Forge every original with every attack, detect, and aggregate scores.

    Per-image failures (unreadable file, attack not fitting) are recorded
    with an ``error`` field and excluded from the rates.
    """
    from dataclasses import replace

    from .pipeline import PipelineConfig

    cfg = cfg or PipelineConfig()
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    paths = sorted(p for p in Path(originals_dir).iterdir()
                   if p.suffix.lower() in (".png", ".jpg", ".jpeg"))
    records = []
    for path in paths:
        try:
            img = load_image(path)
        except (OSError, ValueError) as exc:
            records.append({"name": path.name, "attack": None, "truth_forged": False,
                            "predicted": False, "error": str(exc)})
            continue
        if include_clean:
            rec = evaluate_clean(img, cfg)
            rec["name"] = path.name
            records.append(rec)
        for spec in attacks:
            try:
                rec = evaluate_forgery(img, spec, cfg)
            except (AttackError, ValueError, np.linalg.LinAlgError) as exc:
                log.warning("%s / %s failed: %s", path.name, spec.name, exc)
                rec = {"attack": spec.name, "truth_forged": True, "predicted": False,
                       "error": str(exc)}
            rec["name"] = path.name
            records.append(rec)
    return summarize(records)
