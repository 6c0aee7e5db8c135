"""Command line entry point: ``cmfd detect | forge | eval | match-debug``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .evaluation import (
    AttackError,
    AttackSpec,
    ATTACK_CATALOGUE,
    apply_attack,
    load_manifest,
    run_benchmark,
    catalogue_attacks,
)
from .features import SiftConfig, load_keypoints, save_keypoints
from .image_io import load_image, save_image, write_float_map, write_mask, write_overlay
from .optimizer import PAIR_WEIGHTS, OptimizerConfig, harden_alpha
from .pipeline import SCHEMA_VERSION, PipelineConfig, detect

log = logging.getLogger("cmfd")

_SIFT_HELP = (
    "Keypoints come from OpenCV SIFT with its default settings: 3 layers per "
    "octave, contrast threshold 0.04, edge threshold 10, sigma 1.6. Keypoints "
    "closer than 16 px to the border or smaller than 16 px are dropped."
)
_SCHEDULE_HELP = (
    "Pruning threshold T(iter) = T_min + (T_max - T_min) * (1 - sigmoid((iter/iter_max "
    "- theta) / tau)). With the defaults it decays from about 1000 at the first iteration "
    "to about 0.58 at iter_max; T_min is a lower bound that is never reached."
)


def _pair(text: str, n: int, cast=float):
    parts = text.split(",")
    if len(parts) != n:
        raise argparse.ArgumentTypeError(f"expected {n} comma-separated values, got {text!r}")
    try:
        return tuple(cast(p) for p in parts)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _rect(text):
    return _pair(text, 4, int)


def _point(text):
    return _pair(text, 2, int)


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _add_pipeline_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("pipeline parameters")
    g.add_argument("--clusters", "-C", type=_positive_int, default=5, help="number of clusters C (5)")
    g.add_argument("--neighbors", "-K", type=_positive_int, default=3,
                   help="descriptor neighbours per matched point K (3)")
    g.add_argument("--P", type=float, default=2.0, help="matching exponent P (2)")
    g.add_argument("--m", type=float, default=2.0, help="fuzzification exponent m (2)")
    g.add_argument("--iter-max", type=_positive_int, default=500, help="phase iterations (500)")
    g.add_argument("--t-max", type=float, default=2000.0, help="initial pruning threshold (2000)")
    g.add_argument("--t-min", type=float, default=0.1, help="final pruning threshold bound (0.1)")
    g.add_argument("--sched-theta", type=float, default=0.001, help="schedule midpoint (0.001)")
    g.add_argument("--sched-tau", type=float, default=0.12, help="schedule width (0.12)")
    g.add_argument("--no-prune", action="store_true", help="disable outlier pruning")
    g.add_argument("--pair-weight", choices=PAIR_WEIGHTS, default="uniform",
                   help="weight of each neighbour pair in the transform term: 1 (uniform) "
                        "or the squared descriptor distance (descriptor)")
    g.add_argument("--g2nn", type=float, default=0.7, help="g2NN ratio threshold (0.7)")
    g.add_argument("--min-dist", type=float, default=10.0,
                   help="minimum spatial distance between matched keypoints in px (10)")
    g.add_argument("--corr-threshold", type=float, default=0.6, help="correlation threshold (0.6)")
    g.add_argument("--window", type=int, default=7, help="correlation window size, odd (7)")
    g.add_argument("--min-region", type=float, default=0.001,
                   help="drop mask components below this fraction of the image (0.001)")
    g.add_argument("--morph-radius", type=_positive_int, default=3, help="closing disc radius (3)")
    g.add_argument("--min-cluster-points", type=_positive_int, default=4,
                   help="active points a cluster must own to be used for localisation (4)")
    g.add_argument("--seed", type=int, default=0, help="seed for every stochastic choice (0)")
    g.add_argument("--threads", type=_positive_int, default=os.cpu_count() or 1,
                   help="worker threads; results do not depend on it (default: all cores)")


def config_from_args(args) -> PipelineConfig:
    opt = OptimizerConfig(C=args.clusters, K=args.neighbors, P=args.P, m=args.m,
                          iter_max=args.iter_max, T_max=args.t_max, T_min=args.t_min,
                          theta=args.sched_theta, tau=args.sched_tau, prune=not args.no_prune,
                          pair_weight=args.pair_weight)
    return PipelineConfig(optimizer=opt, sift=SiftConfig(), g2nn_threshold=args.g2nn,
                          min_spatial_dist=args.min_dist, corr_threshold=args.corr_threshold,
                          window=args.window, min_region=args.min_region,
                          morph_radius=args.morph_radius,
                          min_cluster_points=args.min_cluster_points,
                          seed=args.seed, threads=args.threads)


def _dump(obj, path) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _out_paths(args, stem_default: str) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out / (args.prefix or stem_default)


def cmd_detect(args) -> int:
    img = load_image(args.image)
    cfg = config_from_args(args)
    ds = load_keypoints(args.keypoints) if args.keypoints else None
    trace = open(args.trace, "w") if args.trace else None
    try:
        res = detect(img, cfg, descriptors=ds, trace=trace)
    finally:
        if trace:
            trace.close()
    base = _out_paths(args, Path(args.image).stem)
    write_mask(res.mask, f"{base}_mask.png")
    write_overlay(img, res.mask, f"{base}_overlay.png")
    if args.corr_map:
        write_float_map(res.detection.corr, f"{base}_corr.png")
    if args.save_keypoints:
        save_keypoints(res.descriptors, args.save_keypoints)
    payload = res.to_json()
    payload["image"] = Path(args.image).name
    _dump(payload, f"{base}.json")
    if args.print_json:
        _dump(payload, None)
    log.info("%s: %s", args.image, "forged" if res.is_forged else "clean")
    return 0


def _attack_from_args(args) -> AttackSpec:
    if args.attack:
        name, sx, sy, th = next(a for a in ATTACK_CATALOGUE if a[0] == args.attack)
    else:
        sx, sy, th, name = args.sx, args.sy, args.theta, "custom"
    return AttackSpec(sx=sx, sy=sy, theta=th, source_rect=args.source_rect,
                      dest=args.dest, name=name)


def cmd_forge(args) -> int:
    img = load_image(args.image)
    spec = _attack_from_args(args)
    forged, truth_mask, truth = apply_attack(img, spec)
    base = _out_paths(args, f"{Path(args.image).stem}_{spec.name}")
    save_image(forged, f"{base}.png")
    write_mask(truth_mask, f"{base}_truth.png")
    _dump({"version": SCHEMA_VERSION, "attack": spec.to_dict(), "H": truth.to_dict()},
          f"{base}_truth.json")
    return 0


def cmd_eval(args) -> int:
    cfg = config_from_args(args)
    if args.manifest:
        attacks = load_manifest(args.manifest)
    elif args.source_rect and args.dest:
        attacks = catalogue_attacks(args.source_rect, args.dest)
    else:
        attacks = []
    report = run_benchmark(args.originals, attacks, cfg, include_clean=not args.no_clean)
    _dump(report.to_json(), args.out)
    return 0


def _draw_matches(img, segments, color):
    import cv2

    canvas = cv2.cvtColor(img.to_uint8(), cv2.COLOR_GRAY2BGR)
    for (x0, y0), (x1, y1) in segments:
        p0 = (int(round(x0)), int(round(y0)))
        p1 = (int(round(x1)), int(round(y1)))
        cv2.line(canvas, p0, p1, color, 1, cv2.LINE_AA)
        cv2.circle(canvas, p0, 2, (0, 255, 255), -1)
        cv2.circle(canvas, p1, 2, (0, 255, 255), -1)
    return canvas


def cmd_match_debug(args) -> int:
    import cv2

    img = load_image(args.image)
    cfg = config_from_args(args)
    ds = load_keypoints(args.keypoints) if args.keypoints else None
    res = detect(img, cfg, descriptors=ds)
    pos = res.descriptors.positions
    m = res.matches
    before = []
    for r, k in enumerate(m.matched_indices):
        for j in range(int(m.accepted[r])):
            before.append((pos[k], pos[m.neighbors[r, j]]))
    after = []
    st = res.state
    if st is not None:
        hard = harden_alpha(st.alpha, m.valid)
        for r in np.flatnonzero(st.active):
            j = int(np.argmax(hard[r]))
            after.append((pos[m.matched_indices[r]], pos[m.neighbors[r, j]]))
    base = _out_paths(args, Path(args.image).stem)
    cv2.imwrite(f"{base}_matches_before.png", _draw_matches(img, before, (0, 0, 255)))
    cv2.imwrite(f"{base}_matches_after.png", _draw_matches(img, after, (0, 200, 0)))
    seg = lambda s: [[float(a[0]), float(a[1]), float(b[0]), float(b[1])] for a, b in s]
    _dump({
        "version": SCHEMA_VERSION,
        "image": Path(args.image).name,
        "keypoint_count": len(res.descriptors),
        "match_count": len(m),
        "matches": m.to_json(),
        "pairs_before": seg(before),
        "pairs_after": seg(after),
    }, f"{base}_matches.json")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="cmfd",
        description="Copy-move forgery detection with joint fuzzy clustering and "
                    "per-cluster affine estimation.",
        epilog=_SIFT_HELP + " " + _SCHEDULE_HELP,
    )
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("detect", help="detect copy-move forgery in one image",
                       description=_SIFT_HELP + " " + _SCHEDULE_HELP)
    d.add_argument("image")
    d.add_argument("--out-dir", default=".", help="directory for mask, overlay and JSON")
    d.add_argument("--prefix", help="output file stem (default: image stem)")
    d.add_argument("--keypoints", help="keypoint CSV to use instead of running the detector")
    d.add_argument("--save-keypoints", help="write the keypoints used to this CSV")
    d.add_argument("--corr-map", action="store_true", help="also write the correlation map")
    d.add_argument("--trace", help="write per-iteration optimizer state as JSON lines")
    d.add_argument("--print-json", action="store_true", help="echo the result JSON on stdout")
    _add_pipeline_args(d)
    d.set_defaults(func=cmd_detect)

    f = sub.add_parser("forge", help="synthesise a copy-move forgery with known ground truth")
    f.add_argument("image")
    f.add_argument("--source-rect", type=_rect, required=True, help="x,y,w,h of the copied block")
    f.add_argument("--dest", type=_point, required=True,
                   help="x,y where the block's top-left corner lands before rotation/scaling")
    f.add_argument("--attack", choices=[a[0] for a in ATTACK_CATALOGUE],
                   help="use a catalogue attack instead of --sx/--sy/--theta")
    f.add_argument("--sx", type=float, default=1.0)
    f.add_argument("--sy", type=float, default=1.0)
    f.add_argument("--theta", type=float, default=0.0, help="rotation in degrees")
    f.add_argument("--out-dir", default=".")
    f.add_argument("--prefix")
    f.set_defaults(func=cmd_forge)

    e = sub.add_parser("eval", help="benchmark over a directory of originals")
    e.add_argument("originals", help="directory of original PNG/JPEG images")
    e.add_argument("--manifest", help="JSON list of attack specs")
    e.add_argument("--source-rect", type=_rect,
                   help="with --dest and no manifest, run all 15 catalogue attacks")
    e.add_argument("--dest", type=_point)
    e.add_argument("--no-clean", action="store_true", help="skip detection on the unmodified originals")
    e.add_argument("--out", default="-", help="report path (default: stdout)")
    _add_pipeline_args(e)
    e.set_defaults(func=cmd_eval)

    md = sub.add_parser("match-debug", help="draw matched pairs before and after optimisation")
    md.add_argument("image")
    md.add_argument("--keypoints")
    md.add_argument("--out-dir", default=".")
    md.add_argument("--prefix")
    _add_pipeline_args(md)
    md.set_defaults(func=cmd_match_debug)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError, AttackError) as exc:
        print(f"cmfd {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
