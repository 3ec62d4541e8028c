"""Command-line entry point: ``monosil <subcommand> ...``."""

import argparse
import dataclasses
import json
import logging
import os
import sys

import numpy as np

from . import calib, harness, imaging, lane, plots, track
from .config import load_config
from .errors import BothLanesLost, ConfigError, MonosilError

log = logging.getLogger("monosil")

EXIT_CONFIG = 2
EXIT_IO = 3


def parse_seeds(text):
    """``"1..5"`` -> [1, 2, 3, 4, 5]; also accepts comma lists like ``"1,3,7"``."""
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = part.split("..", 1)
            lo, hi = int(lo), int(hi)
            if hi < lo:
                raise argparse.ArgumentTypeError(f"empty seed range {part!r}")
            seeds.extend(range(lo, hi + 1))
        elif part:
            seeds.append(int(part))
    if not seeds:
        raise argparse.ArgumentTypeError("no seeds given")
    return seeds


def _seeds_arg(text):
    try:
        return parse_seeds(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def cmd_generate_track(args):
    spec = track.random_spec(args.seed, args.preset)
    path = track.generate_track(spec)
    track.save_track(path, args.out)
    print(f"track seed={args.seed} preset={args.preset} length={path.length:.3f} m "
          f"max|k|={track.max_abs_curvature(spec):.4f} 1/m -> {args.out}")
    return 0


def _run_config(args):
    cfg = load_config(args.config)
    changes = {}
    if getattr(args, "controller", None):
        changes["controller"] = args.controller
    if getattr(args, "through_homography", False):
        changes["through_homography"] = True
    if getattr(args, "duration", None) is not None:
        changes["duration"] = args.duration
    try:
        return cfg.replace(**changes) if changes else cfg
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_run(args):
    cfg = _run_config(args)
    os.makedirs(args.out_dir, exist_ok=True)
    frame_dir = None
    if args.dump_frames:
        frame_dir = os.path.join(args.out_dir, "frames")
        os.makedirs(frame_dir, exist_ok=True)
    path = harness.build_track(cfg)
    sim_log, metrics = harness.run_sim(cfg, path, frame_dir, args.dump_frames or 0)
    harness.write_csv(sim_log, os.path.join(args.out_dir, "log.csv"))
    harness.write_metrics(metrics, sim_log, os.path.join(args.out_dir, "metrics.json"))
    if len(sim_log):
        plots.emit_run_plots(sim_log, path, args.out_dir, cfg.controller.upper())
    print(f"{cfg.controller}: termination={sim_log.termination} ticks={metrics.ticks} "
          f"lateral_msd={metrics.lateral_msd:.6g} angular_msd={metrics.angular_msd:.6g} "
          f"lane_valid={metrics.lane_valid_fraction:.4f} laps={metrics.laps_completed}")
    return 0


def cmd_compare(args):
    cfg = load_config(args.config)
    if args.duration is not None:
        cfg = cfg.replace(duration=args.duration)
    os.makedirs(args.out_dir, exist_ok=True)
    cmp = harness.compare_controllers(args.seeds, cfg, jobs=args.jobs)
    run_dir = os.path.join(args.out_dir, "runs")
    os.makedirs(run_dir, exist_ok=True)
    for r in cmp.runs:
        harness.write_csv(r.log, os.path.join(run_dir, f"seed{r.seed}_{r.controller}.csv"))
    with open(os.path.join(args.out_dir, "comparison.csv"), "w", newline="\n") as fh:
        fh.write(harness.comparison_csv(cmp))
    text = harness.comparison_text(cmp)
    with open(os.path.join(args.out_dir, "comparison.txt"), "w", newline="\n") as fh:
        fh.write(text)
    paths = {}
    for s in cmp.seeds:
        seed_cfg = cfg.replace(track=dataclasses.replace(cfg.track, seed=s, file=None))
        paths[s] = harness.build_track(seed_cfg)
    plots.emit_comparison_plots(cmp, paths, args.out_dir)
    sys.stdout.write(text)
    return 0


def _poly_doc(p):
    return {"side": p.side, "coeffs": list(p.coeffs), "valid": p.valid, "support": p.support}


def cmd_detect(args):
    cfg = load_config(args.config)
    img = imaging.read_pgm(args.image)
    mask = imaging.preprocess(imaging.undistort(img), cfg.preprocess)
    try:
        left, right, center = lane.detect_lanes(mask, cfg.detector, cfg.camera)
        doc = {"status": "ok", "left": _poly_doc(left), "right": _poly_doc(right),
               "center": _poly_doc(center)}
    except BothLanesLost as exc:
        doc = {"status": "lost", "detail": str(exc)}
    with open(args.out, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    print(f"detect: {doc['status']} -> {args.out}")
    return 0


def distortion_homography(tilt, shear):
    """A projective distortion centered on the demo board."""
    img, grid = calib.render_checkerboard()
    h, w = img.shape
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    to_c = np.array([[1, 0, -cx], [0, 1, -cy], [0, 0, 1.0]])
    back = np.array([[1, 0, cx], [0, 1, cy], [0, 0, 1.0]])
    d = np.array([[1.0, shear, 0.0], [0.0, 1.0, 0.0], [tilt, 0.5 * tilt, 1.0]])
    return back @ d @ to_c


def cmd_calib_demo(args):
    img, grid = calib.render_checkerboard()
    h_img, w_img = img.shape
    dist = distortion_homography(args.tilt, args.shear)
    distorted = calib.warp_image(img, dist, w_img, h_img)
    observed = calib.apply_homography(dist, grid.corners)
    pairs = [calib.Correspondence(tuple(o), tuple(t)) for o, t in zip(observed, grid.corners)]
    hom = calib.estimate_homography(pairs)
    restored_grid = calib.ChessboardGrid(grid.rows, grid.cols,
                                         calib.apply_homography(hom, observed))
    mdx, mdy, dev = calib.verify_grid_spacing(restored_grid)
    _, _, dev_before = calib.verify_grid_spacing(
        calib.ChessboardGrid(grid.rows, grid.cols, observed))
    restored = calib.warp_image(distorted, hom, w_img, h_img)

    print("homography:")
    print(" ".join("%.10g" % v for v in hom.ravel()))
    print(f"spacing: mean_dx={mdx:.6f} px mean_dy={mdy:.6f} px "
          f"max_rel_dev={dev:.3e} (before: {dev_before:.3e})")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        imaging.write_pgm(os.path.join(args.out, "before.pgm"), distorted)
        imaging.write_pgm(os.path.join(args.out, "after.pgm"), restored)
        calib.write_correspondences(os.path.join(args.out, "corners.txt"), pairs)
        print(f"images written to {args.out}")
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="monosil",
                                 description="Monocular lane-keeping software-in-the-loop simulator")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate-track", help="write a seeded track to JSON")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--preset", choices=track.PRESETS, default="default")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate_track)

    r = sub.add_parser("run", help="closed-loop run with one controller")
    r.add_argument("--config")
    r.add_argument("--controller", choices=("pid", "mpc"))
    r.add_argument("--out-dir", required=True)
    r.add_argument("--dump-frames", type=int, default=0, metavar="K",
                   help="write every K-th rendered frame as PGM")
    r.add_argument("--through-homography", action="store_true")
    r.add_argument("--duration", type=float)
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="PID vs MPC over several seeded tracks")
    c.add_argument("--seeds", type=_seeds_arg, default=[1, 2, 3, 4, 5])
    c.add_argument("--config")
    c.add_argument("--out-dir", required=True)
    c.add_argument("--jobs", type=int, default=1)
    c.add_argument("--duration", type=float)
    c.set_defaults(func=cmd_compare)

    d = sub.add_parser("detect", help="detect lanes in a bird's-eye PGM frame")
    d.add_argument("--image", required=True)
    d.add_argument("--config")
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_detect)

    k = sub.add_parser("calib-demo", help="homography estimate/verify/warp on a synthetic board")
    k.add_argument("--out")
    k.add_argument("--tilt", type=float, default=6e-4)
    k.add_argument("--shear", type=float, default=0.15)
    k.set_defaults(func=cmd_calib_demo)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO if isinstance(exc, OSError) else EXIT_CONFIG
    except MonosilError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
