"""Closed-loop simulation: render, perceive, control, integrate.

One control tick renders the bird's-eye frame from the current pose, runs
the preprocessing chain and the lane detector, asks the controller for a
command and then steps the plant ``control_period / plant_dt`` times.
Tracking errors are measured against the true centerline, which never
reaches the controller.
"""

import csv
import dataclasses
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .calib import estimate_homography, warp_image
from .control import PidState, mpc_control, pid_control
from .errors import BothLanesLost, MonosilError, NonFiniteState
from .imaging import preprocess, render_frame, write_pgm
from .lane import detect_lanes
from .track import generate_track, lane_boundaries, load_track, project_with_index, random_spec
from .vehicle import VehicleState, step, wrap_angle

log = logging.getLogger(__name__)

CSV_HEADER = ("t,x,y,phi,vx,vy,phidot,delta_cmd,accel_cmd,"
              "lateral_err,heading_err,lane_valid,cost,clamped")
MIN_SPEED = 0.2


def _q(v):
    """Round to the 9 significant digits written to CSV."""
    return float("%.9g" % v)


@dataclass(frozen=True)
class TickRecord:
    t: float
    x: float
    y: float
    phi: float
    v_x: float
    v_y: float
    phi_dot: float
    delta_cmd: float
    accel_cmd: float
    lateral_err: float
    heading_err: float
    lane_valid: bool
    cost: float = 0.0
    clamped: bool = False

    @classmethod
    def quantized(cls, *values, lane_valid, cost, clamped):
        return cls(*(_q(v) for v in values), lane_valid=bool(lane_valid),
                   cost=_q(cost), clamped=bool(clamped))

    def csv_row(self):
        nums = (self.t, self.x, self.y, self.phi, self.v_x, self.v_y, self.phi_dot,
                self.delta_cmd, self.accel_cmd, self.lateral_err, self.heading_err)
        return ",".join(["%.9g" % v for v in nums]
                        + [str(int(self.lane_valid)), "%.9g" % self.cost, str(int(self.clamped))])


@dataclass(frozen=True)
class Metrics:
    lateral_msd: float = 0.0
    angular_msd: float = 0.0
    lane_valid_fraction: float = 0.0
    laps_completed: int = 0
    ticks: int = 0
    peak_phi_dot: float = 0.0

    def to_dict(self):
        return dataclasses.asdict(self)


@dataclass
class SimLog:
    """Per-tick records plus how and why the run ended."""

    records: list = field(default_factory=list)
    termination: str = "duration"
    detail: str = ""

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]

    @property
    def failed(self):
        return self.termination != "duration"

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records], dtype=float)


def build_track(cfg):
    """Reference centerline for ``cfg.track``."""
    if cfg.track.file:
        return load_track(cfg.track.file)
    return generate_track(random_spec(cfg.track.seed, cfg.track.preset))


def lap_count(path, xs, ys):
    """Completed laps from a sequence of positions, by unwrapped progress."""
    if len(xs) == 0 or not path.closed:
        return 0
    hint = None
    progress = 0.0
    s_prev = None
    length = path.length
    for x, y in zip(xs, ys):
        s, _, _, hint = project_with_index(path, (x, y), hint)
        if s_prev is not None:
            ds = s - s_prev
            ds -= length * round(ds / length)
            progress += ds
        s_prev = s
    return int(math.floor(progress / length + 1e-9))


def compute_metrics(log_, path=None):
    """Metrics of a log; ``path`` enables the lap count."""
    records = list(log_)
    if not records:
        return Metrics()
    lat = np.array([r.lateral_err for r in records])
    head = np.array([wrap_angle(r.heading_err) for r in records])
    valid = sum(1 for r in records if r.lane_valid)
    laps = 0
    if path is not None:
        laps = lap_count(path, [r.x for r in records], [r.y for r in records])
    return Metrics(
        lateral_msd=float(np.mean(lat ** 2)),
        angular_msd=float(np.mean(head ** 2)),
        lane_valid_fraction=valid / len(records),
        laps_completed=laps,
        ticks=len(records),
        peak_phi_dot=float(max(abs(r.phi_dot) for r in records)),
    )


# Fixed bird's-eye <-> perspective map used by the through-homography path.
def _perspective_homography(cam):
    w, h = cam.width - 1, cam.height - 1
    top_in = 0.22 * w
    bev = [(0, 0), (w, 0), (w, h), (0, h)]
    persp = [(top_in, 0.25 * h), (w - top_in, 0.25 * h), (w, h), (0, h)]
    return estimate_homography(list(zip(persp, bev)))


def _through_homography(frame, h_persp_to_bev):
    cam_h, cam_w = frame.shape
    persp = warp_image(frame, np.linalg.inv(h_persp_to_bev), cam_w, cam_h)
    return warp_image(persp, h_persp_to_bev, cam_w, cam_h)


def initial_state(path, cfg):
    heading = float(path.heading[0])
    nx, ny = -math.sin(heading), math.cos(heading)
    return VehicleState(float(path.x[0]) + cfg.initial_lateral * nx,
                        float(path.y[0]) + cfg.initial_lateral * ny,
                        wrap_angle(heading + cfg.initial_heading), 0.0, 0.0)


def run_sim(cfg, path=None, frame_dir=None, dump_every=0):
    """Run one closed-loop simulation; returns ``(SimLog, Metrics)``.

    Never raises for in-loop failures: a non-finite plant state or a lane
    loss past ``cfg.lane_reuse_cap`` ends the run with the corresponding
    ``termination`` reason. With ``frame_dir`` and ``dump_every = k`` every
    k-th rendered frame is written there as PGM.
    """
    if path is None:
        path = build_track(cfg)
    half_width = path.spec.half_width if path.spec is not None else cfg.detector.lane_half_width
    left_b, right_b = lane_boundaries(path, half_width)
    rng = np.random.default_rng(cfg.noise_seed)
    cam = cfg.camera
    h_bev = _perspective_homography(cam) if cfg.through_homography else None

    state = initial_state(path, cfg)
    speed = cfg.initial_speed if cfg.initial_speed is not None else cfg.v_target
    n_ticks = int(math.floor(cfg.duration / cfg.control_period + 1e-9))
    sim_log = SimLog()
    prev = None
    reused = [0, 0]
    u_prev = 0.0
    pid_state = PidState()
    hint = None

    for k in range(n_ticks):
        t = k * cfg.control_period
        pose = (state.x, state.y, state.phi)
        if cfg.blank_frames:
            frame = np.zeros((cam.height, cam.width), np.uint8)
        else:
            frame = render_frame(left_b, right_b, pose, cam, cfg.line_width, cfg.noise_sigma, rng)
            if h_bev is not None:
                frame = _through_homography(frame, h_bev)
        if frame_dir is not None and dump_every > 0 and k % dump_every == 0:
            write_pgm(os.path.join(frame_dir, f"frame_{k:05d}.pgm"), frame)
        mask = preprocess(frame, cfg.preprocess)

        try:
            left, right, center = detect_lanes(mask, cfg.detector, cam, prev)
        except BothLanesLost as exc:
            sim_log.termination, sim_log.detail = "lane_lost", str(exc)
            break
        sides = [left, right]
        for i, side in enumerate(sides):
            if side.valid and side.support == 0:
                reused[i] += 1
                if reused[i] > cfg.lane_reuse_cap:
                    sides[i] = None
            else:
                reused[i] = 0
        if all(s is None or not s.valid for s in sides):
            sim_log.termination = "lane_lost"
            sim_log.detail = f"no fresh lane pixels for {cfg.lane_reuse_cap} ticks"
            break
        if sides[0] is None or sides[1] is None:
            # a side reused past the cap is dropped; center from the other one
            keep = sides[0] if sides[0] is not None else sides[1]
            hw = cfg.detector.lane_half_width
            center = keep.shifted(-hw if keep is left else hw, "center")
        prev = tuple(sides)
        fresh = [s is not None and s.valid and s.support > 0 for s in sides]
        lane_valid = center.valid and any(fresh)

        params = dataclasses.replace(cfg.vehicle, v_x=speed)
        if cfg.controller == "mpc":
            cmd = mpc_control(center, state, params, cfg.mpc, u_prev)
        else:
            cmd = pid_control(center, state, cfg.pid, cfg.control_period, pid_state, params)
        u_prev = cmd.delta_f

        _, lat_err, path_heading, hint = project_with_index(path, (state.x, state.y), hint)
        head_err = wrap_angle(state.phi - path_heading)
        sim_log.records.append(TickRecord.quantized(
            t, state.x, state.y, state.phi, speed, state.v_y, state.phi_dot,
            cmd.delta_f, cmd.accel, lat_err, head_err,
            lane_valid=lane_valid, cost=cmd.cost, clamped=cmd.clamped))

        try:
            for _ in range(cfg.substeps):
                state = step(state, cmd.delta_f, params, cfg.plant_dt)
        except NonFiniteState as exc:
            sim_log.termination, sim_log.detail = "non_finite", str(exc)
            break
        speed = max(MIN_SPEED, speed + cmd.accel * cfg.control_period)

    return sim_log, compute_metrics(sim_log, path)


def write_csv(log_, fh_or_path):
    """Write the per-tick CSV (LF line endings)."""
    text = CSV_HEADER + "\n" + "".join(r.csv_row() + "\n" for r in log_)
    if isinstance(fh_or_path, (str, os.PathLike)):
        with open(fh_or_path, "w", newline="\n") as fh:
            fh.write(text)
    else:
        fh_or_path.write(text)


def read_csv(fh_or_path):
    if isinstance(fh_or_path, (str, os.PathLike)):
        with open(fh_or_path, newline="") as fh:
            return read_csv(io.StringIO(fh.read()))
    reader = csv.reader(fh_or_path)
    header = next(reader)
    if ",".join(header) != CSV_HEADER:
        raise ValueError("unexpected CSV header")
    records = []
    for row in reader:
        nums = [float(v) for v in row[:11]]
        records.append(TickRecord(*nums, lane_valid=row[11] == "1",
                                  cost=float(row[12]), clamped=row[13] == "1"))
    return records


def write_metrics(metrics, log_, path):
    doc = dict(metrics.to_dict(), termination=log_.termination, detail=log_.detail)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


@dataclass(frozen=True)
class RunResult:
    seed: int
    controller: str
    metrics: Metrics
    termination: str
    log: SimLog = field(repr=False, default=None)

    @property
    def failed(self):
        return self.termination != "duration"


@dataclass(frozen=True)
class Comparison:
    runs: tuple
    seeds: tuple

    def by_controller(self, controller):
        return [r for r in self.runs if r.controller == controller]

    def aggregate(self, controller):
        """Mean metrics over the controller's non-failed runs (None if none)."""
        ok = [r.metrics for r in self.by_controller(controller) if not r.failed]
        if not ok:
            return None
        return Metrics(
            lateral_msd=float(np.mean([m.lateral_msd for m in ok])),
            angular_msd=float(np.mean([m.angular_msd for m in ok])),
            lane_valid_fraction=float(np.mean([m.lane_valid_fraction for m in ok])),
            laps_completed=int(sum(m.laps_completed for m in ok)),
            ticks=int(sum(m.ticks for m in ok)),
            peak_phi_dot=float(max(m.peak_phi_dot for m in ok)),
        )


CONTROLLERS = ("pid", "mpc")


def _run_one(args):
    cfg, seed, controller = args
    run_cfg = cfg.replace(controller=controller,
                          track=dataclasses.replace(cfg.track, seed=seed, file=None))
    try:
        sim_log, metrics = run_sim(run_cfg)
    except MonosilError as exc:
        log.warning("seed %s %s failed: %s", seed, controller, exc)
        sim_log, metrics = SimLog(termination="error", detail=str(exc)), Metrics()
    return RunResult(seed, controller, metrics, sim_log.termination, sim_log)


def compare_controllers(seeds, base_cfg, jobs=1):
    """Run PID and MPC on each seed's track; results ordered by seed then controller."""
    seeds = tuple(int(s) for s in seeds)
    if not seeds:
        raise ValueError("need at least one seed")
    tasks = [(base_cfg, s, c) for s in seeds for c in CONTROLLERS]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            runs = list(pool.map(_run_one, tasks))
    else:
        runs = [_run_one(t) for t in tasks]
    return Comparison(tuple(runs), seeds)


TABLE_ROWS = (
    ("Lateral Mean Squared Deviation (m^2)", "lateral_msd"),
    ("Angular Mean Squared Deviation (rad^2)", "angular_msd"),
)


def _fmt(m, attr):
    return "failed" if m is None else "%.6g" % getattr(m, attr)


def comparison_csv(cmp):
    lines = ["seed,controller,status,lateral_msd,angular_msd,lane_valid_fraction,"
             "laps_completed,ticks,peak_phi_dot"]
    for r in cmp.runs:
        m = r.metrics
        lines.append("%d,%s,%s,%.9g,%.9g,%.9g,%d,%d,%.9g" % (
            r.seed, r.controller, "ok" if not r.failed else "failed:" + r.termination,
            m.lateral_msd, m.angular_msd, m.lane_valid_fraction, m.laps_completed,
            m.ticks, m.peak_phi_dot))
    aggs = {c: cmp.aggregate(c) for c in CONTROLLERS}
    lines.append("")
    lines.append("metric,PID,MPC")
    for label, attr in TABLE_ROWS:
        lines.append(f"{label},{_fmt(aggs['pid'], attr)},{_fmt(aggs['mpc'], attr)}")
    return "\n".join(lines) + "\n"


def comparison_text(cmp):
    aggs = {c: cmp.aggregate(c) for c in CONTROLLERS}
    rows = [("Metric", "PID", "MPC")]
    rows += [(label, _fmt(aggs["pid"], attr), _fmt(aggs["mpc"], attr)) for label, attr in TABLE_ROWS]
    widths = [max(len(r[i]) for r in rows) for i in range(3)]
    out = []
    for i, r in enumerate(rows):
        out.append(f"{r[0]:<{widths[0]}} | {r[1]:>{widths[1]}} | {r[2]:>{widths[2]}}")
        if i == 0:
            out.append("-" * widths[0] + "-+-" + "-" * widths[1] + "-+-" + "-" * widths[2])
    failed = [r for r in cmp.runs if r.failed]
    out.append("")
    out.append(f"runs: {len(cmp.runs)} ({len(failed)} failed), seeds: "
               + " ".join(str(s) for s in cmp.seeds))
    for r in failed:
        out.append(f"  failed: seed {r.seed} {r.controller} ({r.termination})")
    return "\n".join(out) + "\n"
