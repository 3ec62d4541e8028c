"""SVG figures derived from run logs and comparisons.

Rendering uses matplotlib's SVG backend with a fixed hash salt and no date
metadata, so the same inputs give byte-identical files.
"""

import numpy as np
from matplotlib import rc_context
from matplotlib.backends.backend_svg import FigureCanvasSVG
from matplotlib.figure import Figure

from .track import lane_boundaries

_RC = {"svg.hashsalt": "monosil", "svg.fonttype": "none", "path.simplify": False}
_COLORS = {"pid": "tab:orange", "mpc": "tab:blue"}


def _save(fig, path):
    FigureCanvasSVG(fig)
    with rc_context(_RC):
        fig.savefig(path, format="svg", metadata={"Date": None})


def _limits(values, pad=0.05):
    lo, hi = float(np.min(values)), float(np.max(values))
    span = hi - lo if hi > lo else max(abs(hi), 1.0)
    return lo - pad * span, hi + pad * span


def trajectory_figure(log, path, title="Vehicle trajectory"):
    fig = Figure(figsize=(6, 6))
    ax = fig.add_subplot()
    hw = path.spec.half_width if path.spec is not None else 0.4
    left, right = lane_boundaries(path, hw)
    ax.plot(left.x, left.y, color="0.3", lw=0.8)
    ax.plot(right.x, right.y, color="0.3", lw=0.8)
    ax.plot(path.x, path.y, color="0.6", lw=0.6, ls="--")
    x, y = log.column("x"), log.column("y")
    ax.plot(x, y, color="tab:red", lw=1.2, gid="trajectory")
    xs = np.concatenate([left.x, right.x, x])
    ys = np.concatenate([left.y, right.y, y])
    ax.set_xlim(*_limits(xs))
    ax.set_ylim(*_limits(ys))
    ax.set_aspect("equal", adjustable="datalim")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_title(title)
    return fig


def series_figure(log, column, ylabel, title):
    fig = Figure(figsize=(7, 3.5))
    ax = fig.add_subplot()
    t, v = log.column("t"), log.column(column)
    ax.plot(t, v, lw=1.0, gid=f"series-{column}")
    ax.set_xlim(*_limits(t, 0.0))
    ax.set_ylim(*_limits(v))
    ax.set_xlabel("t [s]")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, lw=0.3)
    return fig


def emit_run_plots(log, path, out_dir, label=""):
    """Trajectory, speed and angular-velocity SVGs for one run; returns file paths."""
    if len(log) == 0:
        raise ValueError("cannot plot an empty log")
    suffix = f" ({label})" if label else ""
    figs = {
        "trajectory.svg": trajectory_figure(log, path, "Vehicle trajectory" + suffix),
        "speed.svg": series_figure(log, "v_x", "speed [m/s]", "Vehicle speed" + suffix),
        "angular_velocity.svg": series_figure(log, "phi_dot", "yaw rate [rad/s]",
                                              "Angular velocity" + suffix),
    }
    out = []
    for name, fig in figs.items():
        p = f"{out_dir}/{name}"
        _save(fig, p)
        out.append(p)
    return out


def overlay_figure(cmp, paths):
    """One panel per controller with every run's trajectory over its track."""
    fig = Figure(figsize=(11, 5.5))
    for k, ctrl in enumerate(("pid", "mpc")):
        ax = fig.add_subplot(1, 2, k + 1)
        xs, ys = [], []
        for r in cmp.by_controller(ctrl):
            path = paths[r.seed]
            ax.plot(path.x, path.y, color="0.75", lw=0.5, ls="--")
            if r.log is None or len(r.log) == 0:
                continue
            x, y = r.log.column("x"), r.log.column("y")
            ax.plot(x, y, lw=0.9, gid=f"traj-{ctrl}-{r.seed}", label=f"seed {r.seed}")
            xs.append(x)
            ys.append(y)
        if xs:
            ax.set_xlim(*_limits(np.concatenate(xs)))
            ax.set_ylim(*_limits(np.concatenate(ys)))
            ax.legend(fontsize=7, loc="upper right")
        ax.set_aspect("equal", adjustable="datalim")
        ax.set_title(f"Vehicle trajectories - {ctrl.upper()}")
        ax.set_xlabel("x [m]")
        ax.set_ylabel("y [m]")
    return fig


def runs_series_figure(cmp, ctrl, column, ylabel, title):
    fig = Figure(figsize=(7, 3.5))
    ax = fig.add_subplot()
    ts, vs = [], []
    for r in cmp.by_controller(ctrl):
        if r.log is None or len(r.log) == 0:
            continue
        t, v = r.log.column("t"), r.log.column(column)
        ax.plot(t, v, lw=0.8, gid=f"{column}-{ctrl}-{r.seed}", label=f"seed {r.seed}")
        ts.append(t)
        vs.append(v)
    if ts:
        ax.set_xlim(*_limits(np.concatenate(ts), 0.0))
        ax.set_ylim(*_limits(np.concatenate(vs)))
        ax.legend(fontsize=7)
    ax.set_xlabel("t [s]")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, lw=0.3)
    return fig


def emit_comparison_plots(cmp, paths, out_dir):
    figs = {"overlay.svg": overlay_figure(cmp, paths)}
    for ctrl in ("pid", "mpc"):
        figs[f"angular_velocity_{ctrl}.svg"] = runs_series_figure(
            cmp, ctrl, "phi_dot", "yaw rate [rad/s]", f"Angular velocity - {ctrl.upper()}")
        figs[f"speed_{ctrl}.svg"] = runs_series_figure(
            cmp, ctrl, "v_x", "speed [m/s]", f"Vehicle speed - {ctrl.upper()}")
    out = []
    for name, fig in figs.items():
        p = f"{out_dir}/{name}"
        _save(fig, p)
        out.append(p)
    return out
