"""Randomized closed test tracks and reference-path queries.

Tracks are a circle with sinusoidal radius perturbations,
r(theta) = R + sum_i A_i sin(f_i theta + phase_i), travelled counterclockwise.
Lateral offsets are positive to the LEFT of the direction of travel.
"""

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import OffsetDegenerate, SelfIntersecting

PRESETS = ("circle", "default", "hard")

# Draws whose peak |curvature| exceeds this are rejected by random_spec.
# Tighter bends turn the lane bands sideways inside the 3.5 m look-ahead,
# where an x(y) polynomial no longer describes them.
PRESET_MAX_CURVATURE = {"circle": np.inf, "default": 0.25, "hard": 0.35}


@dataclass(frozen=True)
class Harmonic:
    amplitude: float
    frequency: int
    phase: float


@dataclass(frozen=True)
class TrackSpec:
    base_radius: float = 8.0
    harmonics: tuple = ()
    half_width: float = 0.4
    samples_per_lap: int = 720
    seed: int = 0

    def __post_init__(self):
        hs = tuple(h if isinstance(h, Harmonic) else Harmonic(*h) for h in self.harmonics)
        object.__setattr__(self, "harmonics", hs)
        if self.base_radius <= sum(abs(h.amplitude) for h in hs):
            raise ValueError("base_radius must exceed the sum of harmonic amplitudes")
        if self.half_width <= 0:
            raise ValueError("half_width must be positive")
        for h in hs:
            if h.frequency < 1 or int(h.frequency) != h.frequency:
                raise ValueError("harmonic frequencies must be integers >= 1")
        if self.samples_per_lap < 360:
            raise ValueError("samples_per_lap must be >= 360")

    def radius(self, theta):
        theta = np.asarray(theta, dtype=float)
        r = np.full(theta.shape, float(self.base_radius))
        for h in self.harmonics:
            r = r + h.amplitude * np.sin(h.frequency * theta + h.phase)
        return r

    def to_dict(self):
        d = asdict(self)
        d["harmonics"] = [[h.amplitude, h.frequency, h.phase] for h in self.harmonics]
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["harmonics"] = tuple(Harmonic(float(a), int(f), float(p)) for a, f, p in d.get("harmonics", ()))
        return cls(**d)


@dataclass(frozen=True)
class RefPath:
    """Sampled path; arrays are read-only after construction."""

    x: np.ndarray
    y: np.ndarray
    s: np.ndarray
    heading: np.ndarray
    curvature: np.ndarray
    closed: bool = False
    spec: TrackSpec = field(default=None, compare=False)

    def __post_init__(self):
        for name in ("x", "y", "s", "heading", "curvature"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self):
        return len(self.x)

    @property
    def length(self):
        return float(self.s[-1])

    @property
    def xy(self):
        return np.column_stack([self.x, self.y])


def _arc_length(x, y):
    seg = np.hypot(np.diff(x), np.diff(y))
    return np.concatenate([[0.0], np.cumsum(seg)])


def _closed_derivatives(x, y, dt):
    # periodic central differences; the last sample duplicates the first
    xs, ys = x[:-1], y[:-1]
    dx = (np.roll(xs, -1) - np.roll(xs, 1)) / (2 * dt)
    dy = (np.roll(ys, -1) - np.roll(ys, 1)) / (2 * dt)
    ddx = (np.roll(xs, -1) - 2 * xs + np.roll(xs, 1)) / dt**2
    ddy = (np.roll(ys, -1) - 2 * ys + np.roll(ys, 1)) / dt**2
    close = lambda a: np.append(a, a[0])
    return close(dx), close(dy), close(ddx), close(ddy)


def _segments_intersect(p, q, a, b):
    """Proper-intersection test of segment p->q against many segments a->b."""
    def orient(o, u, v):
        return (u[..., 0] - o[..., 0]) * (v[..., 1] - o[..., 1]) - (u[..., 1] - o[..., 1]) * (v[..., 0] - o[..., 0])
    d1 = orient(a, b, p[None])
    d2 = orient(a, b, q[None])
    d3 = orient(p[None], q[None], a)
    d4 = orient(p[None], q[None], b)
    return (d1 * d2 < 0) & (d3 * d4 < 0)


def check_self_intersection(x, y, closed):
    pts = np.column_stack([x, y])
    a, b = pts[:-1], pts[1:]
    n = len(a)
    for i in range(n - 2):
        j0 = i + 2
        j1 = n - 1 if (closed and i == 0) else n
        if j0 >= j1:
            continue
        hit = _segments_intersect(a[i], b[i], a[j0:j1], b[j0:j1])
        if np.any(hit):
            j = j0 + int(np.argmax(hit))
            raise SelfIntersecting(f"segments {i} and {j} intersect")


def generate_track(spec):
    n = spec.samples_per_lap
    dtheta = 2 * np.pi / n
    theta = np.arange(n + 1) * dtheta
    r = spec.radius(theta)
    x = r * np.cos(theta)
    y = r * np.sin(theta)
    x[-1], y[-1] = x[0], y[0]

    dx, dy, ddx, ddy = _closed_derivatives(x, y, dtheta)
    heading = np.unwrap(np.arctan2(dy, dx))
    curvature = (dx * ddy - dy * ddx) / np.power(dx**2 + dy**2, 1.5)
    check_self_intersection(x, y, closed=True)
    return RefPath(x, y, _arc_length(x, y), heading, curvature, closed=True, spec=spec)


def straight_path(length=10.0, samples=401, heading=0.0, start=(0.0, 0.0)):
    """Open straight path, used for tests and perception checks."""
    d = np.linspace(0.0, length, samples)
    x = start[0] + d * np.cos(heading)
    y = start[1] + d * np.sin(heading)
    return RefPath(x, y, d, np.full(samples, heading), np.zeros(samples), closed=False)


def max_abs_curvature(spec, samples=2048):
    theta = np.linspace(0, 2 * np.pi, samples, endpoint=False)
    r = spec.radius(theta)
    dr = np.zeros_like(theta)
    ddr = np.zeros_like(theta)
    for h in spec.harmonics:
        arg = h.frequency * theta + h.phase
        dr += h.amplitude * h.frequency * np.cos(arg)
        ddr -= h.amplitude * h.frequency**2 * np.sin(arg)
    k = (r**2 + 2 * dr**2 - r * ddr) / np.power(r**2 + dr**2, 1.5)
    return float(np.max(np.abs(k)))


def random_spec(seed, complexity="default"):
    """Draw a track spec deterministically from ``seed``.

    All presets use an 8 m base radius. ``default``: 2-3 harmonics,
    amplitudes in [0.2, 0.6] m, frequencies 2..5. ``hard``: 3-4 harmonics,
    amplitudes in [0.3, 0.8] m, frequencies 2..6. Draws over the preset's
    peak-curvature cap are redrawn from the same stream.
    """
    if complexity not in PRESETS:
        raise ValueError(f"unknown preset {complexity!r}; choose from {PRESETS}")
    if complexity == "circle":
        return TrackSpec(seed=int(seed))

    rng = np.random.default_rng(int(seed) & 0xFFFFFFFFFFFFFFFF)
    if complexity == "default":
        n_range, a_range, f_range = (2, 3), (0.2, 0.6), (2, 5)
    else:
        n_range, a_range, f_range = (3, 4), (0.3, 0.8), (2, 6)
    cap = PRESET_MAX_CURVATURE[complexity]
    for _ in range(10000):
        k = int(rng.integers(n_range[0], n_range[1] + 1))
        hs = tuple(
            Harmonic(float(rng.uniform(*a_range)), int(rng.integers(f_range[0], f_range[1] + 1)),
                     float(rng.uniform(0, 2 * np.pi)))
            for _ in range(k))
        spec = TrackSpec(harmonics=hs, seed=int(seed))
        if max_abs_curvature(spec) <= cap:
            return spec
    raise RuntimeError("could not draw a track under the curvature cap")


def _segment_projection(px, py, ax, ay, bx, by):
    ux, uy = bx - ax, by - ay
    l2 = ux * ux + uy * uy
    t = np.clip(((px - ax) * ux + (py - ay) * uy) / np.where(l2 > 0, l2, 1.0), 0.0, 1.0)
    qx, qy = ax + t * ux, ay + t * uy
    return t, qx, qy, np.hypot(px - qx, py - qy)


def project_onto_path(path, p, hint_index=None):
    """Nearest point on the polyline: ``(s, lateral_offset, path_heading)``.

    The offset is signed positive to the left of the direction of travel.
    With ``hint_index`` only segments within +-50 samples are searched
    (indices wrap on closed paths).
    """
    return project_with_index(path, p, hint_index)[:3]


def project_with_index(path, p, hint_index=None, window=50):
    """Like :func:`project_onto_path`, also returning the segment index."""
    n_seg = len(path) - 1
    if n_seg < 1:
        raise ValueError("path needs at least 2 points")
    px, py = float(p[0]), float(p[1])
    if hint_index is None or 2 * window + 1 >= n_seg:
        idx = np.arange(n_seg)
    else:
        idx = np.arange(hint_index - window, hint_index + window + 1)
        if path.closed:
            idx = idx % n_seg
        else:
            idx = idx[(idx >= 0) & (idx < n_seg)]
    ax, ay = path.x[idx], path.y[idx]
    bx, by = path.x[idx + 1], path.y[idx + 1]
    t, qx, qy, dist = _segment_projection(px, py, ax, ay, bx, by)
    k = int(np.argmin(dist))
    i = int(idx[k])
    seg_len = path.s[i + 1] - path.s[i]
    s = path.s[i] + t[k] * seg_len
    ux, uy = bx[k] - ax[k], by[k] - ay[k]
    cross = ux * (py - qy[k]) - uy * (px - qx[k])
    lateral = float(np.sign(cross) * dist[k])
    heading = path.heading[i] + t[k] * (path.heading[i + 1] - path.heading[i])
    return float(s), lateral, float(heading), i


def lane_boundaries(path, half_width):
    """Offset curves at +-half_width; returns ``(left, right)``."""
    if np.any(np.abs(path.curvature) * half_width >= 1.0):
        raise OffsetDegenerate("half_width exceeds the minimum radius of curvature")
    nx, ny = -np.sin(path.heading), np.cos(path.heading)
    out = []
    for w in (half_width, -half_width):
        x = path.x + w * nx
        y = path.y + w * ny
        if path.closed:
            x[-1], y[-1] = x[0], y[0]
        k = path.curvature / (1.0 - w * path.curvature)
        out.append(RefPath(x, y, _arc_length(x, y), path.heading, k, closed=path.closed))
    return out[0], out[1]


def lateral_position_at(path, pose, d):
    """Lateral position (vehicle frame) of ``path`` at forward distance ``d``.

    Walks forward along the path from the sample nearest to the vehicle and
    interpolates the first crossing of the station line. Returns NaN if the
    path never reaches that station within one lap.
    """
    x0, y0, phi = pose
    c, s = np.cos(phi), np.sin(phi)
    fx = c * (path.x - x0) + s * (path.y - y0)
    fy = -s * (path.x - x0) + c * (path.y - y0)
    n_seg = len(path) - 1
    start = int(np.argmin(np.hypot(path.x - x0, path.y - y0)))
    steps = np.arange(n_seg)
    idx = (start + steps) % n_seg if path.closed else steps[start:]
    g0 = fx[idx] - d
    g1 = fx[idx + 1] - d
    hit = np.nonzero((g0 <= 0) & (g1 > 0))[0]
    if len(hit) == 0:
        return float("nan")
    i = idx[hit[0]]
    t = (d - fx[i]) / (fx[i + 1] - fx[i])
    return float(fy[i] + t * (fy[i + 1] - fy[i]))


def save_track(path, out_file):
    doc = {
        "spec": path.spec.to_dict() if path.spec is not None else None,
        "closed": path.closed,
        "points": [[float("%.12g" % v) for v in row] for row in
                   zip(path.x, path.y, path.s, path.heading, path.curvature)],
    }
    with open(out_file, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_track(in_file):
    with open(in_file) as fh:
        doc = json.load(fh)
    spec = TrackSpec.from_dict(doc["spec"]) if doc.get("spec") else None
    if spec is not None:
        return generate_track(spec)
    pts = np.asarray(doc["points"], dtype=float)
    return RefPath(*pts.T, closed=bool(doc.get("closed", False)))
