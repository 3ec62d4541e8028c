"""Sliding-window lane detector.

Histogram base search on the lower half of a binary bird's-eye mask,
bottom-to-top window walk per side, least-squares fit of x(y) in pixels,
then conversion to metric vehicle-frame polynomials lateral(d).
"""

from dataclasses import dataclass, replace

import numpy as np
from numpy.polynomial import polynomial as P

from .errors import BothLanesLost, IllConditioned, InsufficientSupport, NoLanePixels


@dataclass(frozen=True)
class LanePoly:
    """``lateral = coeffs[0] d^n + ... + coeffs[-1]`` (highest degree first).

    ``d`` is forward distance and ``lateral`` the left offset, both in metres.
    ``pixel_coeffs`` holds the source fit x(y) in pixels, also highest first.
    """

    side: str
    coeffs: tuple
    valid: bool = True
    support: int = 0
    pixel_coeffs: tuple = None

    def __call__(self, d):
        return np.polyval(self.coeffs, d)

    def slope(self, d):
        return np.polyval(np.polyder(self.coeffs), d)

    def shifted(self, offset, side):
        c = list(self.coeffs)
        c[-1] += offset
        return replace(self, side=side, coeffs=tuple(c), pixel_coeffs=None)


@dataclass(frozen=True)
class SlidingWindowConfig:
    n_windows: int = 9
    margin: int = 60
    min_pixels_recenter: int = 40
    min_support: int = 50
    order: int = 2
    lane_half_width: float = 0.4
    momentum: bool = True
    roi_top: int = 120

    def __post_init__(self):
        if self.n_windows < 2:
            raise ValueError("n_windows must be >= 2")
        if self.margin < 1:
            raise ValueError("margin must be >= 1")
        if self.order not in (2, 3):
            raise ValueError("order must be 2 or 3")


def _argmax_toward(hist, center):
    """argmax with ties resolved toward ``center``."""
    peak = hist.max()
    cols = np.nonzero(hist == peak)[0]
    return int(cols[np.argmin(np.abs(cols - center))])


def histogram_base(mask):
    """Column histogram of the lower half; returns ``(left_x, right_x)``."""
    h, w = mask.shape
    hist = (mask[h // 2:, :] > 0).sum(axis=0)
    mid = w // 2
    left, right = hist[:mid], hist[mid:]
    if not left.any():
        raise NoLanePixels("left")
    if not right.any():
        raise NoLanePixels("right")
    center = (w - 1) / 2.0
    return _argmax_toward(left, center), mid + _argmax_toward(right, center - mid)


def window_bounds(height, n_windows):
    """Row ranges ``[lo, hi)`` of the windows, ordered bottom to top."""
    edges = np.round(np.linspace(height, 0, n_windows + 1)).astype(int)
    return [(int(edges[i + 1]), int(edges[i])) for i in range(n_windows)]


def sliding_window_collect(mask, base_x, cfg=SlidingWindowConfig(), return_centers=False,
                           pixels=None):
    """Collect lane pixels with windows walking up from ``base_x``.

    Rows ``[cfg.roi_top, height)`` are split into ``n_windows`` strips. A
    window holding at least ``min_pixels_recenter`` pixels moves the next
    window to their mean x; with ``momentum`` the shift between two
    consecutive re-centred means is added as well, so the walk keeps up with
    bending bands. Otherwise the center carries over unchanged.

    Returns an (n, 2) integer array of ``(x, y)`` pixels; optionally also the
    list of window centers used. ``pixels`` may carry a precomputed
    ``np.nonzero(mask)``.
    """
    h, w = mask.shape
    if not 0 <= base_x < w:
        raise ValueError("base_x outside the image")
    ys, xs = np.nonzero(mask) if pixels is None else pixels  # row-major: ys sorted
    center = int(base_x)
    last_mean = None
    picked = []
    centers = []
    for lo, hi in window_bounds(h - cfg.roi_top, cfg.n_windows):
        lo, hi = lo + cfg.roi_top, hi + cfg.roi_top
        centers.append(center)
        a, b = np.searchsorted(ys, [lo, hi])
        band = xs[a:b]
        hit = np.nonzero((band >= center - cfg.margin) & (band <= center + cfg.margin))[0]
        if len(hit):
            picked.append(a + hit)
        if len(hit) >= cfg.min_pixels_recenter:
            mean = float(band[hit].mean())
            step = mean - last_mean if (cfg.momentum and last_mean is not None) else 0.0
            center = int(np.round(mean + step))
            last_mean = mean
        else:
            last_mean = None
    if picked:
        idx = np.concatenate(picked)
        pts = np.column_stack([xs[idx], ys[idx]])
    else:
        pts = np.zeros((0, 2), dtype=int)
    return (pts, centers) if return_centers else pts


def fit_poly(points, order=2, cond_limit=1e10):
    """Least-squares x(y) fit, coefficients highest degree first.

    Normal equations are formed on y rescaled to [0, 1] and solved by
    Cholesky; the scaled coefficients are then mapped back to raw y.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) < order + 1:
        raise InsufficientSupport(f"need {order + 1} points, got {len(pts)}")
    x, y = pts[:, 0], pts[:, 1]
    y_lo, y_hi = y.min(), y.max()
    span = y_hi - y_lo
    if span < 10:
        raise InsufficientSupport("points span fewer than 10 rows")
    t = (y - y_lo) / span
    v = np.vander(t, order + 1, increasing=True)
    ata = v.T @ v
    if np.linalg.cond(ata) > cond_limit:
        raise IllConditioned("normal matrix is ill-conditioned")
    l = np.linalg.cholesky(ata)
    z = np.linalg.solve(l, v.T @ x)
    beta = np.linalg.solve(l.T, z)
    # x = sum beta_k ((y - y_lo) / span)^k
    poly_y = _compose(beta, np.array([-y_lo / span, 1.0 / span]))
    return tuple(float(c) for c in poly_y[::-1])


def _compose(coeffs, lin):
    """Low-first coefficients of p(lin(y)); ``coeffs`` and ``lin`` low-first."""
    out = np.zeros(1)
    for c in coeffs[::-1]:
        out = P.polyadd(P.polymul(out, lin), [c])
    out = np.asarray(out, dtype=float)
    return np.pad(out, (0, len(coeffs) - len(out)))


def pixel_to_metric(pixel_coeffs, cam):
    """Convert x(y) pixel coefficients into lateral(d) metric coefficients."""
    u0, v0 = cam.origin_px
    k = cam.px_per_m
    low = np.asarray(pixel_coeffs, dtype=float)[::-1]
    # y = v0 - k d  ->  x(d); lateral = (u0 - x) / k
    xd = _compose(low, np.array([v0, -k]))
    lat = -xd / k
    lat[0] += u0 / k
    return tuple(float(c) for c in lat[::-1])


def metric_to_pixel(metric_coeffs, cam):
    """Inverse of :func:`pixel_to_metric`."""
    u0, v0 = cam.origin_px
    k = cam.px_per_m
    low = np.asarray(metric_coeffs, dtype=float)[::-1]
    # d = (v0 - y) / k  ->  lateral(y); x = u0 - k lateral
    ly = _compose(low, np.array([v0 / k, -1.0 / k]))
    x = -k * ly
    x[0] += u0
    return tuple(float(c) for c in x[::-1])


def _fit_side(mask, base_x, side, cfg, cam, pixels=None):
    pts = sliding_window_collect(mask, base_x, cfg, pixels=pixels)
    invalid = LanePoly(side, (0.0,) * (cfg.order + 1), valid=False, support=len(pts))
    if len(pts) < cfg.min_support:
        return invalid
    try:
        px = fit_poly(pts, cfg.order)
    except (InsufficientSupport, IllConditioned):
        return invalid
    coeffs = pixel_to_metric(px, cam)
    if abs(coeffs[-1]) > cam.width / 2.0 / cam.px_per_m:
        return invalid
    return LanePoly(side, coeffs, valid=True, support=len(pts), pixel_coeffs=px)


def detect_lanes(mask, cfg, cam, prev=None):
    """Run the detector on a binary mask; returns ``(left, right, center)``.

    When a side has no usable pixels and ``prev = (left, right)`` is given,
    that side's previous fit is reused with ``support == 0``.
    """
    if mask.shape != (cam.height, cam.width):
        raise ValueError("mask does not match the camera frame size")
    h, w = mask.shape
    hist = (mask[h // 2:, :] > 0).sum(axis=0)
    mid = w // 2
    bases = {}
    try:
        bases["left"], bases["right"] = histogram_base(mask)
    except NoLanePixels:
        center = (w - 1) / 2.0
        if hist[:mid].any():
            bases["left"] = _argmax_toward(hist[:mid], center)
        if hist[mid:].any():
            bases["right"] = mid + _argmax_toward(hist[mid:], center - mid)

    pixels = np.nonzero(mask)
    sides = {}
    for i, side in enumerate(("left", "right")):
        if side in bases:
            poly = _fit_side(mask, bases[side], side, cfg, cam, pixels)
        else:
            poly = LanePoly(side, (0.0,) * (cfg.order + 1), valid=False, support=0)
        if not poly.valid and prev is not None and prev[i] is not None and prev[i].valid:
            poly = replace(prev[i], support=0)
        sides[side] = poly

    left, right = sides["left"], sides["right"]
    hw = cfg.lane_half_width
    if left.valid and right.valid:
        coeffs = tuple((a + b) / 2.0 for a, b in zip(left.coeffs, right.coeffs))
        center = LanePoly("center", coeffs, True, left.support + right.support)
    elif left.valid:
        center = left.shifted(-hw, "center")
    elif right.valid:
        center = right.shifted(hw, "center")
    else:
        raise BothLanesLost("neither lane boundary detected")
    return left, right, center
