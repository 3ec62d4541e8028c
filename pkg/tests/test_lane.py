import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from monosil.errors import BothLanesLost, IllConditioned, InsufficientSupport, NoLanePixels
from monosil.imaging import CameraModel, preprocess, render_frame
from monosil.lane import (
    LanePoly,
    SlidingWindowConfig,
    detect_lanes,
    fit_poly,
    histogram_base,
    metric_to_pixel,
    pixel_to_metric,
    sliding_window_collect,
    window_bounds,
)
from monosil.track import TrackSpec, generate_track, lane_boundaries, straight_path

CAM = CameraModel()
CFG = SlidingWindowConfig()


def band_mask(cols, h=480, w=640):
    m = np.zeros((h, w), np.uint8)
    for c in cols:
        m[:, c - 2:c + 2] = 255
    return m


def straight_frame(offset=0.0, noise=0.0, seed=0):
    center = straight_path(length=20.0, samples=401, start=(-10.0, 0.0))
    left, right = lane_boundaries(center, 0.4)
    rng = np.random.default_rng(seed)
    img = render_frame(left, right, (0.0, offset, 0.0), CAM, noise_sigma=noise, rng=rng)
    return preprocess(img)


def test_histogram_two_bands():
    m = np.zeros((480, 640), np.uint8)
    m[:, 280] = 255
    m[:, 360] = 255
    assert histogram_base(m) == (280, 360)


def test_histogram_missing_right():
    m = np.zeros((480, 640), np.uint8)
    m[:, 280] = 255
    with pytest.raises(NoLanePixels) as info:
        histogram_base(m)
    assert info.value.side == "right"


def test_histogram_tie_breaks_toward_center():
    m = np.zeros((480, 640), np.uint8)
    m[:, [100, 300, 340, 600]] = 255
    assert histogram_base(m) == (300, 340)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_histogram_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    h, w = 40, 64
    m = np.where(rng.random((h, w)) < 0.05, 255, 0).astype(np.uint8)
    m[h // 2:, 3] = 255
    m[h // 2:, 50] = 255
    counts = [sum(1 for r in range(h // 2, h) if m[r, c]) for c in range(w)]
    center = (w - 1) / 2

    def best(lo, hi):
        top = max(counts[lo:hi])
        cands = [c for c in range(lo, hi) if counts[c] == top]
        return min(cands, key=lambda c: abs(c - center))

    assert histogram_base(m) == (best(0, w // 2), best(w // 2, w))


def test_window_bounds_cover_rows():
    b = window_bounds(360, 9)
    assert b[0] == (320, 360) and b[-1] == (0, 40)
    assert all(lo < hi for lo, hi in b)


def test_vertical_band_collected_and_centers_fixed():
    m = band_mask([301])  # columns 299..302
    cfg = SlidingWindowConfig(roi_top=0)
    pts, centers = sliding_window_collect(m, 300, cfg, return_centers=True)
    assert len(pts) == 480 * 4
    assert set(centers) == {300}
    pts_roi = sliding_window_collect(m, 300, CFG)
    assert len(pts_roi) == (480 - CFG.roi_top) * 4
    assert pts_roi[:, 1].min() == CFG.roi_top


def test_empty_mask_gives_no_points():
    pts = sliding_window_collect(np.zeros((480, 640), np.uint8), 300, CFG)
    assert pts.shape == (0, 2)


def walker_oracle(mask, base_x, cfg):
    """Step-by-step re-implementation of the window walk with plain loops."""
    h, w = mask.shape
    usable = h - cfg.roi_top
    edges = [round(usable - i * usable / cfg.n_windows) for i in range(cfg.n_windows + 1)]
    center = base_x
    last_mean = None
    found = set()
    for i in range(cfg.n_windows):
        lo, hi = edges[i + 1] + cfg.roi_top, edges[i] + cfg.roi_top
        xs = []
        for y in range(lo, hi):
            for x in range(max(0, center - cfg.margin), min(w, center + cfg.margin + 1)):
                if mask[y, x]:
                    found.add((x, y))
                    xs.append(x)
        if len(xs) >= cfg.min_pixels_recenter:
            mean = sum(xs) / len(xs)
            nxt = mean + (mean - last_mean if cfg.momentum and last_mean is not None else 0.0)
            center = int(np.round(nxt))
            last_mean = mean
        else:
            last_mean = None
    return found


@pytest.mark.parametrize("momentum", [True, False])
def test_curved_band_matches_walker(momentum):
    h, w = 480, 640
    m = np.zeros((h, w), np.uint8)
    for y in range(h):
        x = int(round(300 + 0.001 * (480 - y) ** 2))
        if 0 <= x < w:
            m[y, max(0, x - 2):x + 2] = 255
    cfg = SlidingWindowConfig(momentum=momentum)
    pts = sliding_window_collect(m, 300, cfg)
    got = {(int(x), int(y)) for x, y in pts}
    assert got == walker_oracle(m, 300, cfg)
    if momentum:
        # the windows keep up with the band all the way to the top of the ROI
        assert pts[:, 1].min() < cfg.roi_top + 40


def test_base_outside_image():
    with pytest.raises(ValueError):
        sliding_window_collect(np.zeros((10, 10), np.uint8), 10, CFG)


def test_fit_exact_line():
    y = np.arange(0, 100, 3.0)
    a, b, c = fit_poly(np.column_stack([2 * y + 5, y]), 2)
    assert abs(a) < 1e-9 and abs(b - 2) < 1e-9 and abs(c - 5) < 1e-9


def test_fit_exact_quadratic():
    y = np.arange(120, 480, 2.0)
    x = 0.002 * y**2 - 0.1 * y + 300
    coeffs = fit_poly(np.column_stack([x, y]), 2)
    assert np.allclose(coeffs, (0.002, -0.1, 300), atol=1e-9, rtol=0)


def test_fit_cubic():
    y = np.arange(120, 480, 2.0)
    x = 1e-6 * y**3 + 0.001 * y**2 - 0.2 * y + 310
    coeffs = fit_poly(np.column_stack([x, y]), 3)
    assert np.allclose(np.polyval(coeffs, y), x, atol=1e-6)


def test_fit_noisy_matches_qr_oracle():
    rng = np.random.default_rng(4)
    y = rng.uniform(120, 480, 400)
    x = 0.001 * y**2 - 0.3 * y + 320 + rng.normal(0, 2, y.size)
    coeffs = fit_poly(np.column_stack([x, y]), 2)
    v = np.column_stack([y**2, y, np.ones_like(y)])
    q, r = np.linalg.qr(v)
    ref = np.linalg.solve(r, q.T @ x)
    yy = np.linspace(120, 480, 50)
    assert np.max(np.abs(np.polyval(coeffs, yy) - np.polyval(ref, yy))) < 1e-6


def test_fit_errors():
    with pytest.raises(InsufficientSupport):
        fit_poly([(1, 1), (2, 2)], 2)
    with pytest.raises(InsufficientSupport):
        fit_poly([(1, 100), (2, 101), (3, 102), (4, 105)], 2)
    pts = [(float(i), 100.0 + (i % 2) * 50) for i in range(20)]
    with pytest.raises(IllConditioned):
        fit_poly(pts, 3, cond_limit=10.0)


def test_pixel_metric_round_trip():
    px = (0.0012, -0.4, 290.0)
    back = metric_to_pixel(pixel_to_metric(px, CAM), CAM)
    assert np.allclose(back, px, atol=1e-9, rtol=0)


def test_pixel_to_metric_straight_band():
    # a vertical band at column 280 is 0.4 m to the left
    assert np.allclose(pixel_to_metric((0.0, 0.0, 280.0), CAM), (0.0, 0.0, 0.4))


def test_centered_straight_lane():
    left, right, center = detect_lanes(straight_frame(), CFG, CAM)
    a, b, c = center.coeffs
    assert abs(a) < 0.01 and abs(b) < 0.02 and abs(c) < 0.02
    assert abs(left.coeffs[0] - right.coeffs[0]) < 0.01
    assert abs(left.coeffs[1] - right.coeffs[1]) < 0.03
    assert left.valid and right.valid and left.support >= CFG.min_support


def test_offset_left_puts_center_right():
    _, _, center = detect_lanes(straight_frame(offset=0.1), CFG, CAM)
    assert center.coeffs[-1] == pytest.approx(-0.1, abs=0.02)


def test_arc_curvature_recovered():
    r = 5.0
    path = generate_track(TrackSpec(base_radius=r))
    left, right = lane_boundaries(path, 0.4)
    img = render_frame(left, right, (path.x[0], path.y[0], path.heading[0]), CAM, noise_sigma=0.0)
    mask = preprocess(img)
    # default ROI: the quadratic matches a least-squares quadratic of the true arc
    _, _, center = detect_lanes(mask, CFG, CAM)
    d = np.linspace(0.0, (CAM.origin_px[1] - CFG.roi_top) / CAM.px_per_m, 200)
    geo = np.polyfit(d, r - np.sqrt(r * r - d * d), 2)
    assert center.coeffs[0] == pytest.approx(geo[0], rel=0.05)
    # over the near field the fitted curvature is close to the true one
    near = SlidingWindowConfig(roi_top=250)
    _, _, center = detect_lanes(mask, near, CAM)
    assert 2 * center.coeffs[0] == pytest.approx(1 / r, rel=0.15)


def test_detection_is_deterministic():
    m = straight_frame(noise=2.0, seed=3)
    assert detect_lanes(m, CFG, CAM) == detect_lanes(m.copy(), CFG, CAM)


def test_missing_side_reuses_previous():
    full = straight_frame()
    prev_left, prev_right, _ = detect_lanes(full, CFG, CAM)
    only_left = full.copy()
    only_left[:, 320:] = 0
    left, right, center = detect_lanes(only_left, CFG, CAM, prev=(prev_left, prev_right))
    assert right.valid and right.support == 0
    assert right.coeffs == prev_right.coeffs
    assert center.valid


def test_single_side_shifted_without_prev():
    only_left = straight_frame()
    only_left[:, 320:] = 0
    left, right, center = detect_lanes(only_left, CFG, CAM)
    assert not right.valid
    assert center.coeffs[-1] == pytest.approx(left.coeffs[-1] - CFG.lane_half_width)


def test_both_lost():
    with pytest.raises(BothLanesLost):
        detect_lanes(np.zeros((480, 640), np.uint8), CFG, CAM)


def test_valid_polys_respect_invariants():
    left, right, _ = detect_lanes(straight_frame(noise=2.0), CFG, CAM)
    for p in (left, right):
        assert p.support >= CFG.min_support
        assert abs(p.coeffs[-1]) <= CAM.width / 2 / CAM.px_per_m


def test_lanepoly_evaluation():
    p = LanePoly("center", (0.1, -0.2, 0.3))
    assert p(2.0) == pytest.approx(0.4 - 0.4 + 0.3)
    assert p.slope(2.0) == pytest.approx(0.4 - 0.2)
    assert p.shifted(0.1, "left").coeffs[-1] == pytest.approx(0.4)
    assert math.isclose(p(0.0), 0.3)
