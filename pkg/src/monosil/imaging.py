"""Synthetic bird's-eye camera and the grayscale preprocessing chain.

Images are 2D ``uint8`` numpy arrays indexed ``[row, col]``. Pixel centers
sit on integer coordinates. In the vehicle frame x points forward and y to
the left; forward maps to image-up and left maps to image-left.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import NonBinaryInput

FRAME_W = 640
FRAME_H = 480


@dataclass(frozen=True)
class CameraModel:
    px_per_m: float = 100.0
    origin_px: tuple = (320.0, 470.0)
    width: int = FRAME_W
    height: int = FRAME_H

    def __post_init__(self):
        if self.px_per_m <= 0:
            raise ValueError("px_per_m must be positive")
        u, v = self.origin_px
        if not (0 <= u <= self.width and 0 <= v <= self.height):
            raise ValueError("origin_px must lie inside the frame")

    def to_pixels(self, fwd, left):
        u0, v0 = self.origin_px
        return u0 - np.asarray(left) * self.px_per_m, v0 - np.asarray(fwd) * self.px_per_m

    def to_metric(self, u, v):
        u0, v0 = self.origin_px
        return (v0 - np.asarray(v)) / self.px_per_m, (u0 - np.asarray(u)) / self.px_per_m


def world_to_vehicle(x, y, pose):
    x0, y0, phi = pose
    c, s = math.cos(phi), math.sin(phi)
    dx, dy = np.asarray(x) - x0, np.asarray(y) - y0
    return c * dx + s * dy, -s * dx + c * dy


def _stroke_distance(dist, u, v, half_px):
    """Lower ``dist`` in place with the pixel distance to the polyline (u, v)."""
    height, width = dist.shape
    ax, ay, bx, by = u[:-1], v[:-1], u[1:], v[1:]
    pad = half_px + 2.0
    x_lo = np.floor(np.minimum(ax, bx) - pad).astype(int)
    y_lo = np.floor(np.minimum(ay, by) - pad).astype(int)
    span = np.ceil(max(np.max(np.abs(bx - ax)), np.max(np.abs(by - ay))) + 2 * pad).astype(int) + 1
    off = np.arange(span)
    xs = x_lo[:, None, None] + off[None, None, :]
    ys = y_lo[:, None, None] + off[None, :, None]
    ux, uy = (bx - ax)[:, None, None], (by - ay)[:, None, None]
    l2 = ux * ux + uy * uy
    rx, ry = xs - ax[:, None, None], ys - ay[:, None, None]
    t = np.clip((rx * ux + ry * uy) / np.where(l2 > 0, l2, 1.0), 0.0, 1.0)
    d = np.hypot(rx - t * ux, ry - t * uy)
    xs, ys = np.broadcast_arrays(xs, ys)
    ok = (xs >= 0) & (xs < width) & (ys >= 0) & (ys < height) & (d < pad)
    np.minimum.at(dist.ravel(), (ys[ok] * width + xs[ok]), d[ok])


def render_clean(paths, pose, cam, line_width=0.05):
    """Noise-free float render of the given boundary paths, values in [0, 255]."""
    half_px = 0.5 * line_width * cam.px_per_m
    dist = np.full((cam.height, cam.width), np.inf)
    margin = (half_px + 2.0) / cam.px_per_m
    fwd_max = cam.origin_px[1] / cam.px_per_m + margin
    fwd_min = (cam.origin_px[1] - cam.height) / cam.px_per_m - margin
    lat_max = cam.origin_px[0] / cam.px_per_m + margin
    lat_min = (cam.origin_px[0] - cam.width) / cam.px_per_m - margin
    for path in paths:
        fx, fy = world_to_vehicle(path.x, path.y, pose)
        inside = (fx >= fwd_min) & (fx <= fwd_max) & (fy >= lat_min) & (fy <= lat_max)
        # keep segments with at least one end in the (padded) frame
        keep = inside[:-1] | inside[1:]
        if not np.any(keep):
            continue
        seg = np.nonzero(keep)[0]
        # split into runs of consecutive segments
        breaks = np.nonzero(np.diff(seg) > 1)[0] + 1
        for run in np.split(seg, breaks):
            idx = np.append(run, run[-1] + 1)
            u, v = cam.to_pixels(fx[idx], fy[idx])
            _stroke_distance(dist, u, v, half_px)
    # unit-width box filter across the stroke edge gives anti-aliasing
    return 255.0 * np.clip(half_px + 0.5 - dist, 0.0, 1.0)


def render_frame(path_left, path_right, pose, cam, line_width=0.05, noise_sigma=2.0, rng=None):
    """Render the bird's-eye frame seen from ``pose = (x, y, phi)``.

    Boundaries are drawn as anti-aliased strokes of ``line_width`` metres at
    intensity 255 over a black ground, then additive Gaussian noise is added
    (``rng`` required when ``noise_sigma > 0``) and the result clamped.
    """
    img = render_clean([path_left, path_right], pose, cam, line_width)
    if noise_sigma > 0:
        if rng is None:
            raise ValueError("an rng is required for noisy rendering")
        img = img + noise_sigma * rng.standard_normal(size=img.shape, dtype=np.float32)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def gaussian_kernel(sigma):
    radius = int(math.ceil(3 * sigma))
    x = np.arange(-radius, radius + 1, dtype=float)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(img, sigma):
    """Separable Gaussian blur, kernel radius ceil(3 sigma), clamp-to-edge.

    ``uint8`` input is rounded back to ``uint8``; float input stays float.
    """
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return img.copy()
    if np.issubdtype(img.dtype, np.floating):
        return _separable(img.astype(float), gaussian_kernel(sigma))
    k = gaussian_kernel(sigma).astype(np.float32)
    r = len(k) // 2
    h, w = img.shape
    p = np.pad(img.astype(np.float32), r, mode="edge")
    tmp = np.zeros((h, w + 2 * r), np.float32)
    for i, wt in enumerate(k):
        tmp += wt * p[i:i + h, :]
    out = np.zeros((h, w), np.float32)
    for i, wt in enumerate(k):
        out += wt * tmp[:, i:i + w]
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def _separable(img, k):
    r = len(k) // 2
    h, w = img.shape
    p = np.pad(img, r, mode="edge")
    tmp = sum(wt * p[i:i + h, :] for i, wt in enumerate(k))
    return sum(wt * tmp[:, i:i + w] for i, wt in enumerate(k))


def threshold_binary(img, t):
    if not 0 <= t <= 255:
        raise ValueError("threshold must be within [0, 255]")
    return np.where(img > t, 255, 0).astype(np.uint8)


def _check_binary(img):
    if not np.all((img == 0) | (img == 255)):
        raise NonBinaryInput("morphology expects values in {0, 255}")


def _rank_filter(img, radius, fn, border):
    out = img
    for axis in (0, 1):
        pad = [(0, 0), (0, 0)]
        pad[axis] = (radius, radius)
        p = np.pad(out, pad, mode="constant", constant_values=border)
        n = out.shape[axis]
        acc = None
        for i in range(2 * radius + 1):
            sl = [slice(None), slice(None)]
            sl[axis] = slice(i, i + n)
            v = p[tuple(sl)]
            acc = v.copy() if acc is None else fn(acc, v)
        out = acc
    return out


def erode(img, radius):
    return _rank_filter(img, radius, np.minimum, 255)


def dilate(img, radius):
    return _rank_filter(img, radius, np.maximum, 0)


def morphology(img, op, radius):
    """Binary morphology with a square (2 radius + 1) structuring element."""
    _check_binary(img)
    if radius < 1:
        raise ValueError("radius must be >= 1")
    if op == "erode":
        return erode(img, radius)
    if op == "dilate":
        return dilate(img, radius)
    if op == "open":
        return dilate(erode(img, radius), radius)
    if op == "close":
        return erode(dilate(img, radius), radius)
    raise ValueError(f"unknown morphology op {op!r}")


@dataclass(frozen=True)
class PreprocessConfig:
    blur_sigma: float = 1.5
    threshold: int = 100
    open_radius: int = 0
    close_radius: int = 2


def preprocess(img, cfg=PreprocessConfig()):
    """Blur, threshold, then optional open/close; returns a binary mask."""
    mask = threshold_binary(gaussian_blur(img, cfg.blur_sigma), cfg.threshold)
    if cfg.open_radius > 0:
        mask = morphology(mask, "open", cfg.open_radius)
    if cfg.close_radius > 0:
        mask = morphology(mask, "close", cfg.close_radius)
    return mask


def undistort(img):
    """Lens undistortion hook; the synthetic camera is distortion-free."""
    return img


def write_pgm(path, img):
    img = np.asarray(img)
    if img.ndim != 2:
        raise ValueError("PGM images must be 2D")
    data = np.clip(img, 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (data.shape[1], data.shape[0]))
        fh.write(data.tobytes())


def read_pgm(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            while pos < len(raw) and raw[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos])
    if tokens[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM (P5) file")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval > 255:
        raise ValueError(f"{path}: 16-bit PGM is not supported")
    pos += 1
    data = np.frombuffer(raw[pos:pos + w * h], dtype=np.uint8)
    if data.size != w * h:
        raise ValueError(f"{path}: truncated pixel data")
    return data.reshape(h, w).copy()
