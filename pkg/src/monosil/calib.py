"""Planar homography estimation (normalized DLT), warping and grid checks."""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateConfiguration, DegenerateGrid, PointAtInfinity

_EPS_W = 1e-12


@dataclass(frozen=True)
class Correspondence:
    src: tuple
    dst: tuple


@dataclass
class ChessboardGrid:
    """Interior corners of a chessboard, row-major.

    ``rows`` corners per column, ``cols`` corners per row. The default board
    is 5 x 4 (20 corners).
    """

    rows: int
    cols: int
    corners: np.ndarray

    def __post_init__(self):
        self.corners = np.asarray(self.corners, dtype=float).reshape(-1, 2)
        if len(self.corners) != self.rows * self.cols:
            raise ValueError(
                f"expected {self.rows * self.cols} corners, got {len(self.corners)}")

    @classmethod
    def perfect(cls, rows=4, cols=5, pitch=40.0, origin=(0.0, 0.0)):
        ys, xs = np.mgrid[0:rows, 0:cols]
        pts = np.column_stack([xs.ravel() * pitch + origin[0],
                               ys.ravel() * pitch + origin[1]])
        return cls(rows, cols, pts)


def _normalizing_transform(pts):
    centroid = pts.mean(axis=0)
    mean_dist = np.mean(np.linalg.norm(pts - centroid, axis=1))
    if mean_dist < 1e-15:
        raise DegenerateConfiguration("all points coincide")
    s = np.sqrt(2.0) / mean_dist
    return np.array([[s, 0.0, -s * centroid[0]],
                     [0.0, s, -s * centroid[1]],
                     [0.0, 0.0, 1.0]])


def _as_pairs(pairs):
    src, dst = [], []
    for p in pairs:
        if isinstance(p, Correspondence):
            src.append(p.src)
            dst.append(p.dst)
        else:
            (sx, sy), (dx, dy) = p
            src.append((sx, sy))
            dst.append((dx, dy))
    return np.asarray(src, dtype=float), np.asarray(dst, dtype=float)


def estimate_homography(pairs, rank_tol=1e-10):
    """Estimate the 3x3 homography mapping ``src`` to ``dst`` points.

    Hartley-normalized DLT: both point sets are translated to their centroid
    and scaled to mean distance sqrt(2), the 2n x 9 design matrix is solved
    by SVD, and the result is denormalized and scaled so ``H[2, 2] == 1``.
    """
    src, dst = _as_pairs(pairs)
    n = len(src)
    if n < 4:
        raise DegenerateConfiguration(f"need at least 4 correspondences, got {n}")
    if not (np.all(np.isfinite(src)) and np.all(np.isfinite(dst))):
        raise DegenerateConfiguration("non-finite coordinates")

    t_src = _normalizing_transform(src)
    t_dst = _normalizing_transform(dst)
    ps = (t_src @ np.column_stack([src, np.ones(n)]).T).T
    pd = (t_dst @ np.column_stack([dst, np.ones(n)]).T).T

    a = np.zeros((2 * n, 9))
    x, y = ps[:, 0], ps[:, 1]
    u, v = pd[:, 0], pd[:, 1]
    a[0::2, 0:3] = ps
    a[0::2, 6] = -u * x
    a[0::2, 7] = -u * y
    a[0::2, 8] = -u
    a[1::2, 3:6] = ps
    a[1::2, 6] = -v * x
    a[1::2, 7] = -v * y
    a[1::2, 8] = -v

    _, sv, vt = np.linalg.svd(a)
    # a well-posed problem leaves exactly one (near-)null direction
    if sv[7] < rank_tol * sv[0]:
        raise DegenerateConfiguration("design matrix is rank deficient")

    h_norm = vt[-1].reshape(3, 3)
    h = np.linalg.inv(t_dst) @ h_norm @ t_src
    if abs(h[2, 2]) < 1e-15:
        raise DegenerateConfiguration("estimated homography has h33 == 0")
    h = h / h[2, 2]
    if abs(np.linalg.det(h)) <= 1e-12:
        raise DegenerateConfiguration("estimated homography is singular")
    return h


def apply_homography(h, p):
    """Map a 2D point (or an (n, 2) array of points) through ``h``."""
    h = np.asarray(h, dtype=float)
    pts = np.asarray(p, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    hom = pts @ h[:, :2].T + h[:, 2]
    w = hom[:, 2]
    if np.any(np.abs(w) <= _EPS_W):
        raise PointAtInfinity("point maps to infinity")
    out = hom[:, :2] / w[:, None]
    return out[0] if single else out


def warp_image(img, h, out_w, out_h):
    """Warp ``img`` by ``h`` using inverse mapping and bilinear sampling.

    Output pixels whose source falls outside the input are 0. Pixel centers
    sit on integer coordinates, x = column, y = row.
    """
    img = np.asarray(img)
    src_h, src_w = img.shape
    h_inv = np.linalg.inv(np.asarray(h, dtype=float))
    ys, xs = np.mgrid[0:out_h, 0:out_w]
    hom = h_inv @ np.vstack([xs.ravel(), ys.ravel(), np.ones(xs.size)])
    w = hom[2]
    ok = np.abs(w) > _EPS_W
    sx = np.full(w.shape, -1.0)
    sy = np.full(w.shape, -1.0)
    sx[ok] = hom[0, ok] / w[ok]
    sy[ok] = hom[1, ok] / w[ok]

    tol = 1e-9
    inside = ok & (sx >= -tol) & (sx <= src_w - 1 + tol) & (sy >= -tol) & (sy <= src_h - 1 + tol)
    sx = np.clip(sx, 0, src_w - 1)
    sy = np.clip(sy, 0, src_h - 1)
    x0 = np.floor(sx).astype(int)
    y0 = np.floor(sy).astype(int)
    x1 = np.minimum(x0 + 1, src_w - 1)
    y1 = np.minimum(y0 + 1, src_h - 1)
    fx = sx - x0
    fy = sy - y0

    src = img.astype(float)
    val = (src[y0, x0] * (1 - fx) * (1 - fy) + src[y0, x1] * fx * (1 - fy)
           + src[y1, x0] * (1 - fx) * fy + src[y1, x1] * fx * fy)
    val[~inside] = 0.0
    out = val.reshape(out_h, out_w)
    if np.issubdtype(img.dtype, np.integer):
        return np.clip(np.rint(out), 0, 255).astype(img.dtype)
    return out


def verify_grid_spacing(grid):
    """Return ``(mean_dx, mean_dy, max_rel_dev)`` over adjacent corner pairs.

    ``max_rel_dev`` is the largest ``|spacing - mean| / mean`` taken over
    both axes, each pair compared against the mean of its own axis.
    """
    if grid.rows < 2 or grid.cols < 2:
        raise DegenerateGrid("need at least a 2 x 2 grid")
    c = grid.corners.reshape(grid.rows, grid.cols, 2)
    dx = np.linalg.norm(np.diff(c, axis=1), axis=2).ravel()
    dy = np.linalg.norm(np.diff(c, axis=0), axis=2).ravel()
    if min(dx.min(), dy.min()) < 1e-9:
        raise DegenerateGrid("adjacent corners coincide")
    mdx, mdy = dx.mean(), dy.mean()
    dev = max(np.max(np.abs(dx - mdx)) / mdx, np.max(np.abs(dy - mdy)) / mdy)
    return float(mdx), float(mdy), float(dev)


def read_correspondences(path):
    """Read ``sx sy dx dy`` lines; ``#`` starts a comment."""
    pairs = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            vals = line.split()
            if len(vals) != 4:
                raise ValueError(f"{path}:{lineno}: expected 4 numbers, got {len(vals)}")
            sx, sy, dx, dy = map(float, vals)
            pairs.append(Correspondence((sx, sy), (dx, dy)))
    return pairs


def write_correspondences(path, pairs):
    with open(path, "w") as fh:
        fh.write("# sx sy dx dy\n")
        for p in pairs:
            fh.write("%.12g %.12g %.12g %.12g\n" % (*p.src, *p.dst))


def render_checkerboard(rows=4, cols=5, pitch=40, margin=60):
    """Render a board whose interior corners form a ``rows`` x ``cols`` grid.

    Returns ``(image, grid)``; corners sit on pixel-boundary intersections
    (half-integer coordinates) so bilinear sampling is symmetric around them.
    """
    n_sq_x, n_sq_y = cols + 1, rows + 1
    width = n_sq_x * pitch + 2 * margin
    height = n_sq_y * pitch + 2 * margin
    img = np.full((height, width), 255, dtype=np.uint8)
    for j in range(n_sq_y):
        for i in range(n_sq_x):
            if (i + j) % 2 == 0:
                y0 = margin + j * pitch
                x0 = margin + i * pitch
                img[y0:y0 + pitch, x0:x0 + pitch] = 0
    origin = (margin + pitch - 0.5, margin + pitch - 0.5)
    return img, ChessboardGrid.perfect(rows, cols, float(pitch), origin)
