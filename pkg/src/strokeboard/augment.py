"""Differentiable view augmentation: random perspective + resized crop.

The pipeline is inverse-warp through a homography with bilinear sampling
(out-of-bounds reads are white, since sketches live on white paper), then a
crop, then a bilinear resize to a square output. The backward pass is the
exact adjoint of the bilinear sampling chain; augmentation parameters are
resampled every iteration and receive no gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import Rng

__all__ = [
    "AugmentConfig",
    "AugmentParams",
    "homography_from_corners",
    "sample_augmentation",
    "apply_augmentation",
    "augmentation_backward",
]


@dataclass(frozen=True)
class AugmentConfig:
    perspective_prob: float = 0.7
    distortion: float = 0.2
    scale_range: tuple[float, float] = (0.7, 1.0)
    aspect_range: tuple[float, float] = (0.95, 1.05)
    out_size: int = 512

    def __post_init__(self):
        if not 0.0 <= self.perspective_prob <= 1.0:
            raise ValueError("perspective probability must be in [0, 1]")
        if self.distortion < 0.0:
            raise ValueError("distortion scale must be >= 0")
        lo, hi = self.scale_range
        if not 0.0 < lo <= hi:
            raise ValueError(f"invalid crop scale range {self.scale_range}")
        lo, hi = self.aspect_range
        if not 0.0 < lo <= hi:
            raise ValueError(f"invalid crop aspect range {self.aspect_range}")
        if self.out_size < 1:
            raise ValueError("out_size must be >= 1")

    @classmethod
    def identity(cls, out_size: int) -> "AugmentConfig":
        """No perspective, full-frame crop; only the resize remains."""
        return cls(
            perspective_prob=0.0,
            distortion=0.0,
            scale_range=(1.0, 1.0),
            aspect_range=(1.0, 1.0),
            out_size=out_size,
        )


@dataclass(frozen=True)
class AugmentParams:
    apply_perspective: bool
    homography: np.ndarray  # 3x3, maps source corners to displaced corners
    crop_rect: tuple[float, float, float, float]  # x, y, w, h in source pixels
    out_size: int
    src_w: int
    src_h: int

    def __post_init__(self):
        h = np.asarray(self.homography, dtype=np.float64)
        if h.shape != (3, 3):
            raise ValueError("homography must be 3x3")
        det = np.linalg.det(h)
        if abs(det) < 1e-9 or np.linalg.cond(h) > 1e8:
            raise ValueError("homography is not safely invertible")
        h = h.copy()
        h.flags.writeable = False
        object.__setattr__(self, "homography", h)
        x, y, w, hgt = self.crop_rect
        eps = 1e-6
        if w < 1.0 - eps or hgt < 1.0 - eps:
            raise ValueError("crop rect must be at least 1x1 pixels")
        if x < -eps or y < -eps or x + w > self.src_w + eps or y + hgt > self.src_h + eps:
            raise ValueError("crop rect must lie inside the source image")


def homography_from_corners(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Direct linear transform from 4 point pairs, normalized so h33 = 1."""
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if src.shape != (4, 2) or dst.shape != (4, 2):
        raise ValueError("need exactly 4 source and 4 destination points")
    a = np.zeros((8, 8))
    b = np.zeros(8)
    for k, ((x, y), (xx, yy)) in enumerate(zip(src, dst)):
        a[2 * k] = [x, y, 1, 0, 0, 0, -x * xx, -y * xx]
        b[2 * k] = xx
        a[2 * k + 1] = [0, 0, 0, x, y, 1, -x * yy, -y * yy]
        b[2 * k + 1] = yy
    h = np.linalg.solve(a, b)
    return np.array(
        [[h[0], h[1], h[2]], [h[3], h[4], h[5]], [h[6], h[7], 1.0]]
    )


def sample_augmentation(
    rng: Rng, src_w: int, src_h: int, config: AugmentConfig
) -> AugmentParams:
    """Draw perspective + resized-crop parameters; deterministic given rng."""
    apply_persp = rng.random() < config.perspective_prob
    homography = np.eye(3)
    if apply_persp:
        half = np.array([0.5 * src_w, 0.5 * src_h])
        offsets = rng.uniform(-1.0, 1.0, size=(4, 2)) * (config.distortion * half)
        if np.any(offsets != 0.0):
            corners = np.array(
                [[0.0, 0.0], [src_w, 0.0], [src_w, src_h], [0.0, src_h]]
            )
            homography = homography_from_corners(corners, corners + offsets)

    s = rng.uniform(*config.scale_range)
    r = rng.uniform(*config.aspect_range)
    crop_w = min(max(src_w * np.sqrt(s * r), 1.0), float(src_w))
    crop_h = min(max(src_h * np.sqrt(s / r), 1.0), float(src_h))
    x0 = rng.uniform(0.0, src_w - crop_w) if crop_w < src_w else 0.0
    y0 = rng.uniform(0.0, src_h - crop_h) if crop_h < src_h else 0.0
    return AugmentParams(
        apply_perspective=apply_persp,
        homography=homography,
        crop_rect=(float(x0), float(y0), float(crop_w), float(crop_h)),
        out_size=config.out_size,
        src_w=src_w,
        src_h=src_h,
    )


def _bilinear_coords(img_shape, xs, ys):
    h, w = img_shape
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    fx = xs - x0
    fy = ys - y0
    corners = []
    for dy in (0, 1):
        for dx in (0, 1):
            wx = fx if dx else 1.0 - fx
            wy = fy if dy else 1.0 - fy
            xi = x0 + dx
            yi = y0 + dy
            inside = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
            corners.append((xi, yi, wx * wy, inside))
    return corners


def _bilinear_gather(img: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Sample img at index-space coords; out-of-bounds reads white (1.0)."""
    out = np.zeros(xs.shape, dtype=np.float64)
    for xi, yi, wgt, inside in _bilinear_coords(img.shape, xs, ys):
        val = np.where(
            inside,
            img[np.clip(yi, 0, img.shape[0] - 1), np.clip(xi, 0, img.shape[1] - 1)],
            1.0,
        )
        out += wgt * val
    return out


def _bilinear_scatter(shape, xs, ys, grad: np.ndarray) -> np.ndarray:
    """Adjoint of _bilinear_gather; out-of-bounds cotangents are dropped."""
    out = np.zeros(shape, dtype=np.float64)
    for xi, yi, wgt, inside in _bilinear_coords(shape, xs, ys):
        np.add.at(
            out,
            (yi[inside], xi[inside]),
            (wgt * grad)[inside],
        )
    return out


def _is_identity_homography(params: AugmentParams) -> bool:
    return not params.apply_perspective or bool(
        np.array_equal(params.homography, np.eye(3))
    )


def _warp_coords(params: AugmentParams):
    """Source-index coords sampled by each warped pixel (inverse warp)."""
    h_inv = np.linalg.inv(params.homography)
    cols = np.arange(params.src_w, dtype=np.float64) + 0.5
    rows = (np.arange(params.src_h, dtype=np.float64) + 0.5)[:, None]
    denom = h_inv[2, 0] * cols + h_inv[2, 1] * rows + h_inv[2, 2]
    xs = (h_inv[0, 0] * cols + h_inv[0, 1] * rows + h_inv[0, 2]) / denom
    ys = (h_inv[1, 0] * cols + h_inv[1, 1] * rows + h_inv[1, 2]) / denom
    return xs - 0.5, ys - 0.5


def _crop_coords(params: AugmentParams):
    """Warped-image index positions sampled by each output row/column."""
    x0, y0, cw, ch = params.crop_rect
    n = params.out_size
    us = np.arange(n, dtype=np.float64) + 0.5
    xs = x0 + us * (cw / n) - 0.5
    ys = y0 + us * (ch / n) - 0.5
    return xs, ys


def _axis_interp(img: np.ndarray, pos: np.ndarray, axis: int) -> np.ndarray:
    """1-D linear interpolation along one axis; out-of-bounds reads white."""
    n_src = img.shape[axis]
    i0 = np.floor(pos).astype(np.int64)
    f = pos - i0
    wshape = [1, 1]
    wshape[axis] = len(pos)
    out = None
    for idx, wgt in ((i0, 1.0 - f), (i0 + 1, f)):
        inside = (idx >= 0) & (idx < n_src)
        vals = np.take(img, np.clip(idx, 0, n_src - 1), axis=axis)
        if not inside.all():
            vals = np.where(inside.reshape(wshape), vals, 1.0)
        term = wgt.reshape(wshape) * vals
        out = term if out is None else out + term
    return out


def _axis_scatter(shape_along: int, pos: np.ndarray, grad: np.ndarray, axis: int) -> np.ndarray:
    """Exact adjoint of _axis_interp; out-of-bounds cotangents are dropped."""
    i0 = np.floor(pos).astype(np.int64)
    f = pos - i0
    out_shape = list(grad.shape)
    out_shape[axis] = shape_along
    out = np.zeros(out_shape, dtype=np.float64)
    moved = np.moveaxis(out, axis, 0)
    g = np.moveaxis(grad, axis, 0)
    for idx, wgt in ((i0, 1.0 - f), (i0 + 1, f)):
        inside = (idx >= 0) & (idx < shape_along)
        weighted = wgt.reshape(-1, *([1] * (g.ndim - 1))) * g
        tgt = idx[inside]
        src = weighted[inside]
        if tgt.size and (np.diff(tgt) == 0).any():
            np.add.at(moved, tgt, src)  # upscale: duplicate targets
        else:
            moved[tgt] += src
    return out


def apply_augmentation(image: np.ndarray, params: AugmentParams) -> np.ndarray:
    """Warp, crop, and resize to out_size x out_size.

    Applying the same params to two images keeps them pixel-aligned.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.shape != (params.src_h, params.src_w):
        raise ValueError(
            f"image shape {image.shape} != params source ({params.src_h}, {params.src_w})"
        )
    if _is_identity_homography(params):
        warped = image
    else:
        xs, ys = _warp_coords(params)
        warped = _bilinear_gather(image, np.broadcast_to(xs, image.shape), np.broadcast_to(ys, image.shape))
    # Crop + resize is axis-aligned, so it separates into two 1-D passes.
    cx, cy = _crop_coords(params)
    return _axis_interp(_axis_interp(warped, cy, axis=0), cx, axis=1)


def augmentation_backward(params: AugmentParams, dL_dout: np.ndarray) -> np.ndarray:
    """Exact adjoint of apply_augmentation (no gradient w.r.t. params)."""
    dL_dout = np.asarray(dL_dout, dtype=np.float64)
    n = params.out_size
    if dL_dout.shape != (n, n):
        raise ValueError(f"cotangent shape {dL_dout.shape} != ({n}, {n})")
    cx, cy = _crop_coords(params)
    g_rows = _axis_scatter(params.src_w, cx, dL_dout, axis=1)
    g_warped = _axis_scatter(params.src_h, cy, g_rows, axis=0)
    if _is_identity_homography(params):
        return g_warped
    xs, ys = _warp_coords(params)
    shape = (params.src_h, params.src_w)
    return _bilinear_scatter(
        shape, np.broadcast_to(xs, shape), np.broadcast_to(ys, shape), g_warped
    )
