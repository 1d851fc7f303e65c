"""Differentiable rasterizer: Bezier strokes to grayscale pixels and back.

Forward model, per pixel center q (at col+0.5, row+0.5):
    d_i(q)  = distance from q to stroke i's flattened polyline
    s_i     = clamp((w_i/2 + a - d_i) / (2a), 0, 1)      a = anti-alias half-width
    cov_i   = s_i^2 (3 - 2 s_i)
    I(q)    = prod_i (1 - opacity_i * ink_i * cov_i)      white = 1.0

The backward pass is the exact adjoint of this model with the flattening
parameters t_k treated as constants: the nearest-chord projection parameter
is locally constant at the minimum (envelope argument), so chaining through
the fixed nearest vertex pair and the Bernstein weights at t_k is exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .model import Sketch, Stroke

__all__ = [
    "DEFAULT_FLATTEN_TOL",
    "DEFAULT_AA_WIDTH",
    "FlattenedStroke",
    "RenderGradients",
    "eval_bezier",
    "flatten",
    "render",
    "render_backward",
    "sketch_coverage",
    "render_from_coverage",
    "backward_from_coverage",
    "compose_ink",
    "write_png",
    "read_png",
]

DEFAULT_FLATTEN_TOL = 0.1
DEFAULT_AA_WIDTH = 1.0

# De Casteljau halving converges quadratically; 24 levels is far beyond any
# tolerance representable at canvas scale and guards against degenerate input.
_MAX_SUBDIV_DEPTH = 24


def eval_bezier(segment: np.ndarray, t) -> np.ndarray:
    """Cubic Bezier point(s) in Bernstein form; t may be scalar or array."""
    seg = np.asarray(segment, dtype=np.float64)
    if seg.shape != (4, 2):
        raise ValueError(f"segment must be 4 control points, got {seg.shape}")
    tt = np.asarray(t, dtype=np.float64)
    if np.any(tt < 0.0) or np.any(tt > 1.0):
        raise ValueError("curve parameter t must lie in [0, 1]")
    mt = 1.0 - tt
    b0 = mt * mt * mt
    b1 = 3.0 * mt * mt * tt
    b2 = 3.0 * mt * tt * tt
    b3 = tt * tt * tt
    out = (
        b0[..., None] * seg[0]
        + b1[..., None] * seg[1]
        + b2[..., None] * seg[2]
        + b3[..., None] * seg[3]
    )
    return out if tt.ndim else out.reshape(2)


def _pt_seg_dist_sq(px, py, ax, ay, bx, by) -> float:
    # Relative-only arithmetic: every term is a coordinate difference, so
    # the value is bitwise invariant under exact translations of the input.
    ex = bx - ax
    ey = by - ay
    dx = px - ax
    dy = py - ay
    ll = ex * ex + ey * ey
    if ll > 0.0:
        u = (dx * ex + dy * ey) / ll
        if u < 0.0:
            u = 0.0
        elif u > 1.0:
            u = 1.0
    else:
        u = 0.0
    rx = dx - u * ex
    ry = dy - u * ey
    return rx * rx + ry * ry


def _subdivide(p, t0: float, t1: float, tol_sq: float, depth: int, out: list):
    # Convex hull bound: curve deviation from the chord is at most the
    # larger inner-control-point distance to the chord segment. Scalar
    # float math on purpose; this recursion is on the per-iteration path.
    x0, y0, x1, y1, x2, y2, x3, y3 = p
    dev = max(
        _pt_seg_dist_sq(x1, y1, x0, y0, x3, y3),
        _pt_seg_dist_sq(x2, y2, x0, y0, x3, y3),
    )
    if dev <= tol_sq or depth >= _MAX_SUBDIV_DEPTH:
        out.append(t1)
        return
    m01x = 0.5 * (x0 + x1); m01y = 0.5 * (y0 + y1)
    m12x = 0.5 * (x1 + x2); m12y = 0.5 * (y1 + y2)
    m23x = 0.5 * (x2 + x3); m23y = 0.5 * (y2 + y3)
    ax = 0.5 * (m01x + m12x); ay = 0.5 * (m01y + m12y)
    bx = 0.5 * (m12x + m23x); by = 0.5 * (m12y + m23y)
    mx = 0.5 * (ax + bx); my = 0.5 * (ay + by)
    tm = 0.5 * (t0 + t1)
    _subdivide((x0, y0, m01x, m01y, ax, ay, mx, my), t0, tm, tol_sq, depth + 1, out)
    _subdivide((mx, my, bx, by, m23x, m23y, x3, y3), tm, t1, tol_sq, depth + 1, out)


@dataclass(frozen=True)
class FlattenedStroke:
    """Polyline approximation of a stroke with recorded curve parameters.

    Geometry is kept in a stroke-local frame (``vertices_local`` relative to
    the integer ``anchor``): all downstream distance math is then bitwise
    invariant under exact integer translations of the control points.
    ``params`` are global parameters (segment index + local t), strictly
    increasing; ``vertices[k]`` is the Bezier evaluation at params[k].
    """

    vertices_local: np.ndarray
    anchor: np.ndarray  # integer-valued (2,) float64
    params: np.ndarray
    source: Stroke

    @property
    def vertices(self) -> np.ndarray:
        return self.vertices_local + self.anchor


_ANCHOR_LIMIT = float(2**31)


def _stroke_anchor(points: np.ndarray) -> np.ndarray:
    anchor = np.floor(points.min(axis=0))
    if not np.all(np.isfinite(anchor)) or np.any(np.abs(anchor) > _ANCHOR_LIMIT):
        return np.zeros(2)
    return anchor


def _local_vertices_at_params(
    pts_local: np.ndarray, num_segments: int, params: np.ndarray
) -> np.ndarray:
    seg = np.minimum(params.astype(np.int64), num_segments - 1)
    t = params - seg
    mt = 1.0 - t
    w0 = mt * mt * mt
    w1 = 3.0 * mt * mt * t
    w2 = 3.0 * mt * t * t
    w3 = t * t * t
    base = 3 * seg
    return (
        w0[:, None] * pts_local[base]
        + w1[:, None] * pts_local[base + 1]
        + w2[:, None] * pts_local[base + 2]
        + w3[:, None] * pts_local[base + 3]
    )


def flatten(stroke: Stroke, tol: float = DEFAULT_FLATTEN_TOL) -> FlattenedStroke:
    """Adaptive polyline flattening with guaranteed max deviation <= tol."""
    return _flatten_at(stroke, tol, None)


def _flatten_at(
    stroke: Stroke, tol: float, params: np.ndarray | None
) -> FlattenedStroke:
    if tol <= 0.0:
        raise ValueError(f"flatten tolerance must be > 0, got {tol}")
    anchor = _stroke_anchor(stroke.points)
    pts_local = stroke.points - anchor
    if params is None:
        plist: list[float] = [0.0]
        tol_sq = tol * tol
        for j in range(stroke.num_segments):
            seg = pts_local[3 * j : 3 * j + 4]
            _subdivide(tuple(seg.ravel()), float(j), float(j + 1), tol_sq, 0, plist)
        params = np.asarray(plist, dtype=np.float64)
    else:
        params = np.asarray(params, dtype=np.float64)
    return FlattenedStroke(
        vertices_local=_local_vertices_at_params(pts_local, stroke.num_segments, params),
        anchor=anchor,
        params=params,
        source=stroke,
    )


@dataclass
class StrokeCoverage:
    """Per-stroke sparse coverage: everything backward needs per band pixel."""

    flat: FlattenedStroke
    pix: np.ndarray  # flat pixel indices, int64
    d: np.ndarray  # min distance to polyline
    chord: np.ndarray  # nearest chord index, int32
    u: np.ndarray  # clamped projection parameter on the nearest chord
    s: np.ndarray  # pre-smoothstep normalized coverage in [0, 1]
    cov: np.ndarray  # smoothstep coverage
    factor: np.ndarray  # 1 - opacity * ink * cov


def _coverage_for_stroke(
    stroke: Stroke,
    height: int,
    width: int,
    tol: float,
    aa: float,
    params: np.ndarray | None,
) -> StrokeCoverage:
    flat = _flatten_at(stroke, tol, params)
    band = 0.5 * stroke.width + aa
    pix, d, chord, u = _kernels.coverage_entries(
        flat.vertices_local,
        band,
        height,
        width,
        float(flat.anchor[0]),
        float(flat.anchor[1]),
    )
    s = np.clip((0.5 * stroke.width + aa - d) / (2.0 * aa), 0.0, 1.0)
    cov = s * s * (3.0 - 2.0 * s)
    factor = 1.0 - stroke.opacity * stroke.ink * cov
    return StrokeCoverage(flat=flat, pix=pix, d=d, chord=chord, u=u, s=s, cov=cov, factor=factor)


def sketch_coverage(
    sketch: Sketch,
    tol: float = DEFAULT_FLATTEN_TOL,
    aa: float = DEFAULT_AA_WIDTH,
    flatten_params: list[np.ndarray] | None = None,
) -> list[StrokeCoverage]:
    """Coverage for every stroke; pass flatten_params to pin the t_k grid."""
    if flatten_params is not None and len(flatten_params) != len(sketch.strokes):
        raise ValueError("flatten_params must align with sketch.strokes")
    return [
        _coverage_for_stroke(
            s,
            sketch.canvas_h,
            sketch.canvas_w,
            tol,
            aa,
            None if flatten_params is None else flatten_params[i],
        )
        for i, s in enumerate(sketch.strokes)
    ]


def render_from_coverage(sketch: Sketch, covs: list[StrokeCoverage]) -> np.ndarray:
    image = np.ones(sketch.canvas_h * sketch.canvas_w, dtype=np.float64)
    if covs:
        # Reduce each pixel's factors in value-sorted order: the product is
        # then bit-identical under any permutation of the strokes.
        pix = np.concatenate([sc.pix for sc in covs])
        fac = np.concatenate([sc.factor for sc in covs])
        order = np.lexsort((fac, pix))
        pix = pix[order]
        fac = fac[order]
        if pix.size:
            starts = np.flatnonzero(np.r_[True, pix[1:] != pix[:-1]])
            image[pix[starts]] = np.multiply.reduceat(fac, starts)
    return image.reshape(sketch.canvas_h, sketch.canvas_w)


def render(
    sketch: Sketch,
    tol: float = DEFAULT_FLATTEN_TOL,
    aa: float = DEFAULT_AA_WIDTH,
    flatten_params: list[np.ndarray] | None = None,
) -> np.ndarray:
    """Rasterize to a (canvas_h, canvas_w) grayscale grid, white = 1.0."""
    return render_from_coverage(sketch, sketch_coverage(sketch, tol, aa, flatten_params))


@dataclass
class RenderGradients:
    """Per-control-point gradients, one array per stroke (aligned by index).

    Gradients for frozen strokes are computed but reported separately so
    callers can never apply them by accident.
    """

    per_stroke: list[np.ndarray]
    trainable: dict[int, np.ndarray]
    frozen: dict[int, np.ndarray]


def _vertex_grads_to_points(stroke: Stroke, params: np.ndarray, gverts: np.ndarray) -> np.ndarray:
    m = stroke.num_segments
    seg = np.minimum(params.astype(np.int64), m - 1)
    t = params - seg
    mt = 1.0 - t
    weights = (mt * mt * mt, 3.0 * mt * mt * t, 3.0 * mt * t * t, t * t * t)
    gpts = np.zeros((3 * m + 1, 2), dtype=np.float64)
    base = 3 * seg
    for off, w in enumerate(weights):
        np.add.at(gpts, base + off, w[:, None] * gverts)
    return gpts


def backward_from_coverage(
    sketch: Sketch,
    covs: list[StrokeCoverage],
    dL_dI: np.ndarray,
    aa: float = DEFAULT_AA_WIDTH,
) -> RenderGradients:
    h, w = sketch.canvas_h, sketch.canvas_w
    dL_dI = np.asarray(dL_dI, dtype=np.float64)
    if dL_dI.shape != (h, w):
        raise ValueError(f"cotangent shape {dL_dI.shape} != canvas ({h}, {w})")
    g = dL_dI.ravel()

    # Leave-one-out products: track zero factors separately so saturated
    # (fully inked) pixels stay exact.
    zerocnt = np.zeros(h * w, dtype=np.int64)
    prodnz = np.ones(h * w, dtype=np.float64)
    for sc in covs:
        zero = sc.factor == 0.0
        if zero.any():
            zerocnt[sc.pix[zero]] += 1
        nz = ~zero
        prodnz[sc.pix[nz]] *= sc.factor[nz]

    per_stroke: list[np.ndarray] = []
    for sc, stroke in zip(covs, sketch.strokes):
        gpts = np.zeros_like(stroke.points)
        # Gradient flows only through the smoothstep band (0 < s < 1); the
        # d == 0 guard drops the measure-zero on-curve case where the
        # normal direction is undefined.
        band = (sc.s > 0.0) & (sc.s < 1.0) & (sc.d > 1e-12)
        if band.any():
            pix = sc.pix[band]
            f = sc.factor[band]
            zc = zerocnt[pix]
            pnz = prodnz[pix]
            safe_f = np.where(f == 0.0, 1.0, f)
            loo = np.where(
                f == 0.0,
                np.where(zc == 1, pnz, 0.0),
                np.where(zc > 0, 0.0, pnz / safe_f),
            )
            ok = stroke.opacity * stroke.ink
            s = sc.s[band]
            gcov = g[pix] * (-ok) * loo
            gd = gcov * (6.0 * s * (1.0 - s)) * (-1.0 / (2.0 * aa))

            # Same local frame as the coverage kernel.
            verts = sc.flat.vertices_local
            ax, ay = sc.flat.anchor
            c = sc.chord[band].astype(np.int64)
            u = sc.u[band]
            v0 = verts[c]
            v1 = verts[c + 1]
            p = v0 + u[:, None] * (v1 - v0)
            q = np.stack([((pix % w) - ax) + 0.5, ((pix // w) - ay) + 0.5], axis=1)
            n = (q - p) / sc.d[band][:, None]
            nv = len(verts)
            g0 = (gd * -(1.0 - u))[:, None] * n
            g1 = (gd * -u)[:, None] * n
            gverts = np.stack(
                [
                    np.bincount(c, weights=g0[:, 0], minlength=nv)
                    + np.bincount(c + 1, weights=g1[:, 0], minlength=nv),
                    np.bincount(c, weights=g0[:, 1], minlength=nv)
                    + np.bincount(c + 1, weights=g1[:, 1], minlength=nv),
                ],
                axis=1,
            )
            gpts = _vertex_grads_to_points(stroke, sc.flat.params, gverts)
        per_stroke.append(gpts)

    trainable = {i: g_ for i, (g_, st) in enumerate(zip(per_stroke, sketch.strokes)) if st.trainable}
    frozen = {i: g_ for i, (g_, st) in enumerate(zip(per_stroke, sketch.strokes)) if not st.trainable}
    return RenderGradients(per_stroke=per_stroke, trainable=trainable, frozen=frozen)


def render_backward(
    sketch: Sketch,
    dL_dI: np.ndarray,
    tol: float = DEFAULT_FLATTEN_TOL,
    aa: float = DEFAULT_AA_WIDTH,
    flatten_params: list[np.ndarray] | None = None,
) -> RenderGradients:
    """Exact adjoint of render at fixed flattening parameters."""
    covs = sketch_coverage(sketch, tol, aa, flatten_params)
    return backward_from_coverage(sketch, covs, dL_dI, aa)


def compose_ink(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Multiplicative compositing of black-on-white layers (commutative).

    The gradient to each input is the other input's pixel value.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a * b


def write_png(image: np.ndarray, path) -> None:
    """8-bit grayscale PNG; values rounded half-up."""
    from PIL import Image

    u8 = np.floor(np.clip(image, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    Image.fromarray(u8, mode="L").save(path, format="PNG")


def read_png(path) -> np.ndarray:
    """Grayscale float image in [0, 1] from any PIL-readable file."""
    from PIL import Image

    with Image.open(path) as im:
        return np.asarray(im.convert("L"), dtype=np.float64) / 255.0
