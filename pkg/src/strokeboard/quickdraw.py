"""QuickDraw simplified-ndjson ingestion.

One line of the simplified dataset is a JSON object whose "drawing" key
holds a list of [xs, ys] integer arrays in [0, 255]. Each polyline becomes
a frozen Bezier stroke placed in a centered sub-square of the target canvas.
"""

from __future__ import annotations

import json

import numpy as np

from .model import Sketch, Stroke, fit_polyline_to_bezier, DEFAULT_STROKE_WIDTH

__all__ = ["QuickDrawError", "load_quickdraw"]

QUICKDRAW_EXTENT = 255.0


class QuickDrawError(ValueError):
    """Malformed or schema-violating QuickDraw input."""


def load_quickdraw(
    ndjson_line: str,
    canvas_w: int,
    canvas_h: int,
    margin: float = 0.1,
    width: float = DEFAULT_STROKE_WIDTH,
) -> Sketch:
    """Parse one simplified-drawing line into a Sketch of frozen strokes.

    Coordinates are affinely mapped from [0, 255]^2 into the centered
    sub-square of side (1 - 2*margin) * min(canvas_w, canvas_h), preserving
    aspect ratio. Strokes arrive as the initial (condition) sketch, so they
    are marked frozen.
    """
    if not 0.0 <= margin < 0.5:
        raise QuickDrawError(f"margin must be in [0, 0.5), got {margin}")
    try:
        obj = json.loads(ndjson_line)
    except json.JSONDecodeError as e:
        raise QuickDrawError(
            f"malformed QuickDraw JSON at byte offset {e.pos}: {e.msg}"
        ) from e
    if not isinstance(obj, dict) or "drawing" not in obj:
        raise QuickDrawError('QuickDraw object is missing the "drawing" key')
    drawing = obj["drawing"]
    if not isinstance(drawing, list):
        raise QuickDrawError('"drawing" must be a list of [xs, ys] pairs')

    side = (1.0 - 2.0 * margin) * min(canvas_w, canvas_h)
    scale = side / QUICKDRAW_EXTENT
    off_x = (canvas_w - QUICKDRAW_EXTENT * scale) / 2.0
    off_y = (canvas_h - QUICKDRAW_EXTENT * scale) / 2.0
    box_lo = np.array([off_x, off_y])
    box_hi = box_lo + QUICKDRAW_EXTENT * scale

    strokes: list[Stroke] = []
    for k, pair in enumerate(drawing):
        if not isinstance(pair, (list, tuple)) or len(pair) < 2:
            raise QuickDrawError(f"drawing[{k}] is not an [xs, ys] pair")
        xs, ys = pair[0], pair[1]
        if len(xs) != len(ys) or len(xs) == 0:
            raise QuickDrawError(f"drawing[{k}] has mismatched or empty arrays")
        pts = np.column_stack(
            [
                np.asarray(xs, dtype=np.float64) * scale + off_x,
                np.asarray(ys, dtype=np.float64) * scale + off_y,
            ]
        )
        if len(pts) == 1:
            # Dot stroke: duplicate the point; round caps render it.
            pts = np.repeat(pts, 2, axis=0)
        fitted = fit_polyline_to_bezier(pts, width=width, trainable=False)
        # The interpolating fit's inner control points can overshoot the
        # margin box at sharp turns; clamping them keeps the whole path
        # inside the box (convex hull property) while the on-curve points
        # still interpolate exactly.
        clamped = np.clip(fitted.points, box_lo, box_hi)
        strokes.append(fitted.with_points(clamped))
    return Sketch(strokes=tuple(strokes), canvas_w=canvas_w, canvas_h=canvas_h)
