"""Sketch data model: Bezier strokes on a canvas, with deterministic RNG.

A stroke is a connected path of cubic Bezier segments. Control points are
stored as a single (3m+1, 2) array for m segments: consecutive segments share
their boundary point structurally, so C0 continuity can never be violated by
construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "Rng",
    "Stroke",
    "Sketch",
    "random_init_strokes",
    "fit_polyline_to_bezier",
]

# Fraction of min(canvas_w, canvas_h) used as the random-walk step bound
# when initializing stroke control points.
INIT_WALK_RADIUS = 0.05

DEFAULT_STROKE_WIDTH = 3.0


class Rng:
    """Deterministic pseudo-random source (PCG64, platform independent).

    Identical seeds produce identical draw sequences across runs and
    platforms; all stochastic choices in the pipeline flow through one Rng
    so a run is fully reproducible from its seed.
    """

    algorithm = "pcg64"

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def random(self) -> float:
        return float(self._gen.random())

    def uniform(self, low: float, high: float, size=None):
        return self._gen.uniform(low, high, size=size)

    def integers(self, low: int, high: int) -> int:
        """Uniform integer in [low, high] inclusive."""
        return int(self._gen.integers(low, high, endpoint=True))

    def normal(self, size=None):
        return self._gen.standard_normal(size=size)

    def __repr__(self) -> str:  # pragma: no cover
        return f"Rng(seed={self.seed}, algorithm={self.algorithm!r})"


def _as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError(f"control points must be (n, 2), got {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise ValueError("control points must be finite")
    return pts


@dataclass(frozen=True, eq=False)
class Stroke:
    """A path of cubic Bezier segments with fixed width/ink/opacity.

    ``points`` has shape (3m+1, 2) for m segments; only the point positions
    are ever optimized. ``ink`` is the darkness of the stroke color
    (1.0 = black on the white canvas), ``trainable`` marks whether the
    optimizer may move this stroke.
    """

    points: np.ndarray
    width: float = DEFAULT_STROKE_WIDTH
    ink: float = 1.0
    opacity: float = 1.0
    trainable: bool = True

    def __eq__(self, other):
        if not isinstance(other, Stroke):
            return NotImplemented
        return (
            np.array_equal(self.points, other.points)
            and self.width == other.width
            and self.ink == other.ink
            and self.opacity == other.opacity
            and self.trainable == other.trainable
        )

    def __post_init__(self):
        pts = _as_points(self.points)
        if len(pts) < 4 or (len(pts) - 1) % 3 != 0:
            raise ValueError(
                f"stroke needs 3m+1 control points (m >= 1), got {len(pts)}"
            )
        if not self.width > 0:
            raise ValueError(f"stroke width must be > 0, got {self.width}")
        if not 0.0 <= self.ink <= 1.0:
            raise ValueError(f"ink must be in [0, 1], got {self.ink}")
        if not 0.0 <= self.opacity <= 1.0:
            raise ValueError(f"opacity must be in [0, 1], got {self.opacity}")
        pts = pts.copy()
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    @property
    def num_segments(self) -> int:
        return (len(self.points) - 1) // 3

    def segment(self, j: int) -> np.ndarray:
        """The four control points of segment j (view into shared storage)."""
        if not 0 <= j < self.num_segments:
            raise IndexError(f"segment {j} out of range")
        return self.points[3 * j : 3 * j + 4]

    def with_points(self, points) -> "Stroke":
        return replace(self, points=points)

    def with_trainable(self, trainable: bool) -> "Stroke":
        return replace(self, trainable=trainable)


@dataclass(frozen=True, eq=False)
class Sketch:
    """Ordered strokes plus canvas geometry. Immutable snapshot."""

    strokes: tuple[Stroke, ...]
    canvas_w: int
    canvas_h: int

    def __eq__(self, other):
        if not isinstance(other, Sketch):
            return NotImplemented
        return (
            self.canvas_w == other.canvas_w
            and self.canvas_h == other.canvas_h
            and self.strokes == other.strokes
        )

    def __post_init__(self):
        object.__setattr__(self, "strokes", tuple(self.strokes))
        if self.canvas_w < 1 or self.canvas_h < 1:
            raise ValueError("canvas dimensions must be >= 1")

    @property
    def trainable_indices(self) -> list[int]:
        return [i for i, s in enumerate(self.strokes) if s.trainable]

    @property
    def frozen_indices(self) -> list[int]:
        return [i for i, s in enumerate(self.strokes) if not s.trainable]

    def with_strokes(self, strokes: Iterable[Stroke]) -> "Sketch":
        return replace(self, strokes=tuple(strokes))

    def empty_like(self) -> "Sketch":
        return replace(self, strokes=())


def _random_walk_stroke(
    segments: int,
    canvas_w: int,
    canvas_h: int,
    rng: Rng,
    width: float,
) -> Stroke:
    r = INIT_WALK_RADIUS * min(canvas_w, canvas_h)
    n_points = 3 * segments + 1
    pts = np.empty((n_points, 2), dtype=np.float64)
    pts[0, 0] = rng.uniform(0.0, float(canvas_w))
    pts[0, 1] = rng.uniform(0.0, float(canvas_h))
    for k in range(1, n_points):
        pts[k] = pts[k - 1] + rng.uniform(-r, r, size=2)
    pts[:, 0] = np.clip(pts[:, 0], 0.0, float(canvas_w))
    pts[:, 1] = np.clip(pts[:, 1], 0.0, float(canvas_h))
    return Stroke(points=pts, width=width, trainable=True)


def random_init_strokes(
    n: int,
    segments: int,
    canvas_w: int,
    canvas_h: int,
    rng: Rng,
    width: float = DEFAULT_STROKE_WIDTH,
) -> Sketch:
    """n trainable strokes, each a bounded random walk from a uniform start.

    Each offset is uniform in [-r, r] per axis with r = 0.05 * min(canvas
    side); points are clamped to the canvas. Deterministic given the rng.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    if n > 0 and segments < 1:
        raise ValueError("segments must be >= 1")
    strokes = tuple(
        _random_walk_stroke(segments, canvas_w, canvas_h, rng, width)
        for _ in range(n)
    )
    return Sketch(strokes=strokes, canvas_w=canvas_w, canvas_h=canvas_h)


def fit_polyline_to_bezier(
    points: Sequence[tuple[float, float]],
    width: float = DEFAULT_STROKE_WIDTH,
    trainable: bool = True,
) -> Stroke:
    """Interpolating Catmull-Rom fit converted to cubic Bezier segments.

    Tangents use central differences at interior points and one-sided
    differences at the endpoints, so the resulting path passes through
    every input point exactly; k input points yield k-1 segments.
    """
    pts = _as_points(points)
    n = len(pts)
    if n < 2:
        raise ValueError("need at least 2 points to fit a stroke")
    tangents = np.empty_like(pts)
    tangents[0] = pts[1] - pts[0]
    tangents[-1] = pts[-1] - pts[-2]
    if n > 2:
        tangents[1:-1] = 0.5 * (pts[2:] - pts[:-2])
    ctrl = np.empty((3 * (n - 1) + 1, 2), dtype=np.float64)
    ctrl[0] = pts[0]
    for i in range(n - 1):
        base = 3 * i
        ctrl[base + 1] = pts[i] + tangents[i] / 3.0
        ctrl[base + 2] = pts[i + 1] - tangents[i + 1] / 3.0
        ctrl[base + 3] = pts[i + 1]
    return Stroke(points=ctrl, width=width, trainable=trainable)
