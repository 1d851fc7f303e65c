"""The per-round training loop: render, compose, augment, guidance gradient,
backprop, Adam step, plus periodic prune-and-reinitialize of dead strokes.

One flat parameter vector covers every stroke of the trainable sketch in
stroke order; gradients of frozen strokes are masked to zero (their Adam
moments then stay zero, so their points never move), which keeps the vector
layout stable across pruning events.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .augment import AugmentConfig, apply_augmentation, augmentation_backward, sample_augmentation
from .guidance import GuidanceConfig, NoiseSchedule, sds_pixel_grad
from .model import Rng, Sketch, Stroke
from .model import _random_walk_stroke
from .raster import (
    DEFAULT_AA_WIDTH,
    DEFAULT_FLATTEN_TOL,
    backward_from_coverage,
    compose_ink,
    flatten,
    render,
    render_from_coverage,
    sketch_coverage,
)
from .svg import export_svg

__all__ = [
    "AdamState",
    "OptimizeConfig",
    "TraceEvent",
    "OptimizeResult",
    "OptimizeAbort",
    "adam_step",
    "prune_and_reinit",
    "optimize_sketch",
]


@dataclass(frozen=True)
class AdamState:
    """Bias-corrected Adam accumulator state for one parameter vector."""

    step: int
    m: np.ndarray
    v: np.ndarray
    lr: float = 1.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, n: int, lr: float = 1.0) -> "AdamState":
        return cls(step=0, m=np.zeros(n), v=np.zeros(n), lr=lr)


def adam_step(
    state: AdamState, params: np.ndarray, grads: np.ndarray
) -> tuple[AdamState, np.ndarray]:
    """One standard bias-corrected Adam update; deterministic."""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ValueError(
            f"length mismatch: params {params.shape}, grads {grads.shape}, state {state.m.shape}"
        )
    step = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    m_hat = m / (1.0 - state.beta1**step)
    v_hat = v / (1.0 - state.beta2**step)
    new_params = params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return replace(state, step=step, m=m, v=v), new_params


@dataclass(frozen=True)
class OptimizeConfig:
    iterations: int = 1000
    lr: float = 1.0
    prune_every: int = 50
    prune_warmup: int = 100
    prune_min_length: float = 10.0
    prune_min_bbox_area: float = 25.0
    snapshot_every: int = 25
    flatten_tol: float = DEFAULT_FLATTEN_TOL
    aa: float = DEFAULT_AA_WIDTH
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    guidance: GuidanceConfig = field(default_factory=lambda: GuidanceConfig(prompt="", backend="zero"))
    seed: int = 0
    schedule: NoiseSchedule | None = None
    # Serializable CLI-style backend spec ("zero", "pixel:PATH", "mock:PATH",
    # "remote:URL"); the service rebuilds the live backend from it.
    guidance_spec: str | None = None

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.prune_every < 1 or self.prune_warmup < 0:
            raise ValueError("invalid prune schedule")
        if self.prune_min_length < 0 or self.prune_min_bbox_area < 0:
            raise ValueError("prune thresholds must be >= 0")


@dataclass
class TraceEvent:
    iter: int
    loss: float | None
    grad_norm: float
    pruned: list[int]
    svg: str | None = None

    def to_json(self) -> str:
        doc = {
            "iter": self.iter,
            "loss": self.loss,
            "grad_norm": self.grad_norm,
            "pruned": self.pruned,
        }
        if self.svg is not None:
            doc["svg"] = self.svg
        return json.dumps(doc, separators=(",", ":"))


@dataclass
class OptimizeResult:
    sketch: Sketch
    trace: list[TraceEvent]
    cancelled: bool
    iterations_run: int


class OptimizeAbort(RuntimeError):
    """Guidance backend failed after retries; carries the partial run."""

    def __init__(self, cause: Exception, sketch: Sketch, trace: list[TraceEvent]):
        super().__init__(f"optimization aborted: {cause}")
        self.cause = cause
        self.sketch = sketch
        self.trace = trace


def _stroke_metrics(stroke: Stroke, tol: float) -> tuple[float, float]:
    """(polyline arc length, polyline bounding-box area)."""
    verts = flatten(stroke, tol).vertices
    seglen = np.linalg.norm(np.diff(verts, axis=0), axis=1).sum()
    spans = verts.max(axis=0) - verts.min(axis=0)
    return float(seglen), float(spans[0] * spans[1])


def prune_and_reinit(
    sketch: Sketch,
    cfg: OptimizeConfig,
    rng: Rng,
) -> tuple[Sketch, list[int]]:
    """Replace degenerate trainable strokes with fresh random ones.

    A stroke is degenerate when its polyline arc length falls below
    prune_min_length or its bounding-box area below prune_min_bbox_area.
    Stroke count is conserved; frozen strokes are never pruned.
    """
    pruned: list[int] = []
    new_strokes: list[Stroke] = []
    for i, stroke in enumerate(sketch.strokes):
        if stroke.trainable:
            length, area = _stroke_metrics(stroke, cfg.flatten_tol)
            if length < cfg.prune_min_length or area < cfg.prune_min_bbox_area:
                fresh = _random_walk_stroke(
                    stroke.num_segments, sketch.canvas_w, sketch.canvas_h, rng, stroke.width
                )
                new_strokes.append(
                    replace(fresh, ink=stroke.ink, opacity=stroke.opacity)
                )
                pruned.append(i)
                continue
        new_strokes.append(stroke)
    return sketch.with_strokes(new_strokes), pruned


def _pack_params(sketch: Sketch) -> tuple[np.ndarray, list[tuple[int, int]]]:
    chunks = []
    slices = []
    offset = 0
    for stroke in sketch.strokes:
        flat = stroke.points.ravel()
        chunks.append(flat)
        slices.append((offset, offset + flat.size))
        offset += flat.size
    vec = np.concatenate(chunks) if chunks else np.zeros(0)
    return vec, slices


def _unpack_params(sketch: Sketch, vec: np.ndarray, slices) -> Sketch:
    strokes = []
    for stroke, (a, b) in zip(sketch.strokes, slices):
        strokes.append(stroke.with_points(vec[a:b].reshape(-1, 2)))
    return sketch.with_strokes(strokes)


def optimize_sketch(
    initial: Sketch,
    trainable: Sketch,
    cfg: OptimizeConfig,
    on_event=None,
    cancel=None,
) -> OptimizeResult:
    """Run the full guidance-driven optimization of the trainable sketch.

    ``initial`` is the frozen condition sketch (rendered once; its coverage
    never changes), ``trainable`` holds the strokes being optimized. Emits a
    TraceEvent per iteration (SVG snapshot every cfg.snapshot_every iters)
    and honors ``cancel`` (an object with is_set()) between iterations.
    """
    if (initial.canvas_w, initial.canvas_h) != (trainable.canvas_w, trainable.canvas_h):
        raise ValueError("initial and trainable sketches must share canvas dims")
    sched = cfg.schedule or NoiseSchedule.scaled_linear()
    cfg.guidance.validate_against(sched)
    rng = Rng(cfg.seed)

    cond_img = render(initial, cfg.flatten_tol, cfg.aa)
    sketch = trainable
    params, slices = _pack_params(sketch)
    adam = AdamState.zeros(params.size, lr=cfg.lr)
    trainable_mask = np.zeros(params.size, dtype=bool)
    for (a, b), stroke in zip(slices, sketch.strokes):
        if stroke.trainable:
            trainable_mask[a:b] = True

    trace: list[TraceEvent] = []
    cancelled = False
    iterations_run = 0
    for it in range(1, cfg.iterations + 1):
        if cancel is not None and cancel.is_set():
            cancelled = True
            break
        covs = sketch_coverage(sketch, cfg.flatten_tol, cfg.aa)
        img_s = render_from_coverage(sketch, covs)
        composite = compose_ink(img_s, cond_img)
        aug = sample_augmentation(rng, sketch.canvas_w, sketch.canvas_h, cfg.augment)
        aug_img = apply_augmentation(composite, aug)
        aug_cond = apply_augmentation(cond_img, aug)
        try:
            grad_pix, diag = sds_pixel_grad(aug_img, aug_cond, cfg.guidance, sched, rng)
        except Exception as e:
            raise OptimizeAbort(e, sketch, trace) from e
        g_composite = augmentation_backward(aug, grad_pix)
        g_img_s = g_composite * cond_img
        rg = backward_from_coverage(sketch, covs, g_img_s, cfg.aa)
        grads = np.concatenate([g.ravel() for g in rg.per_stroke]) if rg.per_stroke else np.zeros(0)
        grads[~trainable_mask] = 0.0

        adam, params = adam_step(adam, params, grads)
        sketch = _unpack_params(sketch, params, slices)

        pruned: list[int] = []
        if it >= cfg.prune_warmup and it % cfg.prune_every == 0:
            sketch, pruned = prune_and_reinit(sketch, cfg, rng)
            if pruned:
                params, _ = _pack_params(sketch)
                # Fresh strokes start with clean moments.
                m = adam.m.copy()
                v = adam.v.copy()
                for i in pruned:
                    a, b = slices[i]
                    m[a:b] = 0.0
                    v[a:b] = 0.0
                adam = replace(adam, m=m, v=v)

        snapshot = None
        if it % cfg.snapshot_every == 0 or it == cfg.iterations:
            combined = initial.with_strokes(tuple(initial.strokes) + tuple(sketch.strokes))
            snapshot = export_svg(combined)
        event = TraceEvent(
            iter=it,
            loss=diag.loss,
            grad_norm=float(np.linalg.norm(grads)),
            pruned=pruned,
            svg=snapshot,
        )
        trace.append(event)
        if on_event is not None:
            on_event(event)
        iterations_run = it

    return OptimizeResult(
        sketch=sketch, trace=trace, cancelled=cancelled, iterations_run=iterations_run
    )
