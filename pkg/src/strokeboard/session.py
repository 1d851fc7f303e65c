"""Multi-round storyboard state: prompt expansion, sketch edits between
rounds, frame lineage, persistence, and storyboard export.

A frame's base sketch is the previous round's result (frozen by default);
the user may edit it, lock/unlock strokes, and add new ones before running
the next optimization round on top of it.
"""

from __future__ import annotations

import json
import uuid
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from xml.sax.saxutils import escape

import numpy as np

from .model import Rng, Sketch, Stroke, fit_polyline_to_bezier, random_init_strokes
from .optimize import OptimizeConfig, OptimizeAbort, optimize_sketch
from .augment import AugmentConfig
from .guidance import GuidanceConfig
from .svg import _ink_to_hex, _fmt, _path_d

__all__ = [
    "SessionError",
    "BusyError",
    "FrameStateError",
    "PromptError",
    "SchemaError",
    "EditOp",
    "StoryboardFrame",
    "Session",
    "expand_prompt",
    "new_session",
    "add_frame",
    "apply_edit",
    "undo_edit",
    "run_frame",
    "save_session",
    "load_session",
    "export_storyboard",
]

SCHEMA_VERSION = 1

# Both the typographic ellipsis form and its ASCII alias expand to the
# previous round's resolved prompt.
PROMPT_TOKEN = "[…]"
PROMPT_TOKEN_ASCII = "[...]"

EDIT_KINDS = (
    "translate",
    "scale",
    "add_strokes",
    "delete_strokes",
    "lock_strokes",
    "unlock_strokes",
)

STATUSES = ("draft", "running", "done", "cancelled")


class SessionError(Exception):
    pass


class BusyError(SessionError):
    """Another frame is currently running."""


class FrameStateError(SessionError):
    """Operation not allowed in the frame's current status."""


class PromptError(SessionError):
    pass


class SchemaError(SessionError):
    """Persisted document has an unknown or invalid schema."""


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def expand_prompt(template: str, previous: str | None) -> str:
    """Replace every previous-prompt token in the template.

    Raises PromptError when the token appears but no previous prompt exists.
    """
    has_token = PROMPT_TOKEN in template or PROMPT_TOKEN_ASCII in template
    if not has_token:
        return template
    if not previous:
        raise PromptError(
            "prompt template references the previous prompt, but none exists"
        )
    return template.replace(PROMPT_TOKEN, previous).replace(PROMPT_TOKEN_ASCII, previous)


@dataclass(frozen=True)
class EditOp:
    kind: str
    payload: dict

    def __post_init__(self):
        if self.kind not in EDIT_KINDS:
            raise ValueError(f"unknown edit kind {self.kind!r}")
        if self.kind == "scale":
            factor = self.payload.get("factor")
            if factor is None or not factor > 0:
                raise ValueError("scale edit needs a factor > 0")


@dataclass
class StoryboardFrame:
    index: int
    prompt_template: str
    resolved_prompt: str
    base_sketch: Sketch  # current base (edits applied), S* at run time
    pristine_base: Sketch  # base as inherited, for undo replay
    trainable_init: Sketch
    config: OptimizeConfig
    status: str = "draft"
    result: Sketch | None = None
    history: list[EditOp] = field(default_factory=list)
    error: str | None = None


@dataclass
class Session:
    id: str
    frames: list[StoryboardFrame]
    created_at: str
    updated_at: str
    seed_base: int

    @property
    def running_frame(self) -> StoryboardFrame | None:
        for f in self.frames:
            if f.status == "running":
                return f
        return None


def new_session(seed_base: int = 0, session_id: str | None = None) -> Session:
    now = _now()
    return Session(
        id=session_id or uuid.uuid4().hex,
        frames=[],
        created_at=now,
        updated_at=now,
        seed_base=seed_base,
    )


def add_frame(
    session: Session,
    template: str,
    inherit: bool,
    config: OptimizeConfig | None = None,
    n_strokes: int = 16,
    segments: int = 5,
    stroke_width: float = 3.0,
    canvas_w: int = 600,
    canvas_h: int = 600,
) -> StoryboardFrame:
    """Append a draft frame; with inherit, base = previous result, frozen."""
    if session.running_frame is not None:
        raise BusyError("cannot add a frame while another frame is running")
    index = len(session.frames)
    previous = session.frames[-1] if session.frames else None
    if inherit:
        if previous is None or previous.status != "done" or previous.result is None:
            raise FrameStateError("inherit requires a completed previous frame")
        base = previous.result.with_strokes(
            s.with_trainable(False) for s in previous.result.strokes
        )
        resolved = expand_prompt(template, previous.resolved_prompt)
    else:
        if index == 0 and (PROMPT_TOKEN in template or PROMPT_TOKEN_ASCII in template):
            raise PromptError("the first frame's template cannot reference a previous prompt")
        base = Sketch(strokes=(), canvas_w=canvas_w, canvas_h=canvas_h)
        resolved = expand_prompt(
            template, previous.resolved_prompt if previous else None
        )
    cfg = config or OptimizeConfig()
    cfg = replace(cfg, seed=session.seed_base + index)
    init = random_init_strokes(
        n_strokes,
        segments,
        base.canvas_w,
        base.canvas_h,
        Rng(session.seed_base + index),
        width=stroke_width,
    )
    frame = StoryboardFrame(
        index=index,
        prompt_template=template,
        resolved_prompt=resolved,
        base_sketch=base,
        pristine_base=base,
        trainable_init=init,
        config=cfg,
    )
    session.frames.append(frame)
    session.updated_at = _now()
    return frame


def _apply_op_to_sketch(sketch: Sketch, op: EditOp) -> Sketch:
    strokes = list(sketch.strokes)
    kind = op.kind
    payload = op.payload
    if kind in ("translate", "scale", "delete_strokes", "lock_strokes", "unlock_strokes"):
        indices = payload.get("indices")
        if indices is None:
            indices = list(range(len(strokes)))
        for i in indices:
            if not 0 <= i < len(strokes):
                raise SessionError(f"stroke index {i} out of range")
    if kind == "translate":
        dx, dy = float(payload["dx"]), float(payload["dy"])
        delta = np.array([dx, dy])
        for i in indices:
            strokes[i] = strokes[i].with_points(strokes[i].points + delta)
    elif kind == "scale":
        factor = float(payload["factor"])
        pivot = payload.get("pivot")
        if pivot is None:
            sel = np.concatenate([strokes[i].points for i in indices])
            pivot = sel.mean(axis=0)
        pivot = np.asarray(pivot, dtype=np.float64)
        for i in indices:
            strokes[i] = strokes[i].with_points(
                pivot + factor * (strokes[i].points - pivot)
            )
    elif kind == "add_strokes":
        for sdoc in payload["strokes"]:
            if "polyline" in sdoc:
                # Freehand capture arrives as a polyline; fit it here.
                strokes.append(
                    fit_polyline_to_bezier(
                        np.asarray(sdoc["polyline"], dtype=np.float64),
                        width=float(sdoc.get("width", 3.0)),
                        trainable=bool(sdoc.get("trainable", True)),
                    )
                )
            else:
                strokes.append(_stroke_from_doc(sdoc))
    elif kind == "delete_strokes":
        for i in sorted(set(indices), reverse=True):
            del strokes[i]
    elif kind == "lock_strokes":
        for i in indices:
            strokes[i] = strokes[i].with_trainable(False)
    elif kind == "unlock_strokes":
        for i in indices:
            strokes[i] = strokes[i].with_trainable(True)
    return sketch.with_strokes(strokes)


def apply_edit(session: Session, frame: StoryboardFrame, op: EditOp) -> StoryboardFrame:
    """Apply an edit to a draft frame's base sketch; recorded for undo."""
    if frame.status != "draft":
        raise FrameStateError(f"cannot edit a {frame.status} frame")
    frame.base_sketch = _apply_op_to_sketch(frame.base_sketch, op)
    frame.history.append(op)
    session.updated_at = _now()
    return frame


def undo_edit(session: Session, frame: StoryboardFrame) -> StoryboardFrame:
    """Remove the last edit by replaying the remaining history."""
    if frame.status != "draft":
        raise FrameStateError(f"cannot edit a {frame.status} frame")
    if not frame.history:
        raise SessionError("no edits to undo")
    frame.history.pop()
    sketch = frame.pristine_base
    for op in frame.history:
        sketch = _apply_op_to_sketch(sketch, op)
    frame.base_sketch = sketch
    session.updated_at = _now()
    return frame


def claim_frame(session: Session, frame_index: int) -> StoryboardFrame:
    """Validate and transition a draft frame to running (single-writer step)."""
    if not 0 <= frame_index < len(session.frames):
        raise SessionError(f"frame {frame_index} does not exist")
    frame = session.frames[frame_index]
    if session.running_frame is not None:
        raise BusyError("another frame is already running")
    if frame.status != "draft":
        raise FrameStateError(f"cannot run a {frame.status} frame")
    frame.status = "running"
    frame.error = None
    session.updated_at = _now()
    return frame


def execute_frame(
    session: Session,
    frame_index: int,
    engine=optimize_sketch,
    on_event=None,
    cancel=None,
) -> StoryboardFrame:
    """Run a claimed (status=running) frame to completion.

    Frozen base strokes form the condition sketch; unlocked base strokes
    join the trainable set alongside the fresh random strokes. On success the
    result is the base (frozen strokes kept in place, unlocked ones updated)
    plus the optimized new strokes.
    """
    frame = session.frames[frame_index]
    if frame.status != "running":
        raise FrameStateError("execute_frame needs a claimed (running) frame")
    base_strokes = list(frame.base_sketch.strokes)
    frozen = [s for s in base_strokes if not s.trainable]
    unlocked = [s for s in base_strokes if s.trainable]
    condition = frame.base_sketch.with_strokes(frozen)
    train = frame.base_sketch.with_strokes(
        tuple(unlocked) + tuple(frame.trainable_init.strokes)
    )
    try:
        result = engine(condition, train, frame.config, on_event=on_event, cancel=cancel)
    except OptimizeAbort as e:
        frame.status = "draft"
        frame.error = str(e)
        session.updated_at = _now()
        raise
    optimized = list(result.sketch.strokes)
    opt_unlocked = optimized[: len(unlocked)]
    opt_new = optimized[len(unlocked) :]
    merged: list[Stroke] = []
    j = 0
    for s in base_strokes:
        if s.trainable:
            merged.append(opt_unlocked[j])
            j += 1
        else:
            merged.append(s)
    frame.result = frame.base_sketch.with_strokes(tuple(merged) + tuple(opt_new))
    frame.status = "cancelled" if result.cancelled else "done"
    session.updated_at = _now()
    return frame


def run_frame(
    session: Session,
    frame_index: int,
    engine=optimize_sketch,
    on_event=None,
    cancel=None,
) -> StoryboardFrame:
    """Claim and execute one draft frame synchronously."""
    claim_frame(session, frame_index)
    return execute_frame(session, frame_index, engine, on_event=on_event, cancel=cancel)


# -- persistence -------------------------------------------------------------


def _stroke_to_doc(stroke: Stroke) -> dict:
    return {
        "points": stroke.points.tolist(),
        "width": stroke.width,
        "ink": stroke.ink,
        "opacity": stroke.opacity,
        "trainable": stroke.trainable,
    }


def _stroke_from_doc(doc: dict) -> Stroke:
    return Stroke(
        points=np.asarray(doc["points"], dtype=np.float64),
        width=float(doc.get("width", 3.0)),
        ink=float(doc.get("ink", 1.0)),
        opacity=float(doc.get("opacity", 1.0)),
        trainable=bool(doc.get("trainable", True)),
    )


def _sketch_to_doc(sketch: Sketch) -> dict:
    return {
        "canvas_w": sketch.canvas_w,
        "canvas_h": sketch.canvas_h,
        "strokes": [_stroke_to_doc(s) for s in sketch.strokes],
    }


def _sketch_from_doc(doc: dict) -> Sketch:
    return Sketch(
        strokes=tuple(_stroke_from_doc(s) for s in doc["strokes"]),
        canvas_w=int(doc["canvas_w"]),
        canvas_h=int(doc["canvas_h"]),
    )


def _config_to_doc(cfg: OptimizeConfig) -> dict:
    g = cfg.guidance
    return {
        "iterations": cfg.iterations,
        "lr": cfg.lr,
        "prune_every": cfg.prune_every,
        "prune_warmup": cfg.prune_warmup,
        "prune_min_length": cfg.prune_min_length,
        "prune_min_bbox_area": cfg.prune_min_bbox_area,
        "snapshot_every": cfg.snapshot_every,
        "flatten_tol": cfg.flatten_tol,
        "aa": cfg.aa,
        "seed": cfg.seed,
        "guidance_spec": cfg.guidance_spec,
        "augment": {
            "perspective_prob": cfg.augment.perspective_prob,
            "distortion": cfg.augment.distortion,
            "scale_range": list(cfg.augment.scale_range),
            "aspect_range": list(cfg.augment.aspect_range),
            "out_size": cfg.augment.out_size,
        },
        "guidance": {
            "prompt": g.prompt,
            "omega": g.omega,
            "t_range": list(g.t_range),
            "weight_fn": g.weight_fn,
            "backend": g.backend,
            "pool": g.pool,
            "endpoint": g.endpoint,
            "negative_prompt": g.negative_prompt,
            "timeout": g.timeout,
            "retries": g.retries,
        },
    }


def _config_from_doc(doc: dict) -> OptimizeConfig:
    a = doc["augment"]
    g = doc["guidance"]
    return OptimizeConfig(
        iterations=int(doc["iterations"]),
        lr=float(doc["lr"]),
        prune_every=int(doc["prune_every"]),
        prune_warmup=int(doc["prune_warmup"]),
        prune_min_length=float(doc["prune_min_length"]),
        prune_min_bbox_area=float(doc["prune_min_bbox_area"]),
        snapshot_every=int(doc["snapshot_every"]),
        flatten_tol=float(doc["flatten_tol"]),
        aa=float(doc["aa"]),
        seed=int(doc["seed"]),
        guidance_spec=doc.get("guidance_spec"),
        augment=AugmentConfig(
            perspective_prob=float(a["perspective_prob"]),
            distortion=float(a["distortion"]),
            scale_range=tuple(a["scale_range"]),
            aspect_range=tuple(a["aspect_range"]),
            out_size=int(a["out_size"]),
        ),
        guidance=GuidanceConfig(
            prompt=g["prompt"],
            omega=float(g["omega"]),
            t_range=tuple(g["t_range"]),
            weight_fn=g["weight_fn"],
            backend=g["backend"],
            pool=int(g["pool"]),
            endpoint=g.get("endpoint"),
            negative_prompt=g.get("negative_prompt"),
            timeout=float(g.get("timeout", 120.0)),
            retries=int(g.get("retries", 2)),
        ),
    )


def _frame_to_doc(frame: StoryboardFrame) -> dict:
    return {
        "index": frame.index,
        "prompt_template": frame.prompt_template,
        "resolved_prompt": frame.resolved_prompt,
        "status": frame.status,
        "error": frame.error,
        "base_sketch": _sketch_to_doc(frame.base_sketch),
        "pristine_base": _sketch_to_doc(frame.pristine_base),
        "trainable_init": _sketch_to_doc(frame.trainable_init),
        "result": None if frame.result is None else _sketch_to_doc(frame.result),
        "history": [{"kind": op.kind, "payload": op.payload} for op in frame.history],
        "config": _config_to_doc(frame.config),
    }


def _frame_from_doc(doc: dict) -> StoryboardFrame:
    status = doc["status"]
    if status not in STATUSES:
        raise SchemaError(f"unknown frame status {status!r}")
    # A run interrupted by shutdown comes back editable.
    if status == "running":
        status = "draft"
    return StoryboardFrame(
        index=int(doc["index"]),
        prompt_template=doc["prompt_template"],
        resolved_prompt=doc["resolved_prompt"],
        base_sketch=_sketch_from_doc(doc["base_sketch"]),
        pristine_base=_sketch_from_doc(doc["pristine_base"]),
        trainable_init=_sketch_from_doc(doc["trainable_init"]),
        config=_config_from_doc(doc["config"]),
        status=status,
        result=None if doc["result"] is None else _sketch_from_doc(doc["result"]),
        history=[EditOp(kind=h["kind"], payload=h["payload"]) for h in doc["history"]],
        error=doc.get("error"),
    )


def save_session(session: Session) -> str:
    """Serialize to a versioned JSON document."""
    doc = {
        "schema": SCHEMA_VERSION,
        "id": session.id,
        "created_at": session.created_at,
        "updated_at": session.updated_at,
        "seed_base": session.seed_base,
        "frames": [_frame_to_doc(f) for f in session.frames],
    }
    return json.dumps(doc, separators=(",", ":"))


def load_session(document: str) -> Session:
    """Parse a saved session; unknown schema versions raise SchemaError."""
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as e:
        raise SchemaError(f"malformed session document: {e}") from e
    if not isinstance(doc, dict) or doc.get("schema") != SCHEMA_VERSION:
        raise SchemaError(
            f"unknown session schema version {doc.get('schema') if isinstance(doc, dict) else None!r}"
        )
    try:
        return Session(
            id=doc["id"],
            frames=[_frame_from_doc(f) for f in doc["frames"]],
            created_at=doc["created_at"],
            updated_at=doc["updated_at"],
            seed_base=int(doc["seed_base"]),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise SchemaError(f"invalid session document: {e}") from e


# -- storyboard export -------------------------------------------------------

_CAPTION_STRIP = 48
_PANEL_GAP = 16


def export_storyboard(session: Session) -> str:
    """One SVG: every done frame left to right with its caption below."""
    done = [f for f in session.frames if f.status == "done" and f.result is not None]
    if not done:
        raise SessionError("storyboard export needs at least one completed frame")
    panel_w = max(f.result.canvas_w for f in done)
    panel_h = max(f.result.canvas_h for f in done)
    total_w = len(done) * panel_w + (len(done) - 1) * _PANEL_GAP
    total_h = panel_h + _CAPTION_STRIP
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{total_w}" height="{total_h}" '
        f'viewBox="0 0 {total_w} {total_h}">'
    ]
    for k, frame in enumerate(done):
        x_off = k * (panel_w + _PANEL_GAP)
        sketch = frame.result
        lines.append(f'<g transform="translate({x_off},0)">')
        lines.append(
            f'<rect x="0" y="0" width="{sketch.canvas_w}" height="{sketch.canvas_h}" '
            f'fill="#ffffff" stroke="#cccccc"/>'
        )
        for stroke in sketch.strokes:
            lines.append(
                f'<path d="{_path_d(stroke)}" fill="none" '
                f'stroke="{_ink_to_hex(stroke.ink)}" '
                f'stroke-width="{_fmt(stroke.width)}" '
                f'stroke-opacity="{_fmt(stroke.opacity)}" '
                f'stroke-linecap="round" stroke-linejoin="round"/>'
            )
        caption_y = sketch.canvas_h + 28
        lines.append(
            f'<text x="{sketch.canvas_w // 2}" y="{caption_y}" '
            f'text-anchor="middle" font-family="sans-serif" font-size="16">'
            f"{escape(frame.resolved_prompt)}</text>"
        )
        lines.append("</g>")
    lines.append("</svg>")
    return "\n".join(lines) + "\n"
