// Interactive stroke editor. Every geometry change is an edit op sent to
// the server; the canvas re-renders from the acknowledged frame document.
// Only selection state is optimistic.

import { ApiClient } from "./api.js";
import {
  decimatePolyline,
  Point,
  selectionBounds,
  selectionCentroid,
  strokeHitDistance,
  strokePathD,
} from "./geometry.js";
import type { FrameDoc } from "./types.js";

export type Tool = "draw" | "select" | "translate" | "scale" | "lock";

const SVG_NS = "http://www.w3.org/2000/svg";
const HIT_RADIUS = 8;

export class EditorView {
  readonly root: HTMLElement;
  readonly svg: SVGSVGElement;
  tool: Tool = "draw";
  selection = new Set<number>();
  drawTrainable = false;
  frame: FrameDoc | null = null;
  /** Resolves when the most recent gesture's edit round-trip finishes. */
  lastEdit: Promise<unknown> = Promise.resolve();
  onFrameUpdate: (frame: FrameDoc) => void = () => {};
  onError: (err: unknown) => void = () => {};

  private capture: Point[] | null = null;
  private dragStart: Point | null = null;
  private dragLast: Point | null = null;
  private ghost: SVGRectElement | null = null;

  constructor(
    private readonly api: ApiClient,
    private readonly sessionId: string,
    doc: Document = document,
  ) {
    this.root = doc.createElement("div");
    this.root.className = "editor";
    this.svg = doc.createElementNS(SVG_NS, "svg") as SVGSVGElement;
    this.svg.setAttribute("class", "editor-canvas");
    this.root.appendChild(this.svg);
    this.svg.addEventListener("pointerdown", (e) => this.pointerDown(e as PointerEvent));
    this.svg.addEventListener("pointermove", (e) => this.pointerMove(e as PointerEvent));
    this.svg.addEventListener("pointerup", (e) => this.pointerUp(e as PointerEvent));
  }

  setFrame(frame: FrameDoc): void {
    this.frame = frame;
    this.selection.clear();
    this.render();
  }

  get editable(): boolean {
    return this.frame?.status === "draft";
  }

  /** Canvas coordinates for a pointer event (1:1 when layout is unknown). */
  private canvasPoint(e: PointerEvent): Point {
    const sketch = this.frame!.base_sketch;
    const rect = this.svg.getBoundingClientRect();
    const sx = rect.width > 0 ? sketch.canvas_w / rect.width : 1;
    const sy = rect.height > 0 ? sketch.canvas_h / rect.height : 1;
    return [(e.clientX - rect.left) * sx, (e.clientY - rect.top) * sy];
  }

  private pointerDown(e: PointerEvent): void {
    if (!this.frame || !this.editable) return;
    const p = this.canvasPoint(e);
    if (this.tool === "draw") {
      this.capture = [p];
    } else if (this.tool === "select" || this.tool === "lock") {
      const hit = this.hitStroke(p);
      if (this.tool === "select") {
        if (hit < 0) this.selection.clear();
        else if (this.selection.has(hit)) this.selection.delete(hit);
        else this.selection.add(hit);
        this.render();
      } else if (hit >= 0) {
        const kind = this.frame.base_sketch.strokes[hit].trainable
          ? "lock_strokes"
          : "unlock_strokes";
        this.submit([{ kind, payload: { indices: [hit] } }]);
      }
    } else if (this.tool === "translate" || this.tool === "scale") {
      if (this.selection.size === 0) return;
      this.dragStart = p;
      this.dragLast = p;
      this.showGhost();
    }
  }

  private pointerMove(e: PointerEvent): void {
    if (!this.frame) return;
    const p = this.canvasPoint(e);
    if (this.capture) {
      this.capture.push(p);
      this.renderCaptureOverlay();
    } else if (this.dragStart) {
      this.dragLast = p;
      this.updateGhost();
    }
  }

  private pointerUp(e: PointerEvent): void {
    if (!this.frame) return;
    const p = this.canvasPoint(e);
    if (this.capture) {
      const polyline = decimatePolyline(this.capture);
      this.capture = null;
      if (polyline.length >= 2) {
        this.submit([
          {
            kind: "add_strokes",
            payload: {
              strokes: [{ polyline, width: 3.0, trainable: this.drawTrainable }],
            },
          },
        ]);
      } else {
        this.render();
      }
    } else if (this.dragStart) {
      const start = this.dragStart;
      this.dragStart = null;
      this.dragLast = null;
      const indices = [...this.selection].sort((a, b) => a - b);
      if (this.tool === "translate") {
        const dx = p[0] - start[0];
        const dy = p[1] - start[1];
        if (dx !== 0 || dy !== 0) {
          this.submit([{ kind: "translate", payload: { indices, dx, dy } }]);
          return;
        }
      } else if (this.tool === "scale") {
        const pivot = selectionCentroid(this.frame.base_sketch.strokes, indices);
        const d0 = Math.hypot(start[0] - pivot[0], start[1] - pivot[1]);
        const d1 = Math.hypot(p[0] - pivot[0], p[1] - pivot[1]);
        if (d0 > 1e-6 && d1 > 1e-6 && d0 !== d1) {
          this.submit([
            { kind: "scale", payload: { indices, factor: d1 / d0, pivot } },
          ]);
          return;
        }
      }
      this.render();
    }
  }

  private hitStroke(p: Point): number {
    const strokes = this.frame!.base_sketch.strokes;
    let best = -1;
    let bestD = HIT_RADIUS;
    strokes.forEach((s, i) => {
      const d = strokeHitDistance(p, s.points);
      if (d < bestD) {
        bestD = d;
        best = i;
      }
    });
    return best;
  }

  private submit(ops: { kind: string; payload: Record<string, unknown> }[]): void {
    if (!this.frame) return;
    const k = this.frame.index;
    this.lastEdit = this.api
      .postEdits(this.sessionId, k, ops as never)
      .then((frame) => {
        this.frame = frame;
        this.render();
        this.onFrameUpdate(frame);
        return frame;
      })
      .catch((err) => {
        this.onError(err);
        this.render();
      });
  }

  async undo(): Promise<void> {
    if (!this.frame) return;
    try {
      const frame = await this.api.undoEdit(this.sessionId, this.frame.index);
      this.frame = frame;
      this.selection.clear();
      this.render();
      this.onFrameUpdate(frame);
    } catch (err) {
      this.onError(err);
    }
  }

  render(): void {
    if (!this.frame) return;
    const doc = this.svg.ownerDocument;
    const sketch = this.frame.base_sketch;
    this.svg.setAttribute("viewBox", `0 0 ${sketch.canvas_w} ${sketch.canvas_h}`);
    this.svg.setAttribute("width", "480");
    this.svg.setAttribute("height", String((480 * sketch.canvas_h) / sketch.canvas_w));
    while (this.svg.firstChild) this.svg.removeChild(this.svg.firstChild);

    const bg = doc.createElementNS(SVG_NS, "rect");
    bg.setAttribute("width", String(sketch.canvas_w));
    bg.setAttribute("height", String(sketch.canvas_h));
    bg.setAttribute("fill", "#ffffff");
    this.svg.appendChild(bg);

    sketch.strokes.forEach((stroke, i) => {
      const path = doc.createElementNS(SVG_NS, "path");
      path.setAttribute("d", strokePathD(stroke.points));
      path.setAttribute("fill", "none");
      path.setAttribute("stroke-width", String(stroke.width));
      path.setAttribute("stroke-linecap", "round");
      path.setAttribute("stroke-linejoin", "round");
      // Frozen (condition) strokes read as slate; trainable ones as ink.
      path.setAttribute("stroke", stroke.trainable ? "#1a1a1a" : "#64748b");
      if (!stroke.trainable) path.setAttribute("stroke-dasharray", "6 3");
      if (this.selection.has(i)) {
        path.setAttribute("stroke", "#2563eb");
      }
      path.setAttribute("data-stroke-index", String(i));
      this.svg.appendChild(path);
    });
    this.ghost = null;
  }

  private renderCaptureOverlay(): void {
    if (!this.capture || this.capture.length < 2) return;
    const doc = this.svg.ownerDocument;
    let overlay = this.svg.querySelector("polyline.capture");
    if (!overlay) {
      overlay = doc.createElementNS(SVG_NS, "polyline");
      overlay.setAttribute("class", "capture");
      overlay.setAttribute("fill", "none");
      overlay.setAttribute("stroke", "#9ca3af");
      overlay.setAttribute("stroke-width", "2");
      this.svg.appendChild(overlay);
    }
    overlay.setAttribute("points", this.capture.map(([x, y]) => `${x},${y}`).join(" "));
  }

  private showGhost(): void {
    if (!this.frame) return;
    const b = selectionBounds(this.frame.base_sketch.strokes, [...this.selection]);
    if (!b) return;
    const doc = this.svg.ownerDocument;
    this.ghost = doc.createElementNS(SVG_NS, "rect") as SVGRectElement;
    this.ghost.setAttribute("fill", "none");
    this.ghost.setAttribute("stroke", "#2563eb");
    this.ghost.setAttribute("stroke-dasharray", "4 4");
    this.updateGhost();
    this.svg.appendChild(this.ghost);
  }

  private updateGhost(): void {
    if (!this.ghost || !this.frame || !this.dragStart || !this.dragLast) return;
    const b = selectionBounds(this.frame.base_sketch.strokes, [...this.selection]);
    if (!b) return;
    let { x, y, w, h } = b;
    if (this.tool === "translate") {
      x += this.dragLast[0] - this.dragStart[0];
      y += this.dragLast[1] - this.dragStart[1];
    } else {
      const pivot = selectionCentroid(this.frame.base_sketch.strokes, [...this.selection]);
      const d0 = Math.hypot(this.dragStart[0] - pivot[0], this.dragStart[1] - pivot[1]);
      const d1 = Math.hypot(this.dragLast[0] - pivot[0], this.dragLast[1] - pivot[1]);
      const f = d0 > 1e-6 ? d1 / d0 : 1;
      x = pivot[0] + f * (x - pivot[0]);
      y = pivot[1] + f * (y - pivot[1]);
      w *= f;
      h *= f;
    }
    this.ghost.setAttribute("x", String(x));
    this.ghost.setAttribute("y", String(y));
    this.ghost.setAttribute("width", String(w));
    this.ghost.setAttribute("height", String(h));
  }
}
