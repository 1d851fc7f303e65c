// Run panel: prompt template with previous-prompt insertion, guidance
// settings, start/cancel, live SVG preview and loss sparkline fed by the
// NDJSON event stream (reconnect-safe, never duplicates an iteration).

import { ApiClient, ApiError } from "./api.js";
import { expandPromptPreview } from "./geometry.js";
import type { FrameDoc, TraceEvent } from "./types.js";

const SVG_NS = "http://www.w3.org/2000/svg";

export class RunPanel {
  readonly root: HTMLElement;
  readonly promptBox: HTMLTextAreaElement;
  readonly resolvedPreview: HTMLElement;
  readonly omegaSlider: HTMLInputElement;
  readonly omegaValue: HTMLElement;
  readonly itersInput: HTMLInputElement;
  readonly guidanceInput: HTMLInputElement;
  readonly startButton: HTMLButtonElement;
  readonly cancelButton: HTMLButtonElement;
  readonly acceptButton: HTMLButtonElement;
  readonly statusChip: HTMLElement;
  readonly preview: HTMLElement;
  readonly sparkline: SVGSVGElement;

  frame: FrameDoc | null = null;
  previousPrompt: string | null = null;
  lastIter = 0;
  losses: number[] = [];
  onFrameDone: (frame: FrameDoc) => void = () => {};
  onAccept: (template: string) => void = () => {};
  onError: (err: unknown) => void = () => {};
  /** Resolves when the current follow loop ends (test hook). */
  runWatch: Promise<unknown> = Promise.resolve();

  constructor(
    private readonly api: ApiClient,
    private readonly sessionId: string,
    doc: Document = document,
  ) {
    this.root = doc.createElement("div");
    this.root.className = "run-panel";

    this.promptBox = doc.createElement("textarea");
    this.promptBox.rows = 2;
    this.promptBox.placeholder = "prompt template; […] inserts the previous prompt";
    const insertBtn = doc.createElement("button");
    insertBtn.textContent = "insert […]";
    insertBtn.addEventListener("click", () => {
      this.promptBox.value += "[…]";
      this.refreshResolved();
    });
    this.resolvedPreview = doc.createElement("div");
    this.resolvedPreview.className = "resolved-preview";
    this.promptBox.addEventListener("input", () => this.refreshResolved());

    this.omegaSlider = doc.createElement("input");
    this.omegaSlider.type = "range";
    this.omegaSlider.min = "0";
    this.omegaSlider.max = "200";
    this.omegaSlider.value = "100";
    this.omegaValue = doc.createElement("span");
    this.omegaValue.textContent = "100";
    this.omegaSlider.addEventListener("input", () => {
      this.omegaValue.textContent = this.omegaSlider.value;
    });

    this.itersInput = doc.createElement("input");
    this.itersInput.type = "number";
    this.itersInput.value = "1000";
    this.guidanceInput = doc.createElement("input");
    this.guidanceInput.type = "text";
    this.guidanceInput.value = "zero";

    this.startButton = doc.createElement("button");
    this.startButton.textContent = "start";
    this.startButton.addEventListener("click", () => void this.start());
    this.cancelButton = doc.createElement("button");
    this.cancelButton.textContent = "cancel";
    this.cancelButton.disabled = true;
    this.cancelButton.addEventListener("click", () => void this.cancel());
    this.acceptButton = doc.createElement("button");
    this.acceptButton.textContent = "accept → next frame";
    this.acceptButton.disabled = true;
    this.acceptButton.addEventListener("click", () =>
      this.onAccept(this.promptBox.value || "[…]"),
    );

    this.statusChip = doc.createElement("span");
    this.statusChip.className = "status-chip";
    this.preview = doc.createElement("div");
    this.preview.className = "live-preview";
    this.sparkline = doc.createElementNS(SVG_NS, "svg") as SVGSVGElement;
    this.sparkline.setAttribute("viewBox", "0 0 200 40");
    this.sparkline.setAttribute("class", "sparkline");

    for (const el of [
      this.promptBox,
      insertBtn,
      this.resolvedPreview,
      this.omegaSlider,
      this.omegaValue,
      this.itersInput,
      this.guidanceInput,
      this.startButton,
      this.cancelButton,
      this.acceptButton,
      this.statusChip,
      this.sparkline,
      this.preview,
    ]) {
      this.root.appendChild(el);
    }
  }

  setFrame(frame: FrameDoc, previousPrompt: string | null): void {
    this.frame = frame;
    this.previousPrompt = previousPrompt;
    this.promptBox.value = frame.prompt_template;
    this.lastIter = 0;
    this.losses = [];
    this.setStatus(frame.status);
    this.refreshResolved();
    if (frame.result) this.renderResultPreview(frame);
  }

  private refreshResolved(): void {
    this.resolvedPreview.textContent = expandPromptPreview(
      this.promptBox.value,
      this.previousPrompt,
    );
  }

  private setStatus(status: string): void {
    this.statusChip.textContent = status;
    this.statusChip.setAttribute("data-status", status);
    this.startButton.disabled = status === "running";
    this.cancelButton.disabled = status !== "running";
    this.acceptButton.disabled = status !== "done";
  }

  async start(): Promise<void> {
    if (!this.frame) return;
    const k = this.frame.index;
    const overrides: Record<string, unknown> = {
      omega: Number(this.omegaSlider.value),
      iterations: Number(this.itersInput.value),
    };
    const spec = this.guidanceInput.value.trim();
    if (spec) overrides.guidance_spec = spec;
    try {
      await this.api.run(this.sessionId, k, overrides);
    } catch (err) {
      this.onError(err);
      return;
    }
    this.lastIter = 0;
    this.losses = [];
    this.setStatus("running");
    this.runWatch = this.follow(k);
  }

  private async follow(k: number): Promise<void> {
    try {
      const term = await this.api.followRun(this.sessionId, k, (ev) => this.consume(ev));
      if (term.event === "error") {
        this.setStatus("draft");
        this.onError(new ApiError("backend_unavailable", term.message ?? "run failed", 503));
      } else {
        this.setStatus(term.event === "cancelled" ? "cancelled" : "done");
      }
      const doc = await this.api.getSession(this.sessionId);
      this.frame = doc.frames[k];
      if (this.frame.status === "done") this.onFrameDone(this.frame);
    } catch (err) {
      this.onError(err);
    }
  }

  private consume(ev: TraceEvent): void {
    this.lastIter = ev.iter;
    if (ev.loss !== null && ev.loss !== undefined) {
      this.losses.push(ev.loss);
      this.renderSparkline();
    }
    if (ev.svg) this.preview.innerHTML = ev.svg;
  }

  async cancel(): Promise<void> {
    if (!this.frame) return;
    try {
      await this.api.cancel(this.sessionId, this.frame.index);
    } catch (err) {
      this.onError(err);
    }
  }

  private renderResultPreview(frame: FrameDoc): void {
    // The final snapshot arrives with the last trace event; when loading a
    // finished frame cold, rebuild a plain preview from the result strokes.
    const sketch = frame.result!;
    const paths = sketch.strokes
      .map(
        (s) =>
          `<path d="${pathD(s.points)}" fill="none" stroke="#1a1a1a" stroke-width="${s.width}" stroke-linecap="round" stroke-linejoin="round"/>`,
      )
      .join("");
    this.preview.innerHTML =
      `<svg xmlns="${SVG_NS}" viewBox="0 0 ${sketch.canvas_w} ${sketch.canvas_h}" width="240">` +
      `<rect width="${sketch.canvas_w}" height="${sketch.canvas_h}" fill="#ffffff"/>${paths}</svg>`;
  }

  private renderSparkline(): void {
    const n = this.losses.length;
    if (n < 2) return;
    const lo = Math.min(...this.losses);
    const hi = Math.max(...this.losses);
    const span = hi - lo || 1;
    const pts = this.losses
      .map((v, i) => `${(i / (n - 1)) * 200},${38 - ((v - lo) / span) * 36}`)
      .join(" ");
    this.sparkline.innerHTML = `<polyline points="${pts}" fill="none" stroke="#dc2626" stroke-width="1.5"/>`;
  }
}

function pathD(points: number[][]): string {
  let d = `M ${points[0][0]} ${points[0][1]}`;
  for (let i = 1; i + 2 < points.length; i += 3) {
    d += ` C ${points[i][0]} ${points[i][1]} ${points[i + 1][0]} ${points[i + 1][1]} ${points[i + 2][0]} ${points[i + 2][1]}`;
  }
  return d;
}
