// Storyboard gallery: completed frames in order with captions, plus export
// that downloads the server's storyboard SVG verbatim.

import { ApiClient } from "./api.js";
import { strokePathD } from "./geometry.js";
import type { SessionDoc } from "./types.js";

const SVG_NS = "http://www.w3.org/2000/svg";

export class StoryboardView {
  readonly root: HTMLElement;
  readonly gallery: HTMLElement;
  readonly exportButton: HTMLButtonElement;
  onError: (err: unknown) => void = () => {};
  /** The exact bytes last downloaded by the export button (test hook). */
  lastExport: string | null = null;

  constructor(
    private readonly api: ApiClient,
    private readonly sessionId: string,
    doc: Document = document,
  ) {
    this.root = doc.createElement("div");
    this.root.className = "storyboard";
    this.gallery = doc.createElement("div");
    this.gallery.className = "storyboard-gallery";
    this.exportButton = doc.createElement("button");
    this.exportButton.textContent = "export storyboard.svg";
    this.exportButton.addEventListener("click", () => void this.exportSvg());
    this.root.appendChild(this.exportButton);
    this.root.appendChild(this.gallery);
  }

  render(session: SessionDoc): void {
    const doc = this.root.ownerDocument;
    while (this.gallery.firstChild) this.gallery.removeChild(this.gallery.firstChild);
    const done = session.frames.filter((f) => f.status === "done" && f.result);
    if (done.length === 0) {
      const hint = doc.createElement("p");
      hint.className = "empty-hint";
      hint.textContent = "No completed frames yet; run a round to start the storyboard.";
      this.gallery.appendChild(hint);
      return;
    }
    for (const frame of done) {
      const panel = doc.createElement("figure");
      panel.className = "storyboard-panel";
      const sketch = frame.result!;
      const svg = doc.createElementNS(SVG_NS, "svg");
      svg.setAttribute("viewBox", `0 0 ${sketch.canvas_w} ${sketch.canvas_h}`);
      svg.setAttribute("width", "220");
      const bg = doc.createElementNS(SVG_NS, "rect");
      bg.setAttribute("width", String(sketch.canvas_w));
      bg.setAttribute("height", String(sketch.canvas_h));
      bg.setAttribute("fill", "#ffffff");
      svg.appendChild(bg);
      for (const stroke of sketch.strokes) {
        const path = doc.createElementNS(SVG_NS, "path");
        path.setAttribute("d", strokePathD(stroke.points));
        path.setAttribute("fill", "none");
        path.setAttribute("stroke", "#1a1a1a");
        path.setAttribute("stroke-width", String(stroke.width));
        path.setAttribute("stroke-linecap", "round");
        svg.appendChild(path);
      }
      const caption = doc.createElement("figcaption");
      caption.textContent = frame.resolved_prompt;
      panel.appendChild(svg);
      panel.appendChild(caption);
      this.gallery.appendChild(panel);
    }
  }

  async exportSvg(): Promise<string | null> {
    try {
      const svg = await this.api.storyboardSvg(this.sessionId);
      this.lastExport = svg;
      this.download(svg);
      return svg;
    } catch (err) {
      this.onError(err);
      return null;
    }
  }

  private download(svg: string): void {
    const doc = this.root.ownerDocument;
    const win = doc.defaultView;
    if (!win || typeof win.URL?.createObjectURL !== "function") return;
    const blob = new Blob([svg], { type: "image/svg+xml" });
    const url = win.URL.createObjectURL(blob);
    const a = doc.createElement("a");
    a.href = url;
    a.download = "storyboard.svg";
    a.click();
    win.URL.revokeObjectURL(url);
  }
}
