// Studio shell: one session, a frame strip, the editor, the run panel, and
// the storyboard gallery wired to the HTTP API.

import { ApiClient } from "./api.js";
import { EditorView, Tool } from "./editor.js";
import { RunPanel } from "./runpanel.js";
import { StoryboardView } from "./storyboard.js";
import type { FrameDoc, SessionDoc } from "./types.js";

const TOOLS: Tool[] = ["draw", "select", "translate", "scale", "lock"];

export class StudioApp {
  readonly root: HTMLElement;
  readonly editor: EditorView;
  readonly runPanel: RunPanel;
  readonly storyboard: StoryboardView;
  readonly frameStrip: HTMLElement;
  readonly toast: HTMLElement;
  session: SessionDoc | null = null;
  frameIndex = 0;

  constructor(
    readonly api: ApiClient,
    readonly sessionId: string,
    doc: Document = document,
  ) {
    this.root = doc.createElement("div");
    this.root.className = "studio";

    this.toast = doc.createElement("div");
    this.toast.className = "toast";
    this.frameStrip = doc.createElement("div");
    this.frameStrip.className = "frame-strip";

    const toolbar = doc.createElement("div");
    toolbar.className = "toolbar";
    this.editor = new EditorView(api, sessionId, doc);
    for (const tool of TOOLS) {
      const btn = doc.createElement("button");
      btn.textContent = tool;
      btn.setAttribute("data-tool", tool);
      btn.addEventListener("click", () => {
        this.editor.tool = tool;
        toolbar
          .querySelectorAll("button[data-tool]")
          .forEach((b) => b.classList.toggle("active", b === btn));
      });
      toolbar.appendChild(btn);
    }
    const trainableToggle = doc.createElement("label");
    const checkbox = doc.createElement("input");
    checkbox.type = "checkbox";
    checkbox.addEventListener("change", () => {
      this.editor.drawTrainable = checkbox.checked;
    });
    trainableToggle.appendChild(checkbox);
    trainableToggle.appendChild(doc.createTextNode(" new strokes optimizable"));
    toolbar.appendChild(trainableToggle);
    const undoBtn = doc.createElement("button");
    undoBtn.textContent = "undo";
    undoBtn.addEventListener("click", () => void this.editor.undo());
    toolbar.appendChild(undoBtn);

    this.runPanel = new RunPanel(api, sessionId, doc);
    this.storyboard = new StoryboardView(api, sessionId, doc);

    this.editor.onError = (err) => this.showError(err);
    this.runPanel.onError = (err) => this.showError(err);
    this.storyboard.onError = (err) => this.showError(err);
    this.editor.onFrameUpdate = (frame) => this.absorbFrame(frame);
    this.runPanel.onFrameDone = () => void this.refresh();
    this.runPanel.onAccept = (template) => void this.acceptNextFrame(template);

    const newFrameBtn = doc.createElement("button");
    newFrameBtn.className = "new-frame";
    newFrameBtn.textContent = "new frame from prompt";
    newFrameBtn.addEventListener("click", () => {
      const last = this.session?.frames.at(-1);
      const inherit = last?.status === "done";
      void this.addFrame(this.runPanel.promptBox.value, inherit).catch((err) =>
        this.showError(err),
      );
    });

    this.root.appendChild(this.toast);
    this.root.appendChild(this.frameStrip);
    this.root.appendChild(toolbar);
    this.root.appendChild(this.editor.root);
    this.root.appendChild(this.runPanel.root);
    this.root.appendChild(newFrameBtn);
    this.root.appendChild(this.storyboard.root);
  }

  async refresh(): Promise<void> {
    this.session = await this.api.getSession(this.sessionId);
    if (this.session.frames.length === 0) {
      this.frameIndex = 0;
    } else if (this.frameIndex >= this.session.frames.length) {
      this.frameIndex = this.session.frames.length - 1;
    }
    this.renderFrameStrip();
    const frame = this.session.frames[this.frameIndex];
    if (frame) {
      this.editor.setFrame(frame);
      this.runPanel.setFrame(frame, this.previousPrompt(frame));
    }
    this.storyboard.render(this.session);
  }

  private previousPrompt(frame: FrameDoc): string | null {
    if (!this.session || frame.index === 0) return null;
    return this.session.frames[frame.index - 1].resolved_prompt;
  }

  private absorbFrame(frame: FrameDoc): void {
    if (this.session) this.session.frames[frame.index] = frame;
  }

  async addFrame(template: string, inherit: boolean): Promise<FrameDoc> {
    const frame = await this.api.addFrame(this.sessionId, {
      template,
      inherit,
      canvas_w: 600,
      canvas_h: 600,
    });
    this.frameIndex = frame.index;
    await this.refresh();
    return frame;
  }

  private async acceptNextFrame(template: string): Promise<void> {
    try {
      await this.addFrame(template, true);
    } catch (err) {
      this.showError(err);
    }
  }

  selectFrame(index: number): void {
    this.frameIndex = index;
    void this.refresh();
  }

  private renderFrameStrip(): void {
    const doc = this.root.ownerDocument;
    while (this.frameStrip.firstChild) this.frameStrip.removeChild(this.frameStrip.firstChild);
    if (!this.session) return;
    this.session.frames.forEach((frame) => {
      const chip = doc.createElement("button");
      chip.textContent = `frame ${frame.index} [${frame.status}]`;
      chip.classList.toggle("active", frame.index === this.frameIndex);
      chip.addEventListener("click", () => this.selectFrame(frame.index));
      this.frameStrip.appendChild(chip);
    });
  }

  showError(err: unknown): void {
    this.toast.textContent = err instanceof Error ? err.message : String(err);
    this.toast.classList.add("visible");
  }
}

export async function bootStudio(
  apiBase: string,
  mount: HTMLElement,
  doc: Document = document,
): Promise<StudioApp> {
  const api = new ApiClient(apiBase);
  const sessionId = await api.createSession();
  const app = new StudioApp(api, sessionId, doc);
  mount.appendChild(app.root);
  await app.refresh();
  return app;
}
