// Wire types mirroring the server's session JSON documents.

export interface StrokeDoc {
  points: number[][];
  width: number;
  ink: number;
  opacity: number;
  trainable: boolean;
}

export interface SketchDoc {
  canvas_w: number;
  canvas_h: number;
  strokes: StrokeDoc[];
}

export type FrameStatus = "draft" | "running" | "done" | "cancelled";

export interface FrameDoc {
  index: number;
  prompt_template: string;
  resolved_prompt: string;
  status: FrameStatus;
  error: string | null;
  base_sketch: SketchDoc;
  pristine_base: SketchDoc;
  trainable_init: SketchDoc;
  result: SketchDoc | null;
  history: { kind: string; payload: Record<string, unknown> }[];
  config: {
    iterations: number;
    seed: number;
    snapshot_every: number;
    guidance_spec: string | null;
    guidance: { omega: number; prompt: string };
    [key: string]: unknown;
  };
}

export interface SessionDoc {
  schema: number;
  id: string;
  created_at: string;
  updated_at: string;
  seed_base: number;
  frames: FrameDoc[];
}

export interface TraceEvent {
  iter: number;
  loss: number | null;
  grad_norm: number;
  pruned: number[];
  svg?: string;
}

export type StreamTerminator = { event: "done" | "cancelled" | "error"; message?: string };

export type StreamLine = TraceEvent | StreamTerminator;

export interface EditOp {
  kind:
    | "translate"
    | "scale"
    | "add_strokes"
    | "delete_strokes"
    | "lock_strokes"
    | "unlock_strokes";
  payload: Record<string, unknown>;
}

export function isTerminator(line: StreamLine): line is StreamTerminator {
  return typeof (line as StreamTerminator).event === "string";
}
