// Typed client for the /v1 HTTP API, including the NDJSON event stream.

import type { EditOp, FrameDoc, SessionDoc, StreamLine } from "./types.js";
import { isTerminator } from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly code: string,
    message: string,
    readonly status: number,
  ) {
    super(message);
  }
}

async function raise(resp: Response): Promise<never> {
  let code = "internal";
  let message = `HTTP ${resp.status}`;
  try {
    const body = await resp.json();
    if (body?.error) {
      code = body.error.code ?? code;
      message = body.error.message ?? message;
    }
  } catch {
    // non-JSON error body; keep defaults
  }
  throw new ApiError(code, message, resp.status);
}

export interface AddFrameBody {
  template: string;
  inherit: boolean;
  n_strokes?: number;
  segments?: number;
  stroke_width?: number;
  canvas_w?: number;
  canvas_h?: number;
  config?: Record<string, unknown>;
}

export class ApiClient {
  constructor(
    readonly base: string,
    private readonly fetchImpl: typeof fetch = globalThis.fetch.bind(globalThis),
  ) {}

  private url(path: string): string {
    return `${this.base.replace(/\/$/, "")}/v1${path}`;
  }

  private async json<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchImpl(this.url(path), init);
    if (!resp.ok) await raise(resp);
    return (await resp.json()) as T;
  }

  private post<T>(path: string, body?: unknown): Promise<T> {
    return this.json<T>(path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body ?? {}),
    });
  }

  healthz(): Promise<{ ok: boolean }> {
    return this.json("/healthz");
  }

  async createSession(seedBase = 0): Promise<string> {
    const out = await this.post<{ id: string }>("/sessions", { seed_base: seedBase });
    return out.id;
  }

  getSession(id: string): Promise<SessionDoc> {
    return this.json(`/sessions/${id}`);
  }

  addFrame(id: string, body: AddFrameBody): Promise<FrameDoc> {
    return this.post(`/sessions/${id}/frames`, body);
  }

  postEdits(id: string, k: number, ops: EditOp[]): Promise<FrameDoc> {
    return this.post(`/sessions/${id}/frames/${k}/edits`, { ops });
  }

  undoEdit(id: string, k: number): Promise<FrameDoc> {
    return this.post(`/sessions/${id}/frames/${k}/undo`);
  }

  run(id: string, k: number, overrides: Record<string, unknown> = {}): Promise<unknown> {
    return this.post(`/sessions/${id}/frames/${k}/run`, overrides);
  }

  cancel(id: string, k: number): Promise<unknown> {
    return this.post(`/sessions/${id}/frames/${k}/cancel`);
  }

  async storyboardSvg(id: string): Promise<string> {
    const resp = await this.fetchImpl(this.url(`/sessions/${id}/storyboard.svg`));
    if (!resp.ok) await raise(resp);
    return await resp.text();
  }

  /**
   * Stream trace events for one run. Yields parsed NDJSON lines in order;
   * completes after the terminator line.
   */
  async *streamEvents(id: string, k: number, after = 0): AsyncGenerator<StreamLine> {
    const resp = await this.fetchImpl(this.url(`/sessions/${id}/frames/${k}/events?after=${after}`));
    if (!resp.ok) await raise(resp);
    if (!resp.body) throw new ApiError("internal", "event stream has no body", 500);
    const reader = resp.body.getReader();
    const decoder = new TextDecoder();
    let buffer = "";
    for (;;) {
      const { value, done } = await reader.read();
      if (value) {
        buffer += decoder.decode(value, { stream: true });
        let nl: number;
        while ((nl = buffer.indexOf("\n")) >= 0) {
          const line = buffer.slice(0, nl).trim();
          buffer = buffer.slice(nl + 1);
          if (line) yield JSON.parse(line) as StreamLine;
        }
      }
      if (done) break;
    }
    const tail = buffer.trim();
    if (tail) yield JSON.parse(tail) as StreamLine;
  }

  /**
   * Follow a run to completion with automatic reconnect. Events are
   * delivered to `onEvent` strictly once, in increasing iter order, even
   * across reconnects; returns the terminator.
   */
  async followRun(
    id: string,
    k: number,
    onEvent: (ev: import("./types.js").TraceEvent) => void,
    opts: { maxReconnects?: number } = {},
  ): Promise<import("./types.js").StreamTerminator> {
    let lastIter = 0;
    let reconnects = 0;
    const maxReconnects = opts.maxReconnects ?? 20;
    for (;;) {
      try {
        for await (const line of this.streamEvents(id, k, lastIter)) {
          if (isTerminator(line)) return line;
          if (line.iter > lastIter) {
            lastIter = line.iter;
            onEvent(line);
          }
        }
        // Stream ended without a terminator: treat as a drop and resume.
      } catch (err) {
        if (err instanceof ApiError) throw err;
      }
      reconnects += 1;
      if (reconnects > maxReconnects) {
        return { event: "error", message: "event stream dropped too many times" };
      }
    }
  }
}
