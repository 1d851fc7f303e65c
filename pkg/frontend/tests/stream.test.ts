// Event stream consumption: NDJSON parsing and drop-safe reconnection.

import { createServer, type Server } from "node:http";
import { afterEach, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import type { TraceEvent } from "../src/types.js";

let server: Server | null = null;

afterEach(() => {
  server?.close();
  server = null;
});

function listen(handler: Parameters<typeof createServer>[1]): Promise<string> {
  server = createServer(handler);
  return new Promise((resolve) => {
    server!.listen(0, "127.0.0.1", () => {
      const addr = server!.address() as { port: number };
      resolve(`http://127.0.0.1:${addr.port}`);
    });
  });
}

const ev = (iter: number) =>
  JSON.stringify({ iter, loss: iter * 0.5, grad_norm: 1, pruned: [] }) + "\n";

describe("streamEvents", () => {
  it("yields parsed lines and the terminator", async () => {
    const base = await listen((req, res) => {
      res.writeHead(200, { "content-type": "application/x-ndjson" });
      res.write(ev(1));
      res.write(ev(2));
      res.end(JSON.stringify({ event: "done" }) + "\n");
    });
    const api = new ApiClient(base);
    const lines = [];
    for await (const line of api.streamEvents("s", 0)) lines.push(line);
    expect(lines).toHaveLength(3);
    expect((lines[0] as TraceEvent).iter).toBe(1);
    expect(lines[2]).toEqual({ event: "done" });
  });

  it("handles lines split across chunks", async () => {
    const base = await listen((req, res) => {
      res.writeHead(200);
      const whole = ev(1) + ev(2) + JSON.stringify({ event: "done" }) + "\n";
      res.write(whole.slice(0, 17));
      setTimeout(() => {
        res.write(whole.slice(17, 40));
        setTimeout(() => res.end(whole.slice(40)), 5);
      }, 5);
    });
    const api = new ApiClient(base);
    const iters: (number | undefined)[] = [];
    for await (const line of api.streamEvents("s", 0)) {
      iters.push((line as TraceEvent).iter);
    }
    expect(iters).toEqual([1, 2, undefined]);
  });
});

describe("followRun", () => {
  it("reconnects after a drop without duplicating or reordering events", async () => {
    let calls = 0;
    const base = await listen((req, res) => {
      const after = Number(new URL(req.url!, "http://x").searchParams.get("after") ?? 0);
      calls += 1;
      res.writeHead(200);
      if (calls === 1) {
        expect(after).toBe(0);
        res.write(ev(1));
        res.write(ev(2));
        // Let the chunks flush, then drop the socket (no terminator).
        setTimeout(() => res.destroy(), 50);
      } else {
        expect(after).toBe(2);
        res.write(ev(3));
        res.end(JSON.stringify({ event: "cancelled" }) + "\n");
      }
    });
    const api = new ApiClient(base);
    const seen: number[] = [];
    const term = await api.followRun("s", 0, (e) => seen.push(e.iter));
    expect(seen).toEqual([1, 2, 3]);
    expect(term).toEqual({ event: "cancelled" });
    expect(calls).toBe(2);
  });

  it("filters re-sent iterations on overlap", async () => {
    let calls = 0;
    const base = await listen((req, res) => {
      calls += 1;
      res.writeHead(200);
      if (calls === 1) {
        res.write(ev(1));
        setTimeout(() => res.destroy(), 50);
      } else {
        // Server replays everything regardless of `after`.
        res.write(ev(1));
        res.write(ev(2));
        res.end(JSON.stringify({ event: "done" }) + "\n");
      }
    });
    const api = new ApiClient(base);
    const seen: number[] = [];
    await api.followRun("s", 0, (e) => seen.push(e.iter));
    expect(seen).toEqual([1, 2]);
  });
});
