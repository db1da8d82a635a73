import { describe, expect, it, vi } from "vitest";

import { ApiClient, ApiError, parseNdjsonChunks, type RunEvent } from "../src/api.js";

describe("parseNdjsonChunks", () => {
  it("splits complete lines and carries partials across chunks", () => {
    const parser = parseNdjsonChunks();
    const first = parser.push('{"type":"step","step":0}\n{"type":"st');
    expect(first).toEqual([{ type: "step", step: 0 }]);
    const second = parser.push('ep","step":1}\n');
    expect(second).toEqual([{ type: "step", step: 1 }]);
    expect(parser.flush()).toEqual([]);
  });

  it("flush parses a trailing unterminated line", () => {
    const parser = parseNdjsonChunks();
    parser.push('{"type":"summary"');
    expect(parser.push(',"run":0}')).toEqual([]);
    expect(parser.flush()).toEqual([{ type: "summary", run: 0 }]);
  });

  it("ignores blank lines", () => {
    const parser = parseNdjsonChunks();
    expect(parser.push('\n\n{"type":"step","step":2}\n\n')).toEqual([
      { type: "step", step: 2 },
    ]);
  });
});

function streamResponse(lines: string[]): Response {
  const encoder = new TextEncoder();
  const body = new ReadableStream<Uint8Array>({
    start(controller) {
      for (const line of lines) controller.enqueue(encoder.encode(line));
      controller.close();
    },
  });
  return new Response(body, { status: 200 });
}

describe("ApiClient", () => {
  it("streamEvents delivers parsed events in order", async () => {
    const fetchFn = vi.fn(async () =>
      streamResponse([
        '{"type":"step","step":0,"u_cmd":[1,2],"x_believed":[0,65],"x_true":[0,65],"objective":1,"saturated":false}\n',
        '{"type":"summary","run":0,"converged":true,"n_steps":1,"final_true":[0,65],',
        '"target":[0,65],"d_err":0.1,"stage_move":0,"sim_time_s":0.5}\n',
      ]),
    );
    const client = new ApiClient("", fetchFn as unknown as typeof fetch);
    const seen: RunEvent[] = [];
    await client.streamEvents("abc", (ev) => seen.push(ev));
    expect(seen.map((e) => e.type)).toEqual(["step", "summary"]);
    expect(fetchFn).toHaveBeenCalledWith("/sessions/abc/events?from_step=0");
  });

  it("raises ApiError with status and body on 4xx", async () => {
    const fetchFn = vi.fn(async () => new Response("outside workspace", { status: 422 }));
    const client = new ApiClient("", fetchFn as unknown as typeof fetch);
    await expect(client.setTarget("abc", { x: 999, y: 999 })).rejects.toThrowError(
      ApiError,
    );
  });

  it("createSession posts the model name", async () => {
    const fetchFn = vi.fn(async (_url: string, init?: RequestInit) => {
      expect(JSON.parse(String(init?.body))).toEqual({ model: "nnkm", seed: 0 });
      return new Response(JSON.stringify({ id: "s1" }), { status: 201 });
    });
    const client = new ApiClient("", fetchFn as unknown as typeof fetch);
    const out = await client.createSession("nnkm");
    expect(out).toMatchObject({ id: "s1" });
  });
});
