// Typed client for the control-service HTTP API plus the NDJSON stream
// reader.  The reader hands back complete JSON objects only; partial lines
// at chunk boundaries are carried over.

export interface SessionInfo {
  id: string;
  model: { name: string; n: number; m: number };
  workspace: {
    hull: Array<[number, number]>;
    x_range: [number, number];
    y_range: [number, number];
    theta_range: [number, number];
    thresholds: { sigma1: number; sigma2: number };
  };
  draw: import("./geometry.js").DrawParams;
}

export interface StepEvent {
  type: "step";
  step: number;
  u_cmd: number[];
  x_believed: number[];
  x_true: number[];
  objective: number;
  saturated: boolean;
}

export interface SummaryEvent {
  type: "summary";
  run: number;
  converged: boolean;
  n_steps: number;
  final_true: number[];
  target: number[];
  d_err: number;
  theta_err?: number;
  stage_move: number;
  sim_time_s: number;
}

export interface ErrorEvent {
  type: "error";
  message: string;
}

export type RunEvent = StepEvent | SummaryEvent | ErrorEvent;

export function parseNdjsonChunks(): {
  push: (chunk: string) => RunEvent[];
  flush: () => RunEvent[];
} {
  let carry = "";
  return {
    push(chunk: string): RunEvent[] {
      carry += chunk;
      const lines = carry.split("\n");
      carry = lines.pop() ?? "";
      return lines.filter((l) => l.trim()).map((l) => JSON.parse(l) as RunEvent);
    },
    flush(): RunEvent[] {
      const rest = carry.trim();
      carry = "";
      return rest ? [JSON.parse(rest) as RunEvent] : [];
    },
  };
}

export class ApiClient {
  constructor(
    private base = "",
    private fetchFn: typeof fetch = fetch.bind(globalThis),
  ) {}

  private async json<T>(path: string, init?: RequestInit): Promise<T> {
    const res = await this.fetchFn(this.base + path, init);
    if (!res.ok) {
      const body = await res.text();
      throw new ApiError(res.status, body);
    }
    return (await res.json()) as T;
  }

  listModels(): Promise<{ models: string[] }> {
    return this.json("/models");
  }

  createSession(model: string, seed = 0): Promise<SessionInfo> {
    return this.json("/sessions", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ model, seed }),
    });
  }

  reset(sid: string, seed?: number): Promise<{ measured: number[] }> {
    return this.json(`/sessions/${sid}/reset`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(seed === undefined ? {} : { seed }),
    });
  }

  setTarget(
    sid: string,
    target: { x: number; y: number; theta?: number; stage?: boolean; seed?: number },
  ): Promise<{ run: number }> {
    return this.json(`/sessions/${sid}/target`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(target),
    });
  }

  deleteSession(sid: string): Promise<unknown> {
    return this.json(`/sessions/${sid}`, { method: "DELETE" });
  }

  /** Consume the event stream, invoking onEvent per parsed line.

      Resolves when the stream ends; resume with fromStep after drops. */
  async streamEvents(
    sid: string,
    onEvent: (ev: RunEvent) => void,
    fromStep = 0,
  ): Promise<void> {
    const res = await this.fetchFn(
      `${this.base}/sessions/${sid}/events?from_step=${fromStep}`,
    );
    if (!res.ok || !res.body) {
      throw new ApiError(res.status, "event stream unavailable");
    }
    const reader = res.body.getReader();
    const decoder = new TextDecoder();
    const parser = parseNdjsonChunks();
    for (;;) {
      const { done, value } = await reader.read();
      if (done) break;
      for (const ev of parser.push(decoder.decode(value, { stream: true }))) {
        onEvent(ev);
      }
    }
    for (const ev of parser.flush()) onEvent(ev);
  }
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public body: string,
  ) {
    super(`HTTP ${status}: ${body}`);
  }
}
